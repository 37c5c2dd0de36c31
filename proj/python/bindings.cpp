#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "babylab/analysis.hpp"
#include "babylab/checkpoint.hpp"
#include "babylab/config.hpp"
#include "babylab/error.hpp"
#include "babylab/evaluator.hpp"
#include "babylab/masking.hpp"
#include "babylab/sweep.hpp"
#include "babylab/toy_grammar.hpp"
#include "babylab/trainer.hpp"

namespace py = pybind11;
using namespace babylab;

namespace {

std::vector<MinimalPair> to_pairs(const std::vector<std::tuple<std::string, std::string,
                                                               std::string>>& pairs) {
  std::vector<MinimalPair> out;
  for (const auto& [good, bad, task] : pairs) out.push_back({good, bad, task});
  return out;
}

py::array_t<float> as_array(const Parameters& p) {
  return py::array_t<float>(static_cast<py::ssize_t>(p.data.size()), p.data.data());
}

Batch batch_from(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& ids) {
  if (ids.ndim() != 2) throw Error("input_ids must be a 2-D array");
  Batch b;
  b.batch_size = static_cast<std::size_t>(ids.shape(0));
  b.length = static_cast<std::size_t>(ids.shape(1));
  b.input_ids.assign(ids.data(), ids.data() + ids.size());
  return b;
}

py::object json_to_py(const nlohmann::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

}  // namespace

PYBIND11_MODULE(_babylab, m) {
  m.doc() = "Small masked-language-model pretraining and evaluation lab";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def("save", &Vocabulary::save, py::arg("path"))
      .def("encode", &Vocabulary::encode, py::arg("text"))
      .def("decode", [](const Vocabulary& v, const std::vector<TokenId>& ids) { return v.decode(ids); },
           py::arg("ids"))
      .def("token", &Vocabulary::token, py::arg("id"))
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def_property_readonly("merges", &Vocabulary::merges)
      .def("__len__", &Vocabulary::size)
      .def("to_json", [](const Vocabulary& v) { return json_to_py(v.to_json()); });

  m.def("train_bpe",
        [](const std::vector<std::string>& corpus, std::size_t size) {
          return train_bpe(corpus, size);
        },
        py::arg("corpus"), py::arg("vocab_size"));
  m.def("bpe_capacity",
        [](const std::vector<std::string>& corpus) { return bpe_capacity(corpus); },
        py::arg("corpus"));

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("preset_name", &ModelConfig::preset_name)
      .def_readwrite("hidden_size", &ModelConfig::hidden_size)
      .def_readwrite("intermediate_size", &ModelConfig::intermediate_size)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("num_layers", &ModelConfig::num_layers)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("max_context", &ModelConfig::max_context)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def("validate", &ModelConfig::validate)
      .def("to_json", [](const ModelConfig& c) { return json_to_py(c.to_json()); })
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  m.def("preset_config", &preset_config, py::arg("name"),
        py::arg("vocab_size") = kDefaultVocabSize, py::arg("max_context") = kDefaultMaxContext);
  m.def("count_parameters", &count_parameters, py::arg("config"));

  py::class_<Parameters>(m, "Parameters")
      .def_readonly("config", &Parameters::config)
      .def_property_readonly("data", &as_array)
      .def("__len__", [](const Parameters& p) { return p.data.size(); });
  m.def("init_parameters", &init_parameters, py::arg("config"), py::arg("seed"));

  m.def("forward",
        [](const Parameters& p,
           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& ids) {
          const auto logits = forward(p, batch_from(ids));
          std::vector<py::ssize_t> shape(logits.shape.begin(), logits.shape.end());
          return py::array_t<float>(shape, logits.data.data());
        },
        py::arg("params"), py::arg("input_ids"), "Eval-mode logits [batch, length, vocab].");

  m.def("generate_patterns", [](std::size_t len, std::size_t num, double prob, std::uint64_t seed) {
        std::vector<std::vector<std::uint32_t>> out;
        for (auto& p : generate_patterns(len, num, prob, seed)) out.push_back(std::move(p.positions));
        return out;
      },
      py::arg("sentence_len"), py::arg("num_patterns"), py::arg("mask_prob") = kDefaultMaskProb,
      py::arg("seed") = 0);

  m.def("generate_toy_grammar",
        [](std::size_t n, std::uint64_t seed, std::size_t pairs) {
          auto data = generate_toy_grammar(n, seed, pairs);
          std::vector<std::tuple<std::string, std::string, std::string>> out;
          for (auto& p : data.pairs) out.emplace_back(p.good, p.bad, p.task);
          return std::make_pair(std::move(data.sentences), std::move(out));
        },
        py::arg("num_sentences"), py::arg("seed") = 0,
        py::arg("num_pairs") = kDefaultToySuitePairs,
        "Returns (sentences, [(good, bad, task), ...]).");

  py::class_<Hyperparams>(m, "Hyperparams")
      .def(py::init<>())
      .def_readwrite("preset_name", &Hyperparams::preset_name)
      .def_readwrite("epochs", &Hyperparams::epochs)
      .def_readwrite("num_patterns", &Hyperparams::num_patterns)
      .def_readwrite("batch_size", &Hyperparams::batch_size)
      .def_readwrite("learning_rate", &Hyperparams::learning_rate)
      .def_readwrite("mask_prob", &Hyperparams::mask_prob)
      .def_readwrite("clip_norm", &Hyperparams::clip_norm)
      .def_readwrite("seed", &Hyperparams::seed)
      .def("validate", &Hyperparams::validate)
      .def("to_json", [](const Hyperparams& h) { return json_to_py(h.to_json()); });

  m.def("pretrain",
        [](const ModelConfig& config, const Hyperparams& hp,
           const std::vector<std::string>& sentences, const Vocabulary& vocab) {
          const auto corpus = make_corpus(sentences, vocab, config.max_context);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = pretrain(config, hp, corpus.sentences);
          }
          return std::make_pair(std::move(r.params), std::move(r.loss_curve));
        },
        py::arg("config"), py::arg("hyperparams"), py::arg("sentences"), py::arg("vocab"),
        "Returns (parameters, per-step losses).");

  m.def("pseudo_log_likelihood",
        [](const Parameters& p, const Vocabulary& v, const std::string& s) {
          return pseudo_log_likelihood(p, v, s);
        },
        py::arg("params"), py::arg("vocab"), py::arg("sentence"));

  m.def("evaluate_suite",
        [](const Parameters& p, const Vocabulary& v,
           const std::vector<std::tuple<std::string, std::string, std::string>>& pairs) {
          const auto report = evaluate_suite(p, v, to_pairs(pairs));
          std::map<std::string, double> out;
          for (const auto& t : report.tasks) out[t.task] = t.accuracy;
          out[kOverallColumn] = report.overall;
          return out;
        },
        py::arg("params"), py::arg("vocab"), py::arg("pairs"),
        "Task accuracies plus 'overall'.");

  m.def("spearman",
        [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
        py::arg("x"), py::arg("y"));

  m.def("save_checkpoint",
        [](const std::string& path, const Parameters& p, std::uint64_t seed, std::uint64_t step,
           std::optional<Vocabulary> vocab) { save_checkpoint(path, {p, seed, step, vocab}); },
        py::arg("path"), py::arg("params"), py::arg("seed") = 0, py::arg("step") = 0,
        py::arg("vocab") = std::nullopt);
  m.def("load_checkpoint",
        [](const std::string& path) {
          auto c = load_checkpoint(path);
          return py::make_tuple(std::move(c.params), c.seed, c.step, std::move(c.vocab));
        },
        py::arg("path"), "Returns (parameters, seed, step, vocabulary or None).");

  m.def("load_sweep",
        [](const std::string& dir) {
          py::list out;
          for (const auto& r : load_sweep(dir)) out.append(json_to_py(r.to_json()));
          return out;
        },
        py::arg("sweep_dir"));
  m.def("select_best", [](const std::string& dir) { return select_best(load_sweep(dir)).hash; },
        py::arg("sweep_dir"), "Hash of the winning run.");
  m.def("emit_report",
        [](const std::string& dir, const std::string& out) { emit_report(load_sweep(dir), out); },
        py::arg("sweep_dir"), py::arg("out_dir"));

  m.def("default_config", [] { return json_to_py(default_config_json()); });
  m.def("config_schema", [] { return json_to_py(config_schema()); });
}
