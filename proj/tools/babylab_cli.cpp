// babylab: tokenizer training, toy data generation, MLM pretraining, sweeps,
// minimal-pair evaluation and cross-run analysis behind one entry point.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "babylab/analysis.hpp"
#include "babylab/checkpoint.hpp"
#include "babylab/config.hpp"
#include "babylab/corpus.hpp"
#include "babylab/error.hpp"
#include "babylab/evaluator.hpp"
#include "babylab/hash.hpp"
#include "babylab/sweep.hpp"
#include "babylab/tokenizer.hpp"
#include "babylab/toy_grammar.hpp"
#include "babylab/trainer.hpp"

namespace fs = std::filesystem;
using namespace babylab;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> budget;
};

fs::path output_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv("BABYLAB_OUT");
  return fs::path(root && *root ? root : "babylab_out") / command;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

RunConfig load_run_config(const CommonFlags& flags) {
  auto doc = resolve_config(flags.config, flags.overrides);
  if (flags.seed) doc["seed"] = *flags.seed;
  if (flags.jobs) doc["sweep"]["jobs"] = *flags.jobs;
  if (flags.budget) doc["sweep"]["budget"] = *flags.budget;
  return parse_run_config(doc);
}

void require(const std::string& value, const char* key) {
  if (value.empty()) throw Error(std::string("config key '") + key + "' must be set");
}

void add_config_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON configuration file");
  cmd->add_option("--set", flags.overrides, "Override a config value: dotted.key=value")
      ->allow_extra_args(false);
  cmd->add_option("--seed", flags.seed, "Top-level random seed");
}

void cmd_tokenizer(const std::string& corpus_path, std::size_t vocab_size, const fs::path& out) {
  std::vector<std::string> lines;
  for (auto& [number, text] : read_sentence_lines(corpus_path)) lines.push_back(std::move(text));
  if (lines.empty()) throw Error("corpus " + corpus_path + " has no non-empty lines");
  const auto vocab = train_bpe(lines, vocab_size);
  fs::create_directories(out);
  vocab.save((out / "vocab.json").string());
  std::cout << "wrote " << (out / "vocab.json").string() << " (" << vocab.size() << " tokens, "
            << vocab.merges().size() << " merges)\n";
}

void cmd_gen_toy(std::size_t n, std::size_t pairs, std::uint64_t seed, const fs::path& out) {
  write_toy_grammar(generate_toy_grammar(n, seed, pairs), out.string());
  std::cout << "wrote " << (out / "corpus.txt").string() << " (" << n << " sentences) and "
            << (out / "suite.jsonl").string() << " (" << pairs << " pairs)\n";
}

void cmd_pretrain(const CommonFlags& flags, const fs::path& out) {
  const RunConfig rc = load_run_config(flags);
  require(rc.corpus_path, "data.corpus");
  require(rc.vocab_path, "data.vocab");
  const auto vocab = Vocabulary::load(rc.vocab_path);
  const ModelConfig model = rc.model_config(vocab.size());
  const auto corpus = load_corpus(rc.corpus_path, vocab, model.max_context);
  std::vector<MinimalPair> suite;
  if (!rc.suite_path.empty()) suite = read_suite(rc.suite_path);

  fs::create_directories(out);
  write_json(out / "config.json", rc.to_json());
  TrainOptions options;
  options.adamw = rc.adamw;
  options.on_step = [](std::size_t step, std::size_t total, double loss) {
    if ((step + 1) % 100 == 0 || step + 1 == total) {
      std::cerr << "step " << step + 1 << "/" << total << " loss " << loss << '\n';
    }
  };
  const std::string ckpt = (out / "model.ckpt").string();
  RunRecord record;
  if (suite.empty()) {
    const auto start = std::chrono::steady_clock::now();
    auto result = pretrain(model, rc.hyperparams, corpus.sentences, options);
    record.hyperparams = rc.hyperparams;
    record.config = model;
    record.hash = run_hash(rc.hyperparams, model);
    record.steps = result.steps;
    record.loss_curve = std::move(result.loss_curve);
    save_checkpoint(ckpt, {std::move(result.params), rc.seed, record.steps, vocab});
    record.checkpoint = "model.ckpt";
    record.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } else {
    const SweepInputs inputs{&vocab, corpus.sentences, suite};
    record = run_one(model, rc.hyperparams, inputs, ckpt, "model.ckpt", options);
    if (!record.ok()) throw Error(record.error);
  }
  write_json(out / "record.json", record.to_json());
  std::cout << "wrote " << ckpt << " and " << (out / "record.json").string();
  if (!suite.empty()) std::cout << " (overall " << format4(record.overall) << ")";
  std::cout << '\n';
}

void cmd_sweep(const CommonFlags& flags, const fs::path& out) {
  const RunConfig rc = load_run_config(flags);
  require(rc.corpus_path, "data.corpus");
  require(rc.vocab_path, "data.vocab");
  require(rc.suite_path, "data.suite");
  const auto vocab = Vocabulary::load(rc.vocab_path);
  const ModelConfig model = rc.model_config(vocab.size());
  const auto corpus = load_corpus(rc.corpus_path, vocab, model.max_context);
  const auto suite = read_suite(rc.suite_path);

  fs::create_directories(out);
  write_json(out / "config.json", rc.to_json());
  SweepOptions options;
  options.budget = rc.budget;
  options.jobs = rc.jobs;
  options.train.adamw = rc.adamw;
  options.on_record = [](const RunRecord& r) {
    std::cerr << "run " << r.hash << " e" << r.hyperparams.epochs << " p"
              << r.hyperparams.num_patterns << " b" << r.hyperparams.batch_size << ": "
              << (r.ok() ? "overall " + format4(r.overall) : "failed: " + r.error) << '\n';
  };
  const auto grid = expand_grid(rc.grid, rc.hyperparams);
  const SweepInputs inputs{&vocab, corpus.sentences, suite};
  const auto records = run_sweep(model, grid, inputs, out.string(), options);
  std::cout << "sweep " << out.string() << ": " << records.size() << " runs";
  if (!records.empty()) {
    try {
      const auto& best = select_best(records);
      std::cout << ", best " << best.hash << " (overall " << format4(best.overall) << ")";
    } catch (const Error&) {
      std::cout << ", no successful runs";
    }
  }
  std::cout << '\n';
}

void cmd_eval(const std::string& checkpoint, const std::string& suite_path,
              const std::string& vocab_path, const fs::path& out) {
  if (!fs::exists(checkpoint)) throw Error("checkpoint not found: " + checkpoint);
  auto ckpt = load_checkpoint(checkpoint);
  Vocabulary vocab;
  if (!vocab_path.empty()) {
    vocab = Vocabulary::load(vocab_path);
  } else if (ckpt.vocab) {
    vocab = *ckpt.vocab;
  } else {
    throw Error("checkpoint " + checkpoint + " has no embedded vocabulary; pass --vocab");
  }
  if (vocab.size() != ckpt.params.config.vocab_size) {
    throw Error("vocabulary size does not match checkpoint " + checkpoint);
  }
  const auto suite = read_suite(suite_path);
  const auto report = evaluate_suite(ckpt.params, vocab, suite);
  fs::create_directories(out);
  write_json(out / "report.json",
             report_to_json(report, hash_file(checkpoint), suite_hash(suite)));
  for (const auto& t : report.tasks) {
    std::cout << t.task << ": " << format4(t.accuracy) << " (" << t.num_correct << "/"
              << t.num_pairs << ")\n";
  }
  std::cout << "overall: " << format4(report.overall) << '\n';
}

void cmd_analyze(const std::string& sweep_dir, const fs::path& out) {
  const auto records = load_sweep(sweep_dir);
  if (records.empty()) throw Error("no run records found in " + sweep_dir);
  emit_report(records, out.string());
  std::cout << "wrote report for " << records.size() << " runs to " << out.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"babylab: small masked language models, mask-pattern augmentation, "
               "minimal-pair evaluation"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* tok = app.add_subcommand("tokenizer", "Train a byte-level BPE vocabulary");
  std::string tok_corpus;
  std::size_t vocab_size = kDefaultVocabSize;
  tok->add_option("--corpus", tok_corpus, "One-sentence-per-line text file");
  tok->add_option("--vocab-size", vocab_size, "Vocabulary size including specials");
  add_config_flags(tok, flags);
  tok->add_option("--out", flags.out, "Output directory");

  auto* gen = app.add_subcommand("gen-toy", "Generate a toy agreement corpus and suite");
  std::size_t gen_n = 10000, gen_pairs = kDefaultToySuitePairs;
  gen->add_option("--n", gen_n, "Number of corpus sentences")->check(CLI::PositiveNumber);
  gen->add_option("--pairs", gen_pairs, "Number of minimal pairs");
  gen->add_option("--seed", flags.seed, "Random seed");
  gen->add_option("--out", flags.out, "Output directory");

  auto* pre = app.add_subcommand("pretrain", "Pretrain one model");
  add_config_flags(pre, flags);
  pre->add_option("--out", flags.out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Run a resumable hyperparameter sweep");
  add_config_flags(sweep, flags);
  sweep->add_option("--budget", flags.budget, "Maximum number of runs");
  sweep->add_option("--jobs", flags.jobs, "Parallel worker processes");
  sweep->add_option("--out", flags.out, "Sweep directory");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a minimal-pair suite");
  std::string ckpt_path, suite_path, vocab_path;
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--suite", suite_path, "Minimal-pair suite (JSON lines)")->required();
  eval->add_option("--vocab", vocab_path, "Vocabulary file (default: embedded)");
  eval->add_option("--out", flags.out, "Output directory");

  auto* analyze = app.add_subcommand("analyze", "Correlation and ranking report for a sweep");
  std::string sweep_dir;
  analyze->add_option("--sweep", sweep_dir, "Sweep directory")->required();
  analyze->add_option("--out", flags.out, "Output directory");

  auto* config = app.add_subcommand("config", "Print the resolved configuration");
  bool schema = false;
  add_config_flags(config, flags);
  config->add_flag("--schema", schema, "Print the configuration JSON schema instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (tok->parsed()) {
      if (tok_corpus.empty()) {
        tok_corpus = load_run_config(flags).corpus_path;
        require(tok_corpus, "data.corpus");
      }
      cmd_tokenizer(tok_corpus, vocab_size, output_dir(flags.out, "tokenizer"));
    } else if (gen->parsed()) {
      cmd_gen_toy(gen_n, gen_pairs, flags.seed.value_or(0), output_dir(flags.out, "gen-toy"));
    } else if (pre->parsed()) {
      cmd_pretrain(flags, output_dir(flags.out, "pretrain"));
    } else if (sweep->parsed()) {
      cmd_sweep(flags, output_dir(flags.out, "sweep"));
    } else if (eval->parsed()) {
      cmd_eval(ckpt_path, suite_path, vocab_path, output_dir(flags.out, "eval"));
    } else if (analyze->parsed()) {
      cmd_analyze(sweep_dir, output_dir(flags.out, "analyze"));
    } else if (config->parsed()) {
      if (schema) {
        std::cout << config_schema().dump(2) << '\n';
      } else {
        std::cout << load_run_config(flags).to_json().dump(2) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    std::cerr << "babylab: error: " << msg << '\n';
    return 1;
  }
  return 0;
}
