#include "babylab/sweep.hpp"

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <tuple>

#include "babylab/checkpoint.hpp"
#include "babylab/error.hpp"
#include "babylab/evaluator.hpp"

namespace fs = std::filesystem;

namespace babylab {

namespace {

auto sort_key(const Hyperparams& hp) {
  return std::make_tuple(hp.epochs, hp.num_patterns, hp.batch_size);
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<RunRecord> read_record(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    auto record = RunRecord::from_json(nlohmann::json::parse(in));
    if (record.hash != path.stem().string()) return std::nullopt;
    return record;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_manifest(const fs::path& dir, const std::vector<Hyperparams>& planned,
                    const ModelConfig& config) {
  nlohmann::json manifest;
  manifest["model"] = config.to_json();
  manifest["planned"] = nlohmann::json::array();
  manifest["completed"] = nlohmann::json::array();
  for (const auto& hp : planned) {
    const auto hash = run_hash(hp, config);
    manifest["planned"].push_back(hash);
    if (fs::exists(dir / (hash + ".json"))) manifest["completed"].push_back(hash);
  }
  write_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

}  // namespace

std::vector<Hyperparams> expand_grid(const SweepGrid& grid, const Hyperparams& base) {
  std::vector<Hyperparams> out;
  for (auto e : grid.epochs) {
    for (auto p : grid.num_patterns) {
      for (auto b : grid.batch_sizes) {
        Hyperparams hp = base;
        hp.epochs = e;
        hp.num_patterns = p;
        hp.batch_size = b;
        out.push_back(hp);
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
  return out;
}

RunRecord run_one(const ModelConfig& config, const Hyperparams& hp, const SweepInputs& inputs,
                  const std::string& checkpoint_path, const std::string& checkpoint_ref,
                  const TrainOptions& train) {
  RunRecord record;
  record.hyperparams = hp;
  record.config = config;
  record.hash = run_hash(hp, config);
  const auto start = std::chrono::steady_clock::now();
  try {
    auto trained = pretrain(config, hp, inputs.sentences, train);
    record.steps = trained.steps;
    record.loss_curve = std::move(trained.loss_curve);
    const auto report = evaluate_suite(trained.params, *inputs.vocab, inputs.suite);
    for (const auto& t : report.tasks) record.eval[t.task] = t.accuracy;
    record.overall = mean_accuracy(record.eval);
    if (!checkpoint_path.empty()) {
      save_checkpoint(checkpoint_path, {std::move(trained.params), hp.seed, record.steps,
                                        *inputs.vocab});
      record.checkpoint = checkpoint_ref;
    }
  } catch (const std::exception& e) {
    record.status = "failed";
    record.error = e.what();
    record.loss_curve.clear();
    record.eval.clear();
    record.overall = 0.0;
  }
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

void write_record(const std::string& sweep_dir, const RunRecord& record) {
  write_atomic(fs::path(sweep_dir) / (record.hash + ".json"), record.to_json().dump(1) + "\n");
}

std::vector<RunRecord> load_sweep(const std::string& sweep_dir) {
  std::vector<RunRecord> records;
  if (!fs::is_directory(sweep_dir)) throw Error("sweep directory " + sweep_dir + " does not exist");
  for (const auto& entry : fs::directory_iterator(sweep_dir)) {
    const auto& path = entry.path();
    if (path.extension() != ".json" || path.filename() == "manifest.json") continue;
    if (auto r = read_record(path)) records.push_back(std::move(*r));
  }
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tuple_cat(sort_key(a.hyperparams), std::tie(a.hash)) <
           std::tuple_cat(sort_key(b.hyperparams), std::tie(b.hash));
  });
  return records;
}

std::vector<RunRecord> run_sweep(const ModelConfig& config, std::vector<Hyperparams> grid,
                                 const SweepInputs& inputs, const std::string& sweep_dir,
                                 const SweepOptions& options) {
  if (grid.empty()) throw Error("sweep grid is empty");
  if (inputs.vocab == nullptr) throw Error("sweep needs a vocabulary");
  std::stable_sort(grid.begin(), grid.end(),
                   [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
  grid.resize(std::min(grid.size(), options.budget));
  if (grid.empty()) return {};
  for (const auto& hp : grid) hp.validate();

  const fs::path dir(sweep_dir);
  fs::create_directories(dir);
  if (options.save_checkpoints) fs::create_directories(dir / "checkpoints");

  std::vector<Hyperparams> pending;
  for (const auto& hp : grid) {
    if (!read_record(dir / (run_hash(hp, config) + ".json"))) pending.push_back(hp);
  }

  auto execute = [&](const Hyperparams& hp) {
    const auto hash = run_hash(hp, config);
    const std::string ckpt =
        options.save_checkpoints ? (dir / "checkpoints" / (hash + ".ckpt")).string() : "";
    const std::string ref = options.save_checkpoints ? "checkpoints/" + hash + ".ckpt" : "";
    const auto record = run_one(config, hp, inputs, ckpt, ref, options.train);
    write_record(sweep_dir, record);
    if (options.on_record) options.on_record(record);
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, pending.size()));
  if (jobs <= 1) {
    for (const auto& hp : pending) {
      execute(hp);
      write_manifest(dir, grid, config);
    }
  } else {
    // Worker k handles pending runs k, k + jobs, ...; each record file has a
    // single writer and the manifest is only written by this process.
    std::vector<pid_t> workers;
    for (std::size_t k = 0; k < jobs; ++k) {
      const pid_t pid = ::fork();
      if (pid < 0) throw Error("fork failed while starting sweep workers");
      if (pid == 0) {
        int code = 0;
        try {
          for (std::size_t i = k; i < pending.size(); i += jobs) execute(pending[i]);
        } catch (...) {
          code = 1;
        }
        ::_exit(code);
      }
      workers.push_back(pid);
    }
    bool worker_failed = false;
    for (pid_t pid : workers) {
      int status = 0;
      ::waitpid(pid, &status, 0);
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) worker_failed = true;
    }
    if (worker_failed) throw Error("a sweep worker process failed; rerun to resume");
  }
  write_manifest(dir, grid, config);

  std::vector<RunRecord> records;
  for (const auto& hp : grid) {
    auto r = read_record(dir / (run_hash(hp, config) + ".json"));
    if (!r) throw Error("record for run " + run_hash(hp, config) + " is missing after sweep");
    records.push_back(std::move(*r));
  }
  return records;
}

bool ranks_above(const RunRecord& a, const RunRecord& b) {
  if (a.overall != b.overall) return a.overall > b.overall;
  return std::tuple_cat(sort_key(a.hyperparams), std::tie(a.hash)) <
         std::tuple_cat(sort_key(b.hyperparams), std::tie(b.hash));
}

const RunRecord& select_best(std::span<const RunRecord> records) {
  const RunRecord* best = nullptr;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    if (best == nullptr || ranks_above(r, *best)) best = &r;
  }
  if (best == nullptr) throw Error("no successful runs to select from");
  return *best;
}

}  // namespace babylab
