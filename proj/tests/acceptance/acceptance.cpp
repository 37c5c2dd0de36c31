// Acceptance gate: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails. Pass criterion names as arguments to run a subset.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "../unit/test_util.hpp"
#include "babylab/analysis.hpp"
#include "babylab/evaluator.hpp"
#include "babylab/random.hpp"
#include "babylab/sweep.hpp"
#include "babylab/trainer.hpp"

using namespace babylab;
using namespace babylab::test;
namespace fs = std::filesystem;

namespace {

// Learning rate for the toy learning experiments (see README).
constexpr double kToyLearningRate = 2e-3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Hyperparams toy_hp(std::size_t epochs, std::size_t patterns, std::size_t batch,
                   std::uint64_t seed) {
  Hyperparams hp;
  hp.preset_name = "xs";
  hp.epochs = epochs;
  hp.num_patterns = patterns;
  hp.batch_size = batch;
  hp.learning_rate = kToyLearningRate;
  hp.seed = seed;
  return hp;
}

Outcome param_counts() {
  const std::map<std::string, double> reported = {
      {"xs", 0.75}, {"s", 1.8}, {"base", 8.5}, {"l", 29.7}, {"xl", 92.0}};
  Outcome o{true, ""};
  for (const auto& name : {"xs", "s", "base", "l", "xl"}) {
    const double m = static_cast<double>(count_parameters(preset_config(name, 8192, 128))) / 1e6;
    const double rel = std::abs(m - reported.at(name)) / reported.at(name);
    o.pass = o.pass && rel <= 0.10;
    o.detail += std::string(name) + "=" + fmt("%.3fM", m) + " ";
  }
  return o;
}

Outcome gradient_check() {
  const auto c = tiny_config(37, 16);
  auto p = cast_parameters<double>(init_parameters(c, 1));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& v : p.data) v += n(rng);
  const auto batch = random_batch({7, 5}, c.vocab_size, 3, 9);
  double worst = 0;
  for (bool train : {false, true}) {
    const ForwardOptions opts{train, 17};
    AlignedVector<double> grad, scratch;
    loss_and_gradient(p, batch, opts, grad);
    std::uniform_int_distribution<std::size_t> pick(0, p.data.size() - 1);
    for (int k = 0; k < 200; ++k) {
      const std::size_t i = pick(rng);
      auto plus = p, minus = p;
      plus.data[i] += 1e-3;
      minus.data[i] -= 1e-3;
      const double fd = (loss_and_gradient(plus, batch, opts, scratch) -
                         loss_and_gradient(minus, batch, opts, scratch)) /
                        2e-3;
      const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
  }
  return {worst < 1e-3, "max rel err " + fmt("%.2e", worst) + " (200 coords, eval + dropout)"};
}

Outcome oracle_equivalences() {
  // Forward.
  const auto c = tiny_config(37, 16);
  auto p = cast_parameters<double>(init_parameters(c, 4));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& v : p.data) v += n(rng);
  const auto batch = random_batch({9, 4, 6}, c.vocab_size, 6, 12);
  const auto logits = forward(p, batch);
  const auto ref = naive_logits(p, batch);
  long double err = 0, scale = 0;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    for (std::size_t t = 0; t < batch.length; ++t) {
      if (!batch.valid(b, t)) continue;
      for (std::size_t v = 0; v < c.vocab_size; ++v) {
        err = std::max(err, std::abs(logits.data[(b * batch.length + t) * c.vocab_size + v] -
                                     ref[b][t][v]));
        scale = std::max(scale, std::abs(ref[b][t][v]));
      }
    }
  }
  const double fwd_rel = static_cast<double>(err / scale);

  // PLL.
  const auto toy = toy_data(300, 7, 30);
  auto tp = cast_parameters<double>(init_parameters(tiny_config(toy.vocab.size(), 128), 8));
  for (auto& v : tp.data) v += n(rng);
  double pll_err = 0;
  for (const auto& pair : toy.raw.pairs) {
    for (const auto& s : {pair.good, pair.bad}) {
      pll_err = std::max(pll_err, static_cast<double>(std::abs(
                                      pseudo_log_likelihood(tp, toy.vocab, s) -
                                      naive_pll(tp, toy.vocab, s))));
    }
  }

  // Spearman and correlation matrix on a 36-run table with ties.
  std::uniform_int_distribution<int> q(40, 90);
  std::vector<RunRecord> records;
  for (std::size_t i = 0; i < 36; ++i) {
    RunRecord r;
    r.hyperparams.preset_name = "custom";
    r.hyperparams.epochs = 1 + i;
    r.config = preset_config("xs");
    r.hash = run_hash(r.hyperparams, r.config);
    r.eval = {{"a", q(rng) / 100.0}, {"b", q(rng) / 100.0}, {"c", q(rng) / 100.0}};
    r.overall = mean_accuracy(r.eval);
    records.push_back(r);
  }
  const auto table = make_score_table(records);
  const auto m = correlation_matrix(table);
  double corr_err = 0;
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    for (std::size_t j = 0; j < m.labels.size(); ++j) {
      const double want = static_cast<double>(brute_spearman(table.column(i), table.column(j)));
      corr_err = std::max(corr_err, std::abs(m.values[i][j].value_or(NAN) - want));
      if (i != j) {
        corr_err = std::max(corr_err, std::abs(spearman(table.column(i), table.column(j)) - want));
      }
    }
  }
  const bool pass = fwd_rel < 1e-6 && pll_err < 1e-6 && corr_err < 1e-12;
  return {pass, "forward rel " + fmt("%.1e", fwd_rel) + ", PLL abs " + fmt("%.1e", pll_err) +
                    ", spearman " + fmt("%.1e", corr_err)};
}

Outcome toy_learning() {
  const auto start = std::chrono::steady_clock::now();
  const auto toy = toy_data(10000, 1, 1000);
  const auto config = preset_config("xs", toy.vocab.size());
  const auto untrained = evaluate_suite(init_parameters(config, derive_seed(1, "init")),
                                        toy.vocab, toy.raw.pairs);
  const auto hp = toy_hp(5, 10, 32, 1);
  const auto trained = pretrain(config, hp, toy.corpus.sentences);
  const auto report = evaluate_suite(trained.params, toy.vocab, toy.raw.pairs);
  const double minutes = seconds_since(start) / 60;
  const bool pass = report.overall >= 0.90 && untrained.overall >= 0.44 &&
                    untrained.overall <= 0.56 && minutes <= 15;
  return {pass, "trained " + fmt("%.3f", report.overall) + ", untrained " +
                    fmt("%.3f", untrained.overall) + ", " + fmt("%.1f", minutes) + " min"};
}

Outcome augmentation_effect() {
  const auto start = std::chrono::steady_clock::now();
  const auto toy = toy_data(5000, 2, 1000);
  const auto config = preset_config("xs", toy.vocab.size());
  double p1 = 0, p10 = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (std::size_t patterns : {1, 10}) {
      const auto r = pretrain(config, toy_hp(1, patterns, 32, seed), toy.corpus.sentences);
      const double acc = evaluate_suite(r.params, toy.vocab, toy.raw.pairs).overall / 3;
      (patterns == 1 ? p1 : p10) += acc;
    }
  }
  const double minutes = seconds_since(start) / 60;
  return {p10 >= p1 - 0.01 && minutes <= 20, "p10 " + fmt("%.3f", p10) + " vs p1 " +
                                                 fmt("%.3f", p1) + ", " + fmt("%.1f", minutes) +
                                                 " min"};
}

Outcome determinism() {
  const auto toy = toy_data(1000, 3, 200);
  const auto config = preset_config("xs", toy.vocab.size());
  const auto hp = toy_hp(1, 5, 32, 9);
  const auto a = pretrain(config, hp, toy.corpus.sentences);
  const auto b = pretrain(config, hp, toy.corpus.sentences);
  double diff = a.loss_curve.size() == b.loss_curve.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.loss_curve.size(), b.loss_curve.size()); ++i) {
    diff = std::max(diff, std::abs(a.loss_curve[i] - b.loss_curve[i]));
  }
  const auto ra = report_to_json(evaluate_suite(a.params, toy.vocab, toy.raw.pairs), "", "");
  const auto rb = report_to_json(evaluate_suite(b.params, toy.vocab, toy.raw.pairs), "", "");
  return {diff <= 1e-7 && ra == rb, "max loss diff " + fmt("%.1e", diff) + ", reports " +
                                        (ra == rb ? "identical" : "differ")};
}

struct SweepFixture {
  ToyData toy = toy_data(500, 4, 200);
  ModelConfig config = preset_config("xs", toy.vocab.size());
  std::vector<Hyperparams> grid = expand_grid(SweepGrid{{1}, {1, 5, 10}, {16, 32, 64, 128}},
                                              toy_hp(1, 1, 16, 11));
  SweepInputs inputs() const { return {&toy.vocab, toy.corpus.sentences, toy.raw.pairs}; }
};

std::vector<RunRecord> g_sweep_records;

Outcome sweep_robustness() {
  SweepFixture f;
  const fs::path root = fs::temp_directory_path() / ("babylab_accept_" + std::to_string(getpid()));
  fs::remove_all(root);
  const auto full = run_sweep(f.config, f.grid, f.inputs(), (root / "full").string(), {});

  // Child process is killed with SIGKILL while the 6th run is mid-training.
  const pid_t pid = fork();
  if (pid == 0) {
    SweepOptions opts;
    std::size_t started = 0;
    opts.train.on_step = [&](std::size_t step, std::size_t, double) {
      if (step == 0) ++started;
      if (started == 6 && step == 3) ::kill(::getpid(), SIGKILL);
    };
    run_sweep(f.config, f.grid, f.inputs(), (root / "resumed").string(), opts);
    ::_exit(0);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  const bool killed = WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
  const std::size_t before = load_sweep((root / "resumed").string()).size();
  const auto resumed = run_sweep(f.config, f.grid, f.inputs(), (root / "resumed").string(), {});

  bool same = full.size() == 12 && resumed.size() == full.size();
  for (std::size_t i = 0; same && i < full.size(); ++i) {
    auto a = full[i].to_json(), b = resumed[i].to_json();
    a.erase("wall_time");
    b.erase("wall_time");
    same = a == b;
  }
  const bool same_best = select_best(full).hash == select_best(resumed).hash;
  g_sweep_records = full;
  fs::remove_all(root);
  return {killed && before == 5 && same && same_best,
          std::string(killed ? "killed" : "NOT killed") + " after " + std::to_string(before) +
              "/12 runs; records " + (same ? "identical" : "differ") + ", winner " +
              (same_best ? "same" : "differs")};
}

Outcome masking_statistics() {
  std::size_t total = 0, count = 0, empty = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    for (const auto& p : generate_patterns(20, 10, 0.15, derive_seed(12, "patterns", i))) {
      total += p.positions.size();
      empty += p.positions.empty();
      ++count;
    }
  }
  const double mean = static_cast<double>(total) / static_cast<double>(count);
  return {count == 100000 && empty == 0 && mean >= 2.9 && mean <= 3.3,
          "mean " + fmt("%.4f", mean) + " over " + std::to_string(count) + " patterns, " +
              std::to_string(empty) + " empty"};
}

Outcome analysis_outputs() {
  if (g_sweep_records.empty()) {
    SweepFixture f;
    const fs::path dir = fs::temp_directory_path() / ("babylab_accept_an_" + std::to_string(getpid()));
    SweepOptions opts;
    opts.save_checkpoints = false;
    g_sweep_records = run_sweep(f.config, f.grid, f.inputs(), dir.string(), opts);
    fs::remove_all(dir);
  }
  const auto& records = g_sweep_records;
  TempDir out("accept_report");
  emit_report(records, out.str());
  const auto table = make_score_table(records);
  const auto m = correlation_matrix(table);
  bool symmetric = true;
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    if (m.values[i][i] && *m.values[i][i] != 1.0) symmetric = false;
    if (!m.values[i][i]) {
      // Only a constant column may be undefined.
      const auto col = table.column(i);
      if (std::adjacent_find(col.begin(), col.end(), std::not_equal_to<>()) != col.end()) {
        symmetric = false;
      }
    }
    for (std::size_t j = 0; j < m.labels.size(); ++j) {
      if (m.values[i][j] != m.values[j][i]) symmetric = false;
    }
  }
  const auto tr = rank_trajectories(table);
  const bool monotone = std::is_sorted(tr.series[0].begin(), tr.series[0].end());

  const auto md = read_file(out.str("leaderboard.md"));
  const auto best = select_best(records).hash;
  const auto row = md.find("| 1 | ");
  const bool top = row != std::string::npos && md.compare(row + 6, best.size(), best) == 0;

  bool files = true;
  std::string why;
  for (const char* svg : {"correlation.svg", "trajectories.svg"}) {
    files = files && well_formed_xml(read_file(out.str(svg)), why);
  }
  for (const char* csv : {"scores.csv", "correlation.csv"}) {
    const auto rows = parse_csv(read_file(out.str(csv)));
    files = files && !rows.empty();
    for (const auto& r : rows) files = files && r.size() == rows[0].size();
  }
  const auto scores = parse_csv(read_file(out.str("scores.csv")));
  files = files && scores.size() == records.size() + 1;
  return {symmetric && monotone && top && files,
          std::string("matrix ") + (symmetric ? "ok" : "BAD") + ", trajectory " +
              (monotone ? "ok" : "BAD") + ", leaderboard " + (top ? "ok" : "BAD") + ", files " +
              (files ? "ok" : "BAD " + why)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"param_counts", param_counts},
      {"gradient_check", gradient_check},
      {"oracle_equivalences", oracle_equivalences},
      {"toy_learning", toy_learning},
      {"augmentation_effect", augmentation_effect},
      {"determinism", determinism},
      {"sweep_robustness", sweep_robustness},
      {"masking_statistics", masking_statistics},
      {"analysis_outputs", analysis_outputs},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.contains(name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %-20s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
