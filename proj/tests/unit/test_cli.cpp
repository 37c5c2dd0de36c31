#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using babylab::test::TempDir;

namespace {

struct Result {
  int code = 0;
  std::string out;
};

// Runs the CLI from `cwd`, capturing stdout and stderr together.
Result run(const fs::path& cwd, const std::string& args) {
  const std::string cmd =
      "cd '" + cwd.string() + "' && '" + BABYLAB_CLI_PATH + "' " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return {-1, "popen failed"};
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(std::ifstream(p)); }

const std::string kTinyModel =
    "--set model.preset=custom --set model.hidden_size=16 --set model.intermediate_size=32 "
    "--set model.num_heads=2 --set model.num_layers=1 --set train.learning_rate=1e-3 ";

// gen-toy and tokenizer outputs shared by the pipeline tests.
void prepare_data(const fs::path& dir) {
  ASSERT_EQ(run(dir, "gen-toy --n 300 --pairs 40 --seed 1 --out toy").code, 0);
  const auto r = run(dir, "tokenizer --corpus toy/corpus.txt --vocab-size 100 --out tok");
  ASSERT_EQ(r.code, 0) << r.out;
}

std::string data_flags() {
  return "--set data.corpus=toy/corpus.txt --set data.vocab=tok/vocab.json "
         "--set data.suite=toy/suite.jsonl ";
}

}  // namespace

TEST(Cli, MissingCheckpointIsOneLineError) {
  TempDir dir("cli_missing");
  const auto r = run(dir.path(), "eval --checkpoint nope.ckpt --suite s.jsonl --out e");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.out, "babylab: error: checkpoint not found: nope.ckpt\n");
}

TEST(Cli, UnknownConfigKeyNamesNearestKey) {
  TempDir dir("cli_key");
  const auto r = run(dir.path(), "config --set train.epoch=5");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("did you mean 'train.epochs'"), std::string::npos) << r.out;
}

TEST(Cli, ConfigPrintsSchemaAndResolvedConfig) {
  TempDir dir("cli_config");
  auto r = run(dir.path(), "config --schema");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(nlohmann::json::accept(r.out));
  r = run(dir.path(), "config --set train.epochs=5 --seed 9");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc["train"]["epochs"], 5);
  EXPECT_EQ(doc["seed"], 9);
}

TEST(Cli, FullPipelineProducesDeclaredFiles) {
  TempDir dir("cli_pipeline");
  prepare_data(dir.path());
  const fs::path d = dir.path();
  EXPECT_TRUE(fs::exists(d / "toy/corpus.txt"));
  EXPECT_TRUE(fs::exists(d / "toy/suite.jsonl"));
  EXPECT_EQ(read_json(d / "tok/vocab.json")["tokens"].size(), 100u);

  auto r = run(d, "pretrain " + kTinyModel + data_flags() +
                      "--set train.num_patterns=1 --set train.batch_size=32 --out run");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"config.json", "model.ckpt", "record.json"}) {
    EXPECT_TRUE(fs::exists(d / "run" / f)) << f;
  }
  EXPECT_EQ(read_json(d / "run/record.json")["status"], "ok");

  r = run(d, "eval --checkpoint run/model.ckpt --suite toy/suite.jsonl --out ev");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = read_json(d / "ev/report.json");
  EXPECT_EQ(report["tasks"].size(), 2u);
  EXPECT_NEAR(report["overall"].get<double>(),
              read_json(d / "run/record.json")["overall"].get<double>(), 1e-12);

  r = run(d, "sweep " + kTinyModel + data_flags() +
                 "--set sweep.epochs=[1] --set sweep.num_patterns=[1,5] "
                 "--set sweep.batch_size=[64,128] --budget 3 --jobs 2 --out sw");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_json(d / "sw/manifest.json")["completed"].size(), 3u);

  r = run(d, "analyze --sweep sw --out an");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"scores.csv", "correlation.csv", "correlation.svg", "trajectories.svg",
                        "leaderboard.md"}) {
    EXPECT_TRUE(fs::exists(d / "an" / f)) << f;
  }
}

TEST(Cli, SameSeedGivesSameRecord) {
  TempDir dir("cli_seed");
  prepare_data(dir.path());
  const std::string args = "pretrain " + kTinyModel + data_flags() +
                           "--set train.num_patterns=1 --set train.batch_size=64 --seed 7 ";
  ASSERT_EQ(run(dir.path(), args + "--out a").code, 0);
  ASSERT_EQ(run(dir.path(), args + "--out b").code, 0);
  auto a = read_json(dir.path() / "a/record.json");
  auto b = read_json(dir.path() / "b/record.json");
  a.erase("wall_time");
  b.erase("wall_time");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a["hyperparams"]["seed"], 7);
}

TEST(Cli, WritesOnlyUnderOutputDirectory) {
  TempDir dir("cli_confined");
  prepare_data(dir.path());
  std::set<std::string> before;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) before.insert(e.path());
  ASSERT_EQ(run(dir.path(), "pretrain " + kTinyModel + data_flags() +
                                "--set train.num_patterns=1 --set train.batch_size=128 "
                                "--out only/here")
                .code,
            0);
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    const auto p = e.path().string();
    if (before.contains(p)) continue;
    EXPECT_EQ(p.rfind((dir.path() / "only").string(), 0), 0u) << p;
  }
}
