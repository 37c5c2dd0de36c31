#include <gtest/gtest.h>

#include <numeric>

#include "babylab/error.hpp"
#include "babylab/trainer.hpp"
#include "test_util.hpp"

using namespace babylab;
using babylab::test::tiny_config;
using babylab::test::toy_data;

namespace {

Hyperparams custom_hp(std::size_t epochs, std::size_t patterns, std::size_t batch) {
  Hyperparams hp;
  hp.preset_name = "custom";
  hp.epochs = epochs;
  hp.num_patterns = patterns;
  hp.batch_size = batch;
  hp.learning_rate = 1e-3;
  hp.seed = 3;
  return hp;
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST(Trainer, StepCountFollowsBatching) {
  const auto d = toy_data(103, 1);
  const auto c = tiny_config(d.vocab.size(), 128);
  const auto hp = custom_hp(2, 5, 16);
  EXPECT_EQ(steps_per_epoch(103, hp), 33u);
  EXPECT_EQ(total_steps(103, hp), 66u);
  std::size_t calls = 0;
  TrainOptions opts;
  opts.on_step = [&](std::size_t step, std::size_t total, double loss) {
    EXPECT_EQ(step, calls);
    EXPECT_EQ(total, 66u);
    EXPECT_TRUE(std::isfinite(loss));
    ++calls;
  };
  const auto r = pretrain(c, hp, d.corpus.sentences, opts);
  EXPECT_EQ(r.steps, 66u);
  EXPECT_EQ(calls, 66u);
  EXPECT_EQ(r.loss_curve.size(), 66u);
}

TEST(Trainer, RunsAreBitwiseReproducible) {
  const auto d = toy_data(200, 2);
  const auto c = tiny_config(d.vocab.size(), 128);
  const auto hp = custom_hp(1, 3, 16);
  const auto a = pretrain(c, hp, d.corpus.sentences);
  const auto b = pretrain(c, hp, d.corpus.sentences);
  EXPECT_EQ(a.params.data, b.params.data);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  for (std::size_t i = 0; i < a.params.data.size(); ++i) {
    ASSERT_NEAR(a.params.data[i], b.params.data[i], 1e-7);
  }
  auto other = hp;
  other.seed = 4;
  EXPECT_NE(pretrain(c, other, d.corpus.sentences).params.data, a.params.data);
}

TEST(Trainer, XsLossDecreasesOnToyData) {
  const auto d = toy_data(2000, 3);
  const auto c = preset_config("xs", d.vocab.size());
  Hyperparams hp;
  hp.preset_name = "xs";
  hp.epochs = 1;
  hp.num_patterns = 5;
  hp.batch_size = 32;
  const auto r = pretrain(c, hp, d.corpus.sentences);
  ASSERT_GE(r.loss_curve.size(), 200u);
  const std::span<const double> curve(r.loss_curve);
  EXPECT_LT(mean(curve.last(100)), mean(curve.first(100)));
}

TEST(Trainer, NonFiniteLossRaisesDivergence) {
  const auto d = toy_data(100, 4);
  const auto c = tiny_config(d.vocab.size(), 128);
  auto hp = custom_hp(1, 5, 16);
  hp.learning_rate = 1e36;
  try {
    pretrain(c, hp, d.corpus.sentences);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_NE(std::string(e.what()).find("step " + std::to_string(e.step())), std::string::npos);
  }
}

TEST(Trainer, GradientClippingKeepsTrainingFinite) {
  const auto d = toy_data(100, 5);
  const auto c = tiny_config(d.vocab.size(), 128);
  auto hp = custom_hp(1, 2, 16);
  hp.clip_norm = 0.5;
  const auto r = pretrain(c, hp, d.corpus.sentences);
  for (double l : r.loss_curve) EXPECT_TRUE(std::isfinite(l));
  hp.clip_norm = -1;
  EXPECT_THROW(pretrain(c, hp, d.corpus.sentences), Error);
}

TEST(Trainer, RejectsBadInputs) {
  const auto d = toy_data(50, 6);
  const auto c = tiny_config(d.vocab.size(), 128);
  EXPECT_THROW(pretrain(c, custom_hp(1, 1, 16), {}), Error);
  // Context too short for the corpus.
  EXPECT_THROW(pretrain(tiny_config(d.vocab.size(), 4), custom_hp(1, 1, 16),
                        d.corpus.sentences),
               Error);
}

TEST(Hyperparams, GridIsEnforcedForNamedPresets) {
  Hyperparams hp;
  EXPECT_NO_THROW(hp.validate());
  hp.epochs = 2;
  EXPECT_THROW(hp.validate(), Error);
  hp.epochs = 5;
  hp.num_patterns = 7;
  EXPECT_THROW(hp.validate(), Error);
  hp.num_patterns = 50;
  hp.batch_size = 8;
  EXPECT_THROW(hp.validate(), Error);
  hp.preset_name = "custom";
  EXPECT_NO_THROW(hp.validate());
  hp.learning_rate = 0;
  EXPECT_THROW(hp.validate(), Error);
}

TEST(Hyperparams, JsonRoundTripAndHash) {
  Hyperparams hp;
  hp.epochs = 10;
  hp.seed = 99;
  EXPECT_EQ(Hyperparams::from_json(hp.to_json()), hp);
  const auto c = preset_config("xs");
  EXPECT_EQ(run_hash(hp, c), run_hash(hp, c));
  auto other = hp;
  other.batch_size = 64;
  EXPECT_NE(run_hash(other, c), run_hash(hp, c));
  EXPECT_NE(run_hash(hp, preset_config("s")), run_hash(hp, c));
}

TEST(RunRecord, JsonRoundTrip) {
  RunRecord r;
  r.hyperparams.seed = 5;
  r.config = preset_config("xs", 300);
  r.hash = run_hash(r.hyperparams, r.config);
  r.steps = 12;
  r.loss_curve = {3.5, 2.25};
  r.eval = {{"a", 0.5}, {"b", 0.75}};
  r.overall = mean_accuracy(r.eval);
  r.wall_time = 1.5;
  r.checkpoint = "checkpoints/x.ckpt";
  const auto back = RunRecord::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_DOUBLE_EQ(back.overall, 0.625);
  EXPECT_TRUE(back.ok());
}
