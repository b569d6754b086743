#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "coach/cae.hpp"
#include "coach/errors.hpp"
#include "coach/optimizer.hpp"
#include "coach/policy.hpp"

namespace coach {
namespace {

constexpr int kTestRes = 32;

TEST(DatasetTest, CollectionIsDeterministicAndSized) {
  const auto a = collect_random_frames(TaskId::goal_nav, 50, 3, kTestRes);
  const auto b = collect_random_frames(TaskId::goal_nav, 50, 3, kTestRes);
  EXPECT_EQ(a.frames.size(), 50u);
  EXPECT_EQ(a.frames, b.frames);
  const auto c = collect_random_frames(TaskId::goal_nav, 50, 4, kTestRes);
  EXPECT_NE(a.frames, c.frames);
}

TEST(DatasetTest, SingleFrameAndErrors) {
  const auto one = collect_random_frames(TaskId::patrol, 1, 0, kTestRes);
  ASSERT_EQ(one.frames.size(), 1u);
  EXPECT_EQ(one.frames[0].shape(), (Shape{3, 32, 32}));
  EXPECT_THROW(collect_random_frames(TaskId::patrol, 0, 0, kTestRes), InputError);
  EXPECT_THROW(collect_random_frames(TaskId::patrol, 1, 0, 40), ConfigError);
}

TEST(DatasetTest, FileRoundTrip) {
  const auto ds = collect_random_frames(TaskId::goal_nav, 7, 1, kTestRes);
  std::stringstream buf;
  save_dataset(buf, ds);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 8), "COACHDS1");
  // header: magic, u32 count, u16 H, u16 W, u8 C, then f32 pixels
  EXPECT_EQ(bytes.size(), 8u + 4 + 2 + 2 + 1 + 7u * 32 * 32 * 3 * 4);
  std::stringstream in(bytes);
  const auto loaded = load_dataset(in);
  ASSERT_EQ(loaded.frames.size(), 7u);
  for (std::size_t f = 0; f < 7; ++f) {
    ASSERT_EQ(loaded.frames[f].shape(), ds.frames[f].shape());
    for (std::size_t i = 0; i < ds.frames[f].size(); ++i) {
      EXPECT_NEAR(loaded.frames[f][i], ds.frames[f][i], 1e-7);
    }
  }
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_dataset(truncated), FormatError);
}

TEST(CaeTest, EncodingSizesAndReconstructionShape) {
  const auto test = init_cae(Preset::test, 1);
  const auto out = cae_forward(test, render(reset(TaskId::goal_nav, 0), 32));
  EXPECT_EQ(out.encoding.size(), 32u);
  EXPECT_EQ(out.reconstruction.shape(), (Shape{3, 32, 32}));

  const auto full = init_cae(Preset::full, 1);
  const auto fout = cae_forward(full, render(reset(TaskId::goal_nav, 0), 84));
  EXPECT_EQ(fout.encoding.size(), 100u);
  EXPECT_EQ(fout.reconstruction.shape(), (Shape{3, 84, 84}));
  EXPECT_THROW(cae_forward(full, render(reset(TaskId::goal_nav, 0), 32)), ConfigError);
}

TEST(CaeTest, FullEncoderMatchesReferenceArchitecture) {
  const auto enc = init_cae(Preset::full, 1).encoder();
  ASSERT_EQ(enc.layer_count(), 9u);
  const auto& c1 = std::get<Conv2d>(enc.layer(0));
  EXPECT_EQ(c1.weight.shape(), (Shape{32, 3, 8, 8}));
  EXPECT_EQ(c1.stride, 4u);
  EXPECT_EQ(std::get<Conv2d>(enc.layer(2)).weight.shape(), (Shape{64, 32, 4, 4}));
  EXPECT_EQ(std::get<Conv2d>(enc.layer(4)).weight.shape(), (Shape{64, 64, 3, 3}));
  EXPECT_EQ(std::get<Dense>(enc.layer(6)).weight.dim(0), 256u);
  EXPECT_EQ(enc.output_shape(), (Shape{100}));
}

TEST(CaeTest, LossMatchesIndependentMse) {
  const auto cae = init_cae(Preset::test, 2);
  const auto ds = collect_random_frames(TaskId::goal_nav, 5, 2, kTestRes);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& x : ds.frames) {
    const auto recon = forward(cae.autoencoder, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      total += (recon[i] - x[i]) * (recon[i] - x[i]);
      ++count;
    }
  }
  EXPECT_NEAR(reconstruction_loss(cae, ds.frames), total / static_cast<double>(count), 1e-12);
}

TEST(CaeTest, ZeroLearningRateLeavesParamsUnchanged) {
  const auto ds = collect_random_frames(TaskId::goal_nav, 40, 5, kTestRes);
  CaeTrainOptions opts;
  opts.max_epochs = 3;
  opts.learning_rate = 0.0;
  opts.seed = 5;
  opts.early_stop = false;
  const auto result = cae_train(ds, opts);
  EXPECT_EQ(result.params.autoencoder, init_cae(Preset::test, 5).autoencoder);
  for (double loss : result.epoch_losses) EXPECT_EQ(loss, result.initial_loss);
}

TEST(CaeTest, TrainingIsDeterministic) {
  const auto ds = collect_random_frames(TaskId::goal_nav, 64, 6, kTestRes);
  CaeTrainOptions opts;
  opts.max_epochs = 2;
  opts.seed = 6;
  const auto a = cae_train(ds, opts);
  const auto b = cae_train(ds, opts);
  EXPECT_EQ(a.params.autoencoder, b.params.autoencoder);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
}

TEST(CaeTest, LossMostlyNonIncreasingAcrossSeeds) {
  int monotone = 0;
  constexpr int kRuns = 10;
  for (int seed = 0; seed < kRuns; ++seed) {
    const auto ds = collect_random_frames(TaskId::goal_nav, 200, 100 + seed, kTestRes);
    CaeTrainOptions opts;
    opts.max_epochs = 5;
    opts.seed = static_cast<std::uint64_t>(seed);
    opts.early_stop = false;
    const auto r = cae_train(ds, opts);
    bool ok = r.epoch_losses.front() <= r.initial_loss;
    for (std::size_t i = 1; i < r.epoch_losses.size(); ++i) ok = ok && r.epoch_losses[i] <= r.epoch_losses[i - 1];
    monotone += ok ? 1 : 0;
  }
  EXPECT_GE(monotone, 9);
}

TEST(CaeTest, EarlyStopHonoursMaxEpochs) {
  const auto ds = collect_random_frames(TaskId::goal_nav, 32, 7, kTestRes);
  CaeTrainOptions opts;
  opts.max_epochs = 4;
  opts.seed = 7;
  int calls = 0;
  opts.on_epoch = [&calls](int, double) { ++calls; };
  const auto r = cae_train(ds, opts);
  EXPECT_LE(r.epoch_losses.size(), 4u);
  EXPECT_EQ(static_cast<std::size_t>(calls), r.epoch_losses.size());
}

TEST(CaeTest, DivergenceIsTrainingErrorWithEpoch) {
  const auto ds = collect_random_frames(TaskId::goal_nav, 32, 8, kTestRes);
  CaeTrainOptions opts;
  opts.max_epochs = 3;
  opts.learning_rate = 1e300;
  opts.seed = 8;
  try {
    cae_train(ds, opts);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 1);
  }
}

TEST(EncoderFreezeTest, FrozenPrefixAndHead) {
  const auto cae = init_cae(Preset::full, 3);
  const auto policy = encoder_freeze(cae, {100, 30}, 4);
  EXPECT_EQ(policy.frozen_count(), cae.encoder().layer_count());
  ASSERT_EQ(policy.layer_count(), cae.encoder().layer_count() + 3);
  EXPECT_EQ(std::get<Dense>(policy.layer(policy.layer_count() - 3)).weight.shape(), (Shape{30, 100}));
  EXPECT_EQ(std::get<Dense>(policy.layer(policy.layer_count() - 1)).weight.shape(), (Shape{3, 30}));
  EXPECT_THROW(encoder_freeze(cae, {64, 30}, 4), ConfigError);
}

TEST(EncoderFreezeTest, OptimizerLeavesEncoderBytesUnchanged) {
  const auto cae = init_cae(Preset::test, 3);
  auto policy = encoder_freeze(cae, {32, 30}, 4);
  const auto encoder_before = policy.slice(0, policy.frozen_count());
  auto opt = make_optimizer({OptimizerKind::rmsprop, 0.01}, policy);
  for (std::uint64_t s = 0; s < 5; ++s) {
    apply_optimizer(opt, policy, policy_grad_logprob(policy, render(reset(TaskId::goal_nav, s), 32), Action::forward));
  }
  EXPECT_EQ(policy.slice(0, policy.frozen_count()), encoder_before);
}

TEST(EncoderFreezeTest, SameStateSameEncoding) {
  const auto enc = init_cae(Preset::test, 4).encoder();
  const auto s = reset(TaskId::goal_nav, 12);
  EXPECT_EQ(forward(enc, render(s, 32)), forward(enc, render(s, 32)));
}

TEST(EncoderFreezeTest, LinearPolicyShape) {
  const auto enc = init_cae(Preset::test, 4).encoder();
  const auto lin = linear_policy(enc, 1);
  EXPECT_EQ(lin.frozen_count(), enc.layer_count());
  EXPECT_EQ(lin.layer_count(), enc.layer_count() + 1);
  EXPECT_EQ(lin.output_shape(), (Shape{3}));
}

TEST(PresetTest, ParseAndLookup) {
  EXPECT_EQ(parse_preset("test"), Preset::test);
  EXPECT_THROW(parse_preset("tiny"), InputError);
  EXPECT_EQ(encoder_preset(Preset::full).resolution, 84);
  EXPECT_EQ(encoder_preset(Preset::test).resolution, 32);
  EXPECT_EQ(encoder_preset(Preset::full).learning_rate_scale, 1.0);
  EXPECT_EQ(preset_for_input({3, 32, 32}), Preset::test);
  EXPECT_THROW(preset_for_input({3, 40, 40}), ConfigError);
}

}  // namespace
}  // namespace coach
