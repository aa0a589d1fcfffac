#include <gtest/gtest.h>

#include <memory>

#include "hb/gradcheck.hpp"
#include "hb/reward.hpp"
#include "model_fixtures.hpp"

using namespace hb;
using namespace hb::testing;

namespace {

VideoTensor<double> random_clip(std::size_t n, std::size_t hw, std::uint64_t seed) {
  Rng rng(seed);
  return VideoTensor<double>(Tensor<double>::randn({n, 3, hw, hw}, rng, 0.5));
}

Tensor<double> projected_frame(const ToyReward<double>& r, const VideoTensor<double>& clip) {
  Graph<double> g;
  auto p = r.project(g, g.constant(clip.tensor()));
  return g.value(p).reshaped({r.embed_dim()});
}

RewardConfig small_reward_config() {
  RewardConfig c;
  c.shape = LatentShape{2, 12, 4, 4};
  c.rollout_steps = 3;
  c.image_frames = 2;
  c.adam.lr = 1e-3;
  c.seed = 17;
  return c;
}

}  // namespace

TEST(ToyReward, IdenticalProjectionScoresOne) {
  ToyReward<double> r(3, 16);
  auto clip = random_clip(1, 16, 1);
  auto text = projected_frame(r, clip);
  EXPECT_NEAR(r.score_images(clip, text)[0], 1.0, 1e-12);
}

TEST(ToyReward, OrthogonalProjectionScoresZero) {
  ToyReward<double> r(3, 16);
  auto clip = random_clip(1, 16, 1);
  auto p = projected_frame(r, clip);
  Rng rng(4);
  auto text = Tensor<double>::randn({16}, rng);
  double pp = 0, tp = 0;
  for (std::size_t i = 0; i < 16; ++i) pp += p[i] * p[i], tp += text[i] * p[i];
  for (std::size_t i = 0; i < 16; ++i) text[i] -= tp / pp * p[i];
  EXPECT_NEAR(r.score_images(clip, text)[0], 0.0, 1e-12);
}

TEST(ToyReward, ConstantClipVideoEqualsImage) {
  ToyReward<double> r(5, 8);
  auto frame = random_clip(1, 32, 2);
  Tensor<double> data({6, 3, 32, 32});
  for (std::size_t f = 0; f < 6; ++f)
    std::copy(frame.tensor().ptr(), frame.tensor().ptr() + frame.tensor().size(), data.ptr() + f * frame.tensor().size());
  VideoTensor<double> clip(data);
  Rng rng(6);
  auto text = Tensor<double>::randn({8}, rng);
  const double image = r.score_images(frame, text)[0];
  EXPECT_NEAR(r.score_video(clip, text), image, 1e-6);

  RewardConfig cfg;
  cfg.lambda_image = 0.7;
  cfg.lambda_video = 1.6;
  cfg.image_frames = 6;
  Graph<double> g;
  auto total = mixed_reward_of_pixels(g, g.constant(data), text, r, cfg);
  EXPECT_NEAR(g.scalar(total), (0.7 + 1.6) * image, 1e-9);
}

TEST(ToyReward, RejectsBadShapes) {
  EXPECT_THROW(ToyReward<double>(1, 4), ConfigError);
  ToyReward<double> r(1, 8);
  Rng rng(1);
  EXPECT_THROW(r.score_images(random_clip(1, 12, 1), Tensor<double>::randn({8}, rng)), ShapeError);
  EXPECT_THROW(r.score_images(random_clip(1, 16, 1), Tensor<double>::randn({9}, rng)), ShapeError);
}

TEST(FrameSelection, UniformlySpaced) {
  EXPECT_EQ(reward_frame_indices(8, 4), (std::vector<std::size_t>{0, 2, 4, 7}));
  EXPECT_EQ(reward_frame_indices(16, 4), (std::vector<std::size_t>{0, 5, 10, 15}));
  EXPECT_EQ(reward_frame_indices(3, 5), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(reward_frame_indices(8, 1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(reward_frame_indices(8, 4), reward_frame_indices(8, 4));
}

TEST(RewardStep, ZeroWeightsLeaveParametersBitwise) {
  auto c = tiny_config();
  DenoiserModel<float> m{c, init_params<float>(c, 1)};
  randomize(m.params, 2, 0.05);
  auto cfg = small_reward_config();
  cfg.lambda_image = cfg.lambda_video = 0.0;
  RewardTuner<float> tuner(m, std::make_shared<ToyReward<float>>(9, 8), LatentCodec<float>(0, 2),
                           build_schedule(), cfg);
  for (int i = 0; i < 3; ++i) tuner.step({{"a cat", cond_for<float>(c, "a cat")}});
  EXPECT_TRUE(tuner.student().params == m.params);
}

TEST(RewardStep, NonFiniteRewardNamesPrompt) {
  auto c = tiny_config();
  DenoiserModel<float> m{c, init_params<float>(c, 1)};
  auto reward = std::make_shared<ToyReward<float>>(9, 8);
  reward->mutable_projection()[0] = std::numeric_limits<float>::quiet_NaN();
  RewardTuner<float> tuner(m, reward, LatentCodec<float>(0, 2), build_schedule(), small_reward_config());
  try {
    tuner.step({{"ok prompt", cond_for<float>(c, "ok")}, {"a glowing jellyfish", cond_for<float>(c, "j")}});
    FAIL() << "expected RewardError";
  } catch (const RewardError& e) {
    EXPECT_NE(std::string(e.what()).find("ok prompt"), std::string::npos);
  }
}

TEST(RewardStep, NegativeRewardGradientMatchesFiniteDifferences) {
  auto c = tiny_config();
  auto params = init_params<double>(c, 31);
  randomize(params, 32, 0.05);
  auto cond = cond_for<double>(c, "a lighthouse at dusk", 12.0);
  auto schedule = build_schedule(50, 1e-3, 0.05);
  ToyReward<double> reward(7, 8);
  LatentCodec<double> codec(0, 2);
  for (bool full : {false, true}) {
    auto cfg = small_reward_config();
    cfg.full_rollout = full;
    cfg.lambda_image = 0.8;
    cfg.lambda_video = 1.3;
    // The prefix (steps outside the gradient scope) is held fixed.
    const auto prefix = reward_rollout_prefix(params, c, cond, schedule, cfg, 5);
    auto neg_reward = [&](const ParameterStore<double>& p) {
      Graph<double> g;
      ParamBinding<double> bind(g, p, false);
      return -g.scalar(mixed_reward_from(bind, c, prefix, cond, reward, codec, schedule, cfg));
    };
    Graph<double> g;
    ParamBinding<double> bind(g, params, true);
    g.backward(g.scale(mixed_reward_from(bind, c, prefix, cond, reward, codec, schedule, cfg), -1.0));
    auto res = check_parameter_gradients(params, bind.gradients(), neg_reward, 60, 33);
    EXPECT_EQ(res.checked, 60);
    EXPECT_LT(res.worst_relative_error, 1e-3) << res.worst_name << (full ? " full " : " final ") << res.worst_fd << " vs " << res.worst_analytic;
  }
}

TEST(RewardStep, ShortRunIncreasesRewardDeterministically) {
  auto c = tiny_config();
  DenoiserModel<float> m{c, init_params<float>(c, 1)};
  randomize(m.params, 2, 0.05);
  auto run = [&] {
    RewardTuner<float> tuner(m, std::make_shared<ToyReward<float>>(9, 8), LatentCodec<float>(0, 2),
                             build_schedule(), small_reward_config());
    std::vector<std::pair<std::string, ConditioningBundle<float>>> prompts{
        {"a cat", cond_for<float>(c, "a cat")}, {"a red kite", cond_for<float>(c, "a red kite")}};
    const double first = tuner.step(prompts).mean_reward;
    for (int i = 0; i < 30; ++i) tuner.step(prompts);
    return std::make_pair(first, tuner.evaluate(prompts).mean_reward);
  };
  auto [before, after] = run();
  EXPECT_GT(after, before);
  EXPECT_EQ(run(), std::make_pair(before, after));
}
