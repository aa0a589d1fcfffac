#pragma once

// Stage-2 reward fine-tuning: differentiable image/video-text reward models
// and the ascent step on their weighted mixture.

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hb/diffusion.hpp"
#include "hb/errors.hpp"
#include "hb/latent_codec.hpp"
#include "hb/optim.hpp"
#include "hb/rng.hpp"
#include "hb/sampler.hpp"
#include "hb/unet.hpp"

namespace hb {

/// Scorer contract. Frames are [M, 3, H, W] pixel nodes, text is a [D] node.
/// score_images returns [M] (one score per frame), score_video returns [1].
/// Higher is better.
template <class T>
class RewardModel {
 public:
  using Var = typename Graph<T>::Var;
  virtual ~RewardModel() = default;

  virtual Var score_images(Graph<T>& g, Var frames, Var text) const = 0;
  virtual Var score_video(Graph<T>& g, Var frames, Var text) const = 0;

  Tensor<T> score_images(const VideoTensor<T>& frames, const Tensor<T>& text) const {
    Graph<T> g;
    return g.value(score_images(g, g.constant(frames.tensor()), g.constant(text)));
  }
  double score_video(const VideoTensor<T>& frames, const Tensor<T>& text) const {
    Graph<T> g;
    return static_cast<double>(g.value(score_video(g, g.constant(frames.tensor()), g.constant(text)))[0]);
  }
};

/// Frames average-pooled to 8x8, flattened to 192 features and mapped by a
/// fixed seeded Gaussian projection into the text-embedding space; scores
/// are cosine similarities against the text embedding.
template <class T>
class ToyReward final : public RewardModel<T> {
 public:
  using Var = typename Graph<T>::Var;
  static constexpr std::size_t kSide = 8;
  static constexpr std::size_t kFeatures = 3 * kSide * kSide;

  ToyReward(std::uint64_t seed, std::size_t embed_dim) : projection_({embed_dim, kFeatures}) {
    if (embed_dim < 8) throw ConfigError("toy reward needs embed_dim >= 8");
    Rng rng(mix_seed(seed, fnv1a("toy-reward")));
    const double sd = 1.0 / std::sqrt(static_cast<double>(kFeatures));
    for (auto& v : projection_.data()) v = static_cast<T>(sd * rng.normal());
  }

  std::size_t embed_dim() const { return projection_.dim(0); }
  const Tensor<T>& projection() const { return projection_; }
  Tensor<T>& mutable_projection() { return projection_; }

  /// [M, 3, H, W] -> [M, embed_dim]
  Var project(Graph<T>& g, Var frames) const {
    const auto s = g.shape(frames);
    if (s.size() != 4 || s[1] != 3 || s[2] % kSide || s[3] % kSide)
      throw ShapeError("toy reward: frames must be [M,3,H,W] with H, W multiples of 8, got " + shape_str(s));
    auto pooled = g.avg_pool(frames, s[2] / kSide, s[3] / kSide);
    auto flat = g.reshape(pooled, {s[0], kFeatures});
    return g.matmul(flat, g.constant(projection_), false, true);
  }

  Var score_images(Graph<T>& g, Var frames, Var text) const override {
    check_text(g, text);
    return g.row_cosine(project(g, frames), text);
  }
  Var score_video(Graph<T>& g, Var frames, Var text) const override {
    check_text(g, text);
    return g.row_cosine(g.mean_rows(project(g, frames)), text);
  }
  using RewardModel<T>::score_images;
  using RewardModel<T>::score_video;

 private:
  void check_text(Graph<T>& g, Var text) const {
    if (g.value(text).size() != embed_dim())
      throw ShapeError("toy reward: text embedding has " + std::to_string(g.value(text).size()) +
                       " entries, expected " + std::to_string(embed_dim()));
  }
  Tensor<T> projection_;
};

/// m frame indices uniformly spaced over [0, N-1], endpoints included.
inline std::vector<std::size_t> reward_frame_indices(std::size_t frames, std::size_t m) {
  if (frames == 0 || m == 0) throw ArgumentError("reward frame selection needs frames and m >= 1");
  std::vector<std::size_t> idx;
  if (m >= frames) {
    for (std::size_t i = 0; i < frames; ++i) idx.push_back(i);
  } else if (m == 1) {
    idx.push_back(0);
  } else {
    for (std::size_t i = 0; i < m; ++i) idx.push_back(i * (frames - 1) / (m - 1));
  }
  return idx;
}

struct RewardConfig {
  double lambda_image = 1.0;
  double lambda_video = 1.0;
  std::size_t image_frames = 4;  // m
  int rollout_steps = 4;
  bool full_rollout = false;  // default: gradient through the final denoising step only
  double guidance = 1.0;
  AdamConfig adam{1e-4};
  int steps = 200;
  std::uint64_t seed = 0;
  LatentShape shape{};

  void validate() const {
    if (lambda_image < 0 || lambda_video < 0) throw ConfigError("reward weights must be non-negative");
    if (rollout_steps < 1) throw ConfigError("reward rollout needs at least one step");
    if (image_frames < 1) throw ConfigError("reward image frame count must be >= 1");
  }
};

struct PromptReward {
  double image = 0.0;  // mean image score over the m frames
  double video = 0.0;
  double total = 0.0;
};

struct RewardStepResult {
  double mean_reward = 0.0;  // before the update
  double mean_image = 0.0;
  double mean_video = 0.0;
  std::vector<PromptReward> per_prompt;
};

/// R = lambda_image * mean image score over the m selected frames
///   + lambda_video * video score, for decoded pixels [N, 3, H, W].
template <class T>
typename Graph<T>::Var mixed_reward_of_pixels(Graph<T>& g, typename Graph<T>::Var pixels,
                                              const Tensor<T>& text_embedding,
                                              const RewardModel<T>& reward, const RewardConfig& cfg,
                                              PromptReward* parts = nullptr) {
  auto text = g.constant(text_embedding);
  const auto frames = g.shape(pixels)[0];
  auto picked = g.select_rows(pixels, reward_frame_indices(frames, cfg.image_frames));
  auto img = g.mean(reward.score_images(g, picked, text));
  auto vid = g.sum(reward.score_video(g, pixels, text));
  auto total = g.lincomb(img, static_cast<T>(cfg.lambda_image), vid, static_cast<T>(cfg.lambda_video));
  if (parts) {
    parts->image = static_cast<double>(g.scalar(img));
    parts->video = static_cast<double>(g.scalar(vid));
    parts->total = static_cast<double>(g.scalar(total));
  }
  return total;
}

/// Rollout timesteps and the index of the first step that records gradients.
inline std::pair<std::vector<int>, std::size_t> reward_rollout_plan(const NoiseSchedule& schedule,
                                                                    const RewardConfig& cfg) {
  auto ts = sampling_timesteps(schedule.steps(), cfg.rollout_steps);
  const std::size_t first_graph = cfg.full_rollout ? 0 : ts.size() - 1;
  return {std::move(ts), first_graph};
}

/// Runs the rollout steps outside the gradient scope, from the seeded noise.
template <class T>
LatentVideo<T> reward_rollout_prefix(const ParameterStore<T>& params, const UNetConfig& config,
                                     const ConditioningBundle<T>& cond, const NoiseSchedule& schedule,
                                     const RewardConfig& cfg, std::uint64_t rollout_seed) {
  Rng rng(rollout_seed);
  LatentVideo<T> z(gaussian_like<T>(cfg.shape.shape(), rng));
  const auto [ts, first_graph] = reward_rollout_plan(schedule, cfg);
  for (std::size_t i = 0; i < first_graph; ++i) {
    auto eps = unet_forward(params, config, z, ts[i], cond);
    if (cfg.guidance != 1.0)
      eps = cfg_combine(unet_forward(params, config, z, ts[i], cond.as_null()), eps, cfg.guidance);
    z = ddim_step(z, eps, ts[i], ts[i + 1], schedule);
  }
  return z;
}

/// R for one prompt from the prefix latent: the remaining rollout steps,
/// decode and scoring are recorded in the binding's graph.
template <class T>
typename Graph<T>::Var mixed_reward_from(ParamBinding<T>& bind, const UNetConfig& config,
                                         const LatentVideo<T>& prefix, const ConditioningBundle<T>& cond,
                                         const RewardModel<T>& reward, const LatentCodec<T>& codec,
                                         const NoiseSchedule& schedule, const RewardConfig& cfg,
                                         PromptReward* parts = nullptr) {
  auto& g = bind.graph();
  const auto [ts, first_graph] = reward_rollout_plan(schedule, cfg);
  auto zv = g.constant(prefix.tensor());
  for (std::size_t i = first_graph; i < ts.size(); ++i) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    typename Graph<T>::Var eps;
    if (cfg.guidance == 1.0) {
      eps = unet_forward(bind, config, zv, t, cond);
    } else {
      auto ec = unet_forward(bind, config, zv, t, cond);
      auto eu = unet_forward(bind, config, zv, t, cond.as_null());
      eps = cfg_combine(g, eu, ec, static_cast<T>(cfg.guidance));
    }
    zv = ddim_step(g, zv, eps, t, s, schedule);
  }
  return mixed_reward_of_pixels(g, codec.decode(g, zv), cond.text_embedding, reward, cfg, parts);
}

/// Full per-prompt reward: prefix rollout followed by the recorded steps.
template <class T>
typename Graph<T>::Var mixed_reward(ParamBinding<T>& bind, const UNetConfig& config,
                                    const ConditioningBundle<T>& cond, const RewardModel<T>& reward,
                                    const LatentCodec<T>& codec, const NoiseSchedule& schedule,
                                    const RewardConfig& cfg, std::uint64_t rollout_seed,
                                    PromptReward* parts = nullptr) {
  auto prefix = reward_rollout_prefix(bind.store(), config, cond, schedule, cfg, rollout_seed);
  return mixed_reward_from(bind, config, prefix, cond, reward, codec, schedule, cfg, parts);
}

/// Stateful stage-2 trainer: one ascent step on the mean mixed reward per call.
template <class T>
class RewardTuner {
 public:
  RewardTuner(DenoiserModel<T> student, std::shared_ptr<const RewardModel<T>> reward,
              LatentCodec<T> codec, const NoiseSchedule& schedule, RewardConfig cfg)
      : student_(std::move(student)),
        reward_(std::move(reward)),
        codec_(std::move(codec)),
        schedule_(schedule),
        cfg_(cfg),
        opt_(cfg.adam) {
    cfg_.validate();
    if (!reward_) throw ArgumentError("reward tuner needs a reward model");
  }

  const DenoiserModel<T>& student() const { return student_; }
  const RewardConfig& config() const { return cfg_; }

  /// Rollout seed of prompt i: fixed across steps so progress is measured
  /// on the same starting noise.
  std::uint64_t rollout_seed(std::size_t prompt_index) const { return mix_seed(cfg_.seed, prompt_index); }

  using Prompts = std::vector<std::pair<std::string, ConditioningBundle<T>>>;

  /// Rewards of the current student, no update.
  RewardStepResult evaluate(const Prompts& prompts) const { return accumulate(prompts, nullptr); }

  /// One ascent step on the mean reward; returns the pre-update rewards.
  RewardStepResult step(const Prompts& prompts) {
    ParameterStore<T> grads = student_.params.zeros_like();
    auto res = accumulate(prompts, &grads);
    const T inv = static_cast<T>(1.0 / static_cast<double>(prompts.size()));
    for (auto& [name, g] : grads)
      for (auto& v : g.data()) v *= inv;
    opt_.step(student_.params, grads);
    return res;
  }

 private:
  RewardStepResult accumulate(const Prompts& prompts, ParameterStore<T>* grads) const {
    if (prompts.empty()) throw ArgumentError("reward step: no prompts");
    RewardStepResult res;
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      Graph<T> g;
      ParamBinding<T> bind(g, student_.params, grads != nullptr);
      PromptReward parts;
      auto r = mixed_reward(bind, student_.config, prompts[p].second, *reward_, codec_, schedule_, cfg_,
                            rollout_seed(p), &parts);
      if (!std::isfinite(parts.total) || !std::isfinite(parts.image) || !std::isfinite(parts.video))
        throw RewardError("non-finite reward for prompt \"" + prompts[p].first + "\"");
      res.per_prompt.push_back(parts);
      res.mean_reward += parts.total;
      res.mean_image += parts.image;
      res.mean_video += parts.video;
      if (grads) {
        g.backward(g.scale(r, T{-1}));
        auto gp = bind.gradients();
        for (auto& [name, acc] : *grads) {
          const auto& gi = gp.get(name);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gi[i];
        }
      }
    }
    const double n = static_cast<double>(prompts.size());
    res.mean_reward /= n;
    res.mean_image /= n;
    res.mean_video /= n;
    return res;
  }

  DenoiserModel<T> student_;
  std::shared_ptr<const RewardModel<T>> reward_;
  LatentCodec<T> codec_;
  NoiseSchedule schedule_;
  RewardConfig cfg_;
  Adam<T> opt_;
};

}  // namespace hb
