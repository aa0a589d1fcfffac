#pragma once

// Teacher training (epsilon matching) and stage-1 consistency distillation
// of a pruned student against the classifier-free-guided teacher.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hb/diffusion.hpp"
#include "hb/errors.hpp"
#include "hb/optim.hpp"
#include "hb/rng.hpp"
#include "hb/sampler.hpp"
#include "hb/unet.hpp"

namespace hb {

/// One training example: clean latent clip and its conditions.
template <class T>
struct TrainItem {
  LatentVideo<T> z0;
  ConditioningBundle<T> cond;
};

/// Draws a training example. Must be deterministic given the Rng state.
template <class T>
using ItemSource = std::function<TrainItem<T>(Rng&)>;

// ---------------------------------------------------------------- teacher

struct TeacherTrainConfig {
  int steps = 1000;
  AdamConfig adam{1e-3};
  double uncond_prob = 0.1;  // condition dropout so the null branch is trained
  double final_lr_fraction = 1.0;  // < 1 enables cosine decay
  std::uint64_t seed = 0;
};

struct TeacherStepRecord {
  int step;
  double loss;
  int t;
  bool null_cond;
};

/// Single-item epsilon-matching loss and gradients.
template <class T>
double epsilon_loss(const DenoiserModel<T>& model, const TrainItem<T>& item, int t,
                    const Tensor<T>& eps, const NoiseSchedule& schedule,
                    std::type_identity_t<ParameterStore<T>>* grads) {
  auto z_t = add_noise(item.z0, LatentVideo<T>(eps), t, schedule);
  Graph<T> g;
  ParamBinding<T> bind(g, model.params, grads != nullptr);
  auto pred = unet_forward(bind, model.config, g.constant(z_t.tensor()), t, item.cond);
  auto loss = g.mse(pred, g.constant(eps));
  if (grads) {
    g.backward(loss);
    *grads = bind.gradients();
  }
  return static_cast<double>(g.scalar(loss));
}

template <class T>
ParameterStore<T> teacher_train(DenoiserModel<T> teacher, const ItemSource<T>& data,
                                const NoiseSchedule& schedule, const TeacherTrainConfig& cfg,
                                const std::function<void(const TeacherStepRecord&)>& log = {}) {
  if (!data) throw ArgumentError("teacher_train: empty dataset");
  Rng rng(cfg.seed);
  Adam<T> opt(cfg.adam);
  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.final_lr_fraction < 1.0)
      opt.set_learning_rate(cosine_learning_rate(cfg.adam.lr, cfg.final_lr_fraction, step, cfg.steps));
    TrainItem<T> item = data(rng);
    const int t = static_cast<int>(rng.uniform_int(1, schedule.steps()));
    const bool drop = rng.uniform() < cfg.uncond_prob;
    if (drop) item.cond.null_flag = true;
    auto eps = Tensor<T>::randn(item.z0.shape(), rng);
    ParameterStore<T> grads;
    const double loss = epsilon_loss(teacher, item, t, eps, schedule, &grads);
    opt.step(teacher.params, grads);
    if (log) log({step, loss, t, drop});
  }
  return std::move(teacher.params);
}

// ---------------------------------------------------------- consistency

/// Uniform distillation grid {d, 2d, ..., T} with d = T / grid_size.
struct DistillGrid {
  int T = 1000;
  int grid_size = 50;

  DistillGrid(int total, int size) : T(total), grid_size(size) {
    if (size < 2 || total % size != 0)
      throw ConfigError("distillation grid size must be >= 2 and divide T");
  }
  int spacing() const { return T / grid_size; }
  int t_min() const { return spacing(); }
  int at(int index) const { return index * spacing(); }  // index in 1..grid_size
  bool contains(int t) const { return t >= t_min() && t <= T && t % spacing() == 0; }
};

/// Boundary-respecting scalings of the consistency function,
/// c_skip(t_min) = 1 and c_out(t_min) = 0, with s = (t - t_min) * scaling:
///   c_skip = sigma^2 / (s^2 + sigma^2),   c_out = s / sqrt(s^2 + sigma^2)
struct ConsistencyParameterization {
  double sigma_data = 0.5;
  double timestep_scaling = 10.0;
  int t_min = 20;

  double scaled(int t) const { return (t - t_min) * timestep_scaling; }
  double c_skip(int t) const {
    const double s = scaled(t);
    return sigma_data * sigma_data / (s * s + sigma_data * sigma_data);
  }
  double c_out(int t) const {
    const double s = scaled(t);
    return s / std::sqrt(s * s + sigma_data * sigma_data);
  }
};

namespace detail {

inline void check_grid(const DistillGrid& grid, int t) {
  if (!grid.contains(t))
    throw GridError("timestep " + std::to_string(t) + " is not on the distillation grid (spacing " +
                    std::to_string(grid.spacing()) + ", minimum " + std::to_string(grid.t_min()) + ")");
}

}  // namespace detail

/// f(z_t, t) = c_skip(t) z_t + c_out(t) x0_hat(z_t, eps_theta(z_t, t)), in a graph.
template <class T>
typename Graph<T>::Var consistency_fn(ParamBinding<T>& params, const UNetConfig& config,
                                      typename Graph<T>::Var z_t, int t,
                                      const ConditioningBundle<T>& cond,
                                      const ConsistencyParameterization& parm,
                                      const DistillGrid& grid, const NoiseSchedule& schedule) {
  detail::check_grid(grid, t);
  auto& g = params.graph();
  const double cs = parm.c_skip(t), co = parm.c_out(t);
  if (t == parm.t_min) return z_t;  // c_skip = 1, c_out = 0 exactly
  auto eps = unet_forward(params, config, z_t, t, cond);
  auto x0 = predict_x0(g, z_t, eps, t, schedule);
  return g.lincomb(z_t, static_cast<T>(cs), x0, static_cast<T>(co));
}

template <class T>
LatentVideo<T> consistency_fn(const DenoiserModel<T>& model, const LatentVideo<T>& z_t, int t,
                              const ConditioningBundle<T>& cond,
                              const ConsistencyParameterization& parm, const DistillGrid& grid,
                              const NoiseSchedule& schedule) {
  Graph<T> g;
  ParamBinding<T> bind(g, model.params, false);
  auto out = consistency_fn(bind, model.config, g.constant(z_t.tensor()), t, cond, parm, grid, schedule);
  return LatentVideo<T>(g.value(out));
}

enum class DistillLoss { kHuber, kSquared };

struct DistillConfig {
  int skip = 1;  // k: grid intervals between adjacent points
  int grid_size = 50;
  double w_min = 5.0;
  double w_max = 8.0;
  double ema_decay = 0.95;
  DistillLoss loss = DistillLoss::kHuber;
  double huber_delta = 0.01;
  double sigma_data = 0.5;
  double timestep_scaling = 10.0;
  AdamConfig adam{1e-4};
  int batch_size = 1;
  int steps = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (skip < 1) throw ConfigError("distill: skip interval must be >= 1");
    if (w_min > w_max) throw ConfigError("distill: w_min must not exceed w_max");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("distill: EMA decay must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("distill: batch_size must be >= 1");
    if (skip >= grid_size) throw ConfigError("distill: skip must be smaller than the grid size");
  }
};

struct DistillStepResult {
  double loss;
  std::vector<double> w;
  std::vector<std::pair<int, int>> t_pairs;  // (t_{n+1}, t_n)
};

/// Solver target for one item: one guided DDIM step of the teacher from
/// t_hi to t_lo, then the EMA consistency function there. Reads only the
/// teacher and EMA weights, so it is a constant for the student update.
template <class T>
LatentVideo<T> distill_target(const DenoiserModel<T>& teacher, const DenoiserModel<T>& ema,
                              const LatentVideo<T>& z_hi, int t_hi, int t_lo,
                              const ConditioningBundle<T>& cond, double w,
                              const NoiseSchedule& schedule, const ConsistencyParameterization& parm,
                              const DistillGrid& grid) {
  auto eps_c = unet_forward(teacher.params, teacher.config, z_hi, t_hi, cond);
  auto eps_u = unet_forward(teacher.params, teacher.config, z_hi, t_hi, cond.as_null());
  auto z_lo = ddim_step(z_hi, cfg_combine(eps_u, eps_c, w), t_hi, t_lo, schedule);
  return consistency_fn(ema, z_lo, t_lo, cond, parm, grid, schedule);
}

/// Stateful stage-1 trainer: owns the student optimizer, EMA and RNG.
template <class T>
class ConsistencyDistiller {
 public:
  ConsistencyDistiller(DenoiserModel<T> teacher, DenoiserModel<T> student,
                       const NoiseSchedule& schedule, DistillConfig cfg)
      : teacher_(std::move(teacher)),
        student_(std::move(student)),
        ema_(student_),
        schedule_(schedule),
        cfg_(cfg),
        grid_(schedule.steps(), cfg.grid_size),
        parm_{cfg.sigma_data, cfg.timestep_scaling, grid_.t_min()},
        opt_(cfg.adam),
        rng_(cfg.seed) {
    cfg_.validate();
  }

  const DenoiserModel<T>& student() const { return student_; }
  const DenoiserModel<T>& ema() const { return ema_; }
  const DenoiserModel<T>& teacher() const { return teacher_; }
  DenoiserModel<T>& mutable_student() { return student_; }
  const ConsistencyParameterization& parameterization() const { return parm_; }
  const DistillGrid& grid() const { return grid_; }
  Rng& rng() { return rng_; }

  DistillStepResult step(const std::vector<TrainItem<T>>& batch) {
    if (batch.empty()) throw ArgumentError("distill_step: empty batch");
    DistillStepResult result{0.0, {}, {}};
    ParameterStore<T> total = student_.params.zeros_like();
    for (const auto& item : batch) {
      const int hi_index = static_cast<int>(rng_.uniform_int(cfg_.skip + 1, cfg_.grid_size));
      const int t_hi = grid_.at(hi_index);
      const int t_lo = grid_.at(hi_index - cfg_.skip);
      auto eps = LatentVideo<T>(Tensor<T>::randn(item.z0.shape(), rng_));
      const double w = rng_.uniform(cfg_.w_min, cfg_.w_max);
      auto z_hi = add_noise(item.z0, eps, t_hi, schedule_);
      auto target = distill_target(teacher_, ema_, z_hi, t_hi, t_lo, item.cond, w, schedule_, parm_, grid_);

      Graph<T> g;
      ParamBinding<T> bind(g, student_.params, true);
      auto pred = consistency_fn(bind, student_.config, g.constant(z_hi.tensor()), t_hi, item.cond,
                                 parm_, grid_, schedule_);
      auto tgt = g.constant(target.tensor());
      auto loss = cfg_.loss == DistillLoss::kHuber ? g.huber(pred, tgt, static_cast<T>(cfg_.huber_delta))
                                                   : g.mse(pred, tgt);
      g.backward(loss);
      auto grads = bind.gradients();
      for (auto& [name, acc] : total) {
        const auto& gi = grads.get(name);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gi[i];
      }
      result.loss += static_cast<double>(g.scalar(loss));
      result.w.push_back(w);
      result.t_pairs.emplace_back(t_hi, t_lo);
    }
    const T inv = T{1} / static_cast<T>(batch.size());
    for (auto& [name, acc] : total)
      for (auto& v : acc.data()) v *= inv;
    result.loss /= static_cast<double>(batch.size());
    opt_.step(student_.params, total);
    ema_update(ema_.params, student_.params, cfg_.ema_decay);
    return result;
  }

 private:
  DenoiserModel<T> teacher_;
  DenoiserModel<T> student_;
  DenoiserModel<T> ema_;
  NoiseSchedule schedule_;
  DistillConfig cfg_;
  DistillGrid grid_;
  ConsistencyParameterization parm_;
  Adam<T> opt_;
  Rng rng_;
};

}  // namespace hb
