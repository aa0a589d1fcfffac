#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hb/autograd.hpp"
#include "hb/errors.hpp"
#include "hb/rng.hpp"
#include "hb/tensor.hpp"
#include "hb/video.hpp"

namespace hb {

/// Discrete variance-preserving schedule. Index 0 is the clean endpoint
/// (alpha_bar[0] = 1); indices 1..T are noising steps.
class NoiseSchedule {
 public:
  NoiseSchedule(int steps, double beta_start, double beta_end)
      : steps_(steps), beta_start_(beta_start), beta_end_(beta_end) {
    if (steps < 2) throw ConfigError("schedule: T must be >= 2");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
      throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
      const double frac = static_cast<double>(t - 1) / static_cast<double>(steps - 1);
      beta_[t] = beta_start + frac * (beta_end - beta_start);
      alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t]);
    }
  }

  int steps() const { return steps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double beta(int t) const { return beta_.at(checked(t, 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(checked(t, 0)); }

 private:
  std::size_t checked(int t, int lo) const {
    if (t < lo || t > steps_)
      throw IndexError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(steps_) + "]");
    return static_cast<std::size_t>(t);
  }

  int steps_;
  double beta_start_, beta_end_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

inline NoiseSchedule build_schedule(int steps = 1000, double beta_start = 1e-4,
                                    double beta_end = 2e-2) {
  return NoiseSchedule(steps, beta_start, beta_end);
}

/// Conditions of the denoiser: text (c_T), frame rate, optional boundary
/// frame latents, and whether this is the unconditional (null) branch.
template <class T = float>
struct ConditioningBundle {
  Tensor<T> text_embedding;
  double fps = 8.0;
  std::optional<Tensor<T>> first_frame_latent;  // [C_lat, h, w]
  std::optional<Tensor<T>> last_frame_latent;   // [C_lat, h, w]
  bool null_flag = false;

  ConditioningBundle as_null() const {
    ConditioningBundle c = *this;
    c.null_flag = true;
    return c;
  }
};

template <class T>
LatentVideo<T> add_noise(const LatentVideo<T>& z0, const LatentVideo<T>& eps, int t,
                         const NoiseSchedule& schedule) {
  require_same_shape(z0.tensor(), eps.tensor(), "add_noise");
  if (t < 1 || t > schedule.steps())
    throw IndexError("add_noise: t=" + std::to_string(t) + " outside [1, T]");
  const T a = static_cast<T>(std::sqrt(schedule.alpha_bar(t)));
  const T s = static_cast<T>(std::sqrt(1.0 - schedule.alpha_bar(t)));
  Tensor<T> out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0.tensor()[i] + s * eps.tensor()[i];
  return LatentVideo<T>(std::move(out));
}

/// eps_uncond + w * (eps_cond - eps_uncond)
template <class T>
LatentVideo<T> cfg_combine(const LatentVideo<T>& eps_uncond, const LatentVideo<T>& eps_cond,
                           double w) {
  require_same_shape(eps_uncond.tensor(), eps_cond.tensor(), "cfg_combine");
  const T wt = static_cast<T>(w);
  Tensor<T> out(eps_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T u = eps_uncond.tensor()[i];
    out[i] = u + wt * (eps_cond.tensor()[i] - u);
  }
  return LatentVideo<T>(std::move(out));
}

template <class T>
typename Graph<T>::Var cfg_combine(Graph<T>& g, typename Graph<T>::Var eps_uncond,
                                   typename Graph<T>::Var eps_cond, double w) {
  return g.lincomb(eps_uncond, static_cast<T>(1.0 - w), eps_cond, static_cast<T>(w));
}

namespace detail {

struct DdimCoefficients {
  double from_z;    // multiplies z_t
  double from_eps;  // multiplies eps_hat
};

inline DdimCoefficients ddim_coefficients(int t, int s, const NoiseSchedule& schedule,
                                          bool allow_identity) {
  if (s > t || (s == t && !allow_identity))
    throw OrderingError("ddim_step: target timestep " + std::to_string(s) +
                        " must be below source " + std::to_string(t));
  if (s < 0) throw IndexError("ddim_step: negative target timestep");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_s = schedule.alpha_bar(s);
  // z_s = sqrt(ab_s) * (z_t - sqrt(1-ab_t) eps) / sqrt(ab_t) + sqrt(1-ab_s) eps
  const double from_z = std::sqrt(ab_s) / std::sqrt(ab_t);
  const double from_eps = std::sqrt(1.0 - ab_s) - from_z * std::sqrt(1.0 - ab_t);
  return {from_z, from_eps};
}

}  // namespace detail

/// Deterministic DDIM (eta = 0) update from t to s < t. `allow_identity`
/// admits s == t, which is only meaningful in tests.
template <class T>
LatentVideo<T> ddim_step(const LatentVideo<T>& z_t, const LatentVideo<T>& eps_hat, int t, int s,
                         const NoiseSchedule& schedule, bool allow_identity = false) {
  require_same_shape(z_t.tensor(), eps_hat.tensor(), "ddim_step");
  detail::ddim_coefficients(t, s, schedule, allow_identity);
  if (s == t) return z_t;
  const double ab_t = schedule.alpha_bar(t);
  const double ab_s = schedule.alpha_bar(s);
  const double sq_t = std::sqrt(1.0 - ab_t), rt_t = std::sqrt(ab_t);
  const double sq_s = std::sqrt(1.0 - ab_s), rt_s = std::sqrt(ab_s);
  Tensor<T> out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e = eps_hat.tensor()[i];
    const double z0 = (static_cast<double>(z_t.tensor()[i]) - sq_t * e) / rt_t;
    out[i] = static_cast<T>(rt_s * z0 + sq_s * e);
  }
  return LatentVideo<T>(std::move(out));
}

template <class T>
typename Graph<T>::Var ddim_step(Graph<T>& g, typename Graph<T>::Var z_t,
                                 typename Graph<T>::Var eps_hat, int t, int s,
                                 const NoiseSchedule& schedule) {
  const auto c = detail::ddim_coefficients(t, s, schedule, false);
  return g.lincomb(z_t, static_cast<T>(c.from_z), eps_hat, static_cast<T>(c.from_eps));
}

/// x0-estimate (z_t - sqrt(1-ab_t) eps) / sqrt(ab_t).
template <class T>
typename Graph<T>::Var predict_x0(Graph<T>& g, typename Graph<T>::Var z_t,
                                  typename Graph<T>::Var eps_hat, int t,
                                  const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bar(t);
  return g.lincomb(z_t, static_cast<T>(1.0 / std::sqrt(ab)), eps_hat,
                   static_cast<T>(-std::sqrt(1.0 - ab) / std::sqrt(ab)));
}

/// Descending sampling grid for `steps` model evaluations: uniform between T
/// and 1, rounded down. The final evaluation steps to t = 0.
inline std::vector<int> sampling_timesteps(int T, int steps) {
  if (steps < 1) throw ArgumentError("sampling needs at least one step");
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(steps));
  if (steps == 1) return {T};
  for (int i = 0; i < steps; ++i) {
    const double v = static_cast<double>(T) -
                     static_cast<double>(i) * static_cast<double>(T - 1) / (steps - 1);
    ts.push_back(static_cast<int>(std::floor(v + 1e-9)));
  }
  return ts;
}

template <class T>
Tensor<T> gaussian_like(const Shape& shape, Rng& rng) {
  return Tensor<T>::randn(shape, rng);
}

}  // namespace hb
