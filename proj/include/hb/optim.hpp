#pragma once

#include <cmath>

#include "hb/errors.hpp"
#include "hb/unet.hpp"

namespace hb {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm clip; 0 disables
};

template <class T>
double global_norm(const ParameterStore<T>& grads) {
  double s = 0.0;
  for (const auto& [n, g] : grads) s += sum_squares(g);
  return std::sqrt(s);
}

/// Adam with bias correction. Moments are kept per parameter name.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return step_; }
  void set_learning_rate(double lr) { cfg_.lr = lr; }

  void step(ParameterStore<T>& params, const ParameterStore<T>& grads) {
    if (m_.count() == 0) {
      m_ = params.zeros_like();
      v_ = params.zeros_like();
    }
    ++step_;
    double clip = 1.0;
    if (cfg_.grad_clip > 0.0) {
      const double norm = global_norm(grads);
      if (norm > cfg_.grad_clip) clip = cfg_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
      const auto& g = grads.get(name);
      auto& m = m_.get(name);
      auto& v = v_.get(name);
      if (g.shape() != p.shape()) throw ShapeError("adam: gradient shape mismatch for " + name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * clip;
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
      }
    }
  }

 private:
  AdamConfig cfg_;
  ParameterStore<T> m_, v_;
  long step_ = 0;
};

/// Cosine decay from `peak` at step 0 to `peak * floor` at the last step.
inline double cosine_learning_rate(double peak, double floor, int step, int total) {
  if (total <= 1) return peak;
  const double progress = static_cast<double>(step) / static_cast<double>(total - 1);
  return peak * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846)));
}

/// ema <- decay * ema + (1 - decay) * online
template <class T>
void ema_update(ParameterStore<T>& ema, const ParameterStore<T>& online, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
  const T mu = static_cast<T>(decay);
  const T one_minus = static_cast<T>(1.0 - decay);
  for (auto& [name, e] : ema) {
    const auto& o = online.get(name);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = mu * e[i] + one_minus * o[i];
  }
}

}  // namespace hb
