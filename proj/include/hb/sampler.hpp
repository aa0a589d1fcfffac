#pragma once

#include <cstdint>

#include "hb/diffusion.hpp"
#include "hb/rng.hpp"
#include "hb/unet.hpp"

namespace hb {

struct LatentShape {
  std::size_t frames = 8;
  std::size_t channels = 48;
  std::size_t height = 8;
  std::size_t width = 8;

  Shape shape() const { return {frames, channels, height, width}; }
};

/// Guided epsilon estimate. w == 0 evaluates only the null branch and
/// w == 1 only the conditional branch; other weights evaluate both.
template <class T>
LatentVideo<T> guided_epsilon(const DenoiserModel<T>& model, const LatentVideo<T>& z_t, int t,
                              const ConditioningBundle<T>& cond, double w) {
  if (w == 0.0) return unet_forward(model.params, model.config, z_t, t, cond.as_null());
  if (w == 1.0) return unet_forward(model.params, model.config, z_t, t, cond);
  auto eps_c = unet_forward(model.params, model.config, z_t, t, cond);
  auto eps_u = unet_forward(model.params, model.config, z_t, t, cond.as_null());
  return cfg_combine(eps_u, eps_c, w);
}

/// Deterministic DDIM sampling from seeded Gaussian noise down to t = 0.
template <class T>
LatentVideo<T> sample(const DenoiserModel<T>& model, const ConditioningBundle<T>& cond,
                      const NoiseSchedule& schedule, int steps, double w, std::uint64_t seed,
                      const LatentShape& shape) {
  Rng rng(seed);
  LatentVideo<T> z(gaussian_like<T>(shape.shape(), rng));
  const auto ts = sampling_timesteps(schedule.steps(), steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    auto eps = guided_epsilon(model, z, t, cond, w);
    z = ddim_step(z, eps, t, s, schedule);
  }
  return z;
}

}  // namespace hb
