#pragma once

// Central-difference check of parameter gradients on randomly picked scalars.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hb/rng.hpp"
#include "hb/unet.hpp"

namespace hb {

struct GradCheckResult {
  int checked = 0;
  double worst_relative_error = 0.0;
  std::string worst_name;
  double worst_fd = 0.0;
  double worst_analytic = 0.0;
};

/// Compares `analytic` against (L(p + h e_i) - L(p - h e_i)) / 2h on `count`
/// parameter scalars drawn uniformly (with a seeded Rng) from the store.
inline GradCheckResult check_parameter_gradients(
    const ParameterStore<double>& params, const ParameterStore<double>& analytic,
    const std::function<double(const ParameterStore<double>&)>& loss, int count,
    std::uint64_t seed, double h = 1e-5) {
  std::vector<std::pair<std::string, std::size_t>> flat;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) flat.emplace_back(name, i);
  Rng pick(seed);
  GradCheckResult r;
  for (int k = 0; k < count; ++k) {
    const auto& [name, i] =
        flat[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(flat.size()) - 1))];
    auto plus = params, minus = params;
    plus.get(name)[i] += h;
    minus.get(name)[i] -= h;
    const double fd = (loss(plus) - loss(minus)) / (2 * h);
    const double an = analytic.get(name)[i];
    const double err = std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-8);
    if (err > r.worst_relative_error) {
      r.worst_relative_error = err;
      r.worst_name = name + "[" + std::to_string(i) + "]";
      r.worst_fd = fd;
      r.worst_analytic = an;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace hb
