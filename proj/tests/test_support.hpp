#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hb/autograd.hpp"
#include "hb/rng.hpp"

namespace hb::testing {

using GraphD = Graph<double>;
using VarD = GraphD::Var;

/// Largest relative error between backprop and central differences for a
/// scalar function of the given inputs.
inline double max_gradient_error(
    const std::vector<Tensor<double>>& inputs,
    const std::function<VarD(GraphD&, const std::vector<VarD>&)>& build, double h = 1e-6) {
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    GraphD g;
    std::vector<VarD> vs;
    for (const auto& x : xs) vs.push_back(g.constant(x));
    return g.scalar(build(g, vs));
  };
  GraphD g;
  std::vector<VarD> vs;
  for (const auto& x : inputs) vs.push_back(g.variable(x));
  g.backward(build(g, vs));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = g.grad(vs[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs;
      auto minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double fd = (eval(plus) - eval(minus)) / (2 * h);
      const double err = std::abs(fd - analytic[i]) / std::max(1e-6, std::abs(fd) + std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline Tensor<double> random_tensor(Shape s, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  return Tensor<double>::randn(std::move(s), rng, sd);
}

}  // namespace hb::testing
