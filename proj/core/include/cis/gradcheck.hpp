#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cis/tensor.hpp"

namespace cis {

// Central finite differences against reverse-mode gradients, double precision.
// `forward` must rebuild the graph from the leaf tensors on every call (leaves
// are perturbed in place between calls) and must be free of side effects.
//
// Reported error: max_i |g_i - fd_i| / max(max|g|, max|fd|, 1e-8).
inline double finite_difference_check(std::vector<TensorD> leaves,
                                      const std::function<TensorD()>& forward,
                                      double h = 1e-5) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  TensorD loss = forward();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  double max_mag = 0.0;
  for (auto& l : leaves) {
    std::vector<double> g(static_cast<std::size_t>(l.size()), 0.0);
    if (l.has_grad()) std::copy(l.grad().begin(), l.grad().end(), g.begin());
    for (double v : g) max_mag = std::max(max_mag, std::abs(v));
    analytic.push_back(std::move(g));
  }

  double max_abs_diff = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto vals = leaves[li].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = forward().item();
      vals[i] = orig - h;
      const double fm = forward().item();
      vals[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      max_mag = std::max(max_mag, std::abs(fd));
      max_abs_diff = std::max(max_abs_diff, std::abs(analytic[li][i] - fd));
    }
  }
  return max_abs_diff / std::max(max_mag, 1e-8);
}

struct LayerCheck {
  std::string name;
  double max_rel_err;
  bool passed;
};

// Finite-difference verification of every layer type at random inputs
// (seeded). Threshold is the gradient-integrity bar for single ops.
std::vector<LayerCheck> run_layer_gradchecks(std::uint64_t seed, double tolerance = 1e-5);

}  // namespace cis
