#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "afht/nn/graph.hpp"
#include "afht/nn/params.hpp"
#include "afht/rng.hpp"

namespace afht::testing {

struct GradCheck {
  double max_rel = 0.0;
  int checked = 0;
};

// Relative error with an absolute floor so that near-zero gradients compare
// on an absolute scale.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Compares reverse-mode gradients of the scalar `f()` against fourth-order
// central differences on a random `fraction` of every leaf's entries (at
// least one entry per leaf).
inline GradCheck check_gradients(const std::vector<nn::Var>& leaves, const std::function<nn::Var()>& f,
                                 double fraction, Rng& rng, double h = 1e-4) {
  for (const auto& l : leaves) l->grad.clear();
  nn::backward(f());
  GradCheck out;
  for (const auto& l : leaves) {
    const std::vector<double> analytic = l->grad.empty() ? std::vector<double>(l->size(), 0.0) : l->grad;
    const int n = static_cast<int>(l->size());
    const int count = std::max(1, static_cast<int>(std::ceil(fraction * n)));
    for (int c = 0; c < count; ++c) {
      const int i = static_cast<int>(rng.uniform_int(0, n - 1));
      const double orig = l->value[i];
      auto at = [&](double d) {
        l->value[i] = orig + d;
        return f()->value[0];
      };
      const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h);
      l->value[i] = orig;
      out.max_rel = std::max(out.max_rel, rel_error(analytic[i], numeric));
      ++out.checked;
    }
  }
  return out;
}

// Overwrites every parameter with N(0, scale^2) so zero-initialized gates and
// heads do not mask gradients.
inline void randomize(nn::ParamSet& params, Rng& rng, double scale) {
  for (auto& p : params.all())
    for (double& v : p.var->value) v = scale * rng.normal();
}

inline std::vector<nn::Var> leaves_of(const nn::ParamSet& params) {
  std::vector<nn::Var> out;
  for (const auto& p : params.all()) out.push_back(p.var);
  return out;
}

inline nn::Var random_leaf(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = scale * rng.normal();
  return nn::leaf(rows, cols, std::move(v), true);
}

// Fixed random projection to a scalar: sum(x * R).
inline nn::Var project(const nn::Var& x, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> r(x->size());
  for (double& v : r) v = rng.normal();
  return nn::sum_all(nn::mul(x, nn::constant(x->rows, x->cols, std::move(r))));
}

}  // namespace afht::testing
