#include "afht/nn/params.hpp"

#include <cmath>

#include "afht/error.hpp"

namespace afht::nn {

Var ParamSet::add(const std::string& name, int rows, int cols, std::vector<double> values) {
  if (index_.count(name)) throw ParameterError("duplicate parameter '" + name + "'");
  Var v = leaf(rows, cols, std::move(values), true);
  index_[name] = params_.size();
  params_.push_back({name, v});
  return v;
}

Var ParamSet::zeros(const std::string& name, int rows, int cols) {
  return add(name, rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0));
}

Var ParamSet::ones(const std::string& name, int rows, int cols) {
  return add(name, rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 1.0));
}

Var ParamSet::xavier(const std::string& name, int rows, int cols, Rng& rng) {
  const double a = std::sqrt(6.0 / (rows + cols));
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(-a, a);
  return add(name, rows, cols, std::move(v));
}

Var ParamSet::normal(const std::string& name, int rows, int cols, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = stddev * rng.normal();
  return add(name, rows, cols, std::move(v));
}

const Var& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return params_[it->second].var;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->size();
  return n;
}

std::size_t ParamSet::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.var->requires_grad) n += p.var->size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.var->grad.clear();
}

void ParamSet::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_)
    if (p.name.compare(0, prefix.size(), prefix) == 0) p.var->requires_grad = trainable;
}

}  // namespace afht::nn
