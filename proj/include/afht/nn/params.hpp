#pragma once

#include <map>
#include <string>
#include <vector>

#include "afht/nn/graph.hpp"
#include "afht/rng.hpp"

namespace afht::nn {

struct Parameter {
  std::string name;
  Var var;
};

// Named, ordered collection of trainable tensors. Registration order is the
// serialization order.
class ParamSet {
 public:
  Var add(const std::string& name, int rows, int cols, std::vector<double> values);
  Var zeros(const std::string& name, int rows, int cols);
  Var ones(const std::string& name, int rows, int cols);
  // Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
  Var xavier(const std::string& name, int rows, int cols, Rng& rng);
  Var normal(const std::string& name, int rows, int cols, double stddev, Rng& rng);

  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::size_t scalar_count() const;
  std::size_t trainable_scalar_count() const;
  void zero_grad();
  // Freezes (requires_grad = false) or unfreezes every parameter whose name
  // starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace afht::nn
