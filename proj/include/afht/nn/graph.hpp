#pragma once

// Minimal reverse-mode autodiff over row-major 2D tensors in double precision.
// A Var is a node in a dynamically built graph; nodes whose inputs do not
// require gradients carry no backward closure, so inference builds no tape.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace afht::nn {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return value.size(); }
  double& at(int r, int c) { return value[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return value[static_cast<std::size_t>(r) * cols + c]; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

Var constant(int rows, int cols, std::vector<double> values);
Var zeros(int rows, int cols);
Var leaf(int rows, int cols, std::vector<double> values, bool requires_grad);

// Creates an op node. `backward` is attached only if some parent requires grad.
Var make_op(int rows, int cols, std::vector<double> value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

Var matmul(const Var& a, const Var& b);
// x[n, in] * w[in, out] + b[1, out]; `b` may be null.
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& row);  // row broadcast over x's rows
Var mul_row(const Var& x, const Var& row);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

Var gelu(const Var& x);
Var silu(const Var& x);
Var relu(const Var& x);
Var sigmoid(const Var& x);

// Per-row normalization over columns, no affine: (x - mean) / sqrt(var + eps).
Var layer_norm(const Var& x, double eps);

// out[i] = x[index[i]]; index -1 yields a zero row.
using IndexList = std::shared_ptr<const std::vector<int>>;
Var gather_rows(const Var& x, IndexList index);

// Row-major reinterpretation; element count must match.
Var reshape(const Var& x, int rows, int cols);
Var slice_cols(const Var& x, int start, int len);
// Column-wise concatenation of tensors with equal row counts.
Var concat_cols(const std::vector<Var>& parts);

// out[i] = mean of rows [i*k, (i+1)*k).
Var mean_consecutive_rows(const Var& x, int k);
Var mean_all(const Var& x);
Var sum_all(const Var& x);

struct AttentionShape {
  int groups = 1;  // independent windows
  int heads = 1;
  int q_len = 0;   // queries per group
  int kv_len = 0;  // keys per group
};

// Multi-head scaled dot-product attention run independently per group.
// q: [groups*q_len, D], k/v: [groups*kv_len, D]. `bias` is an optional learned
// additive term of shape [heads, q_len*kv_len] shared by all groups. `mask`
// (optional, groups*q_len*kv_len bytes, 1 = attend) removes pairs entirely.
// If `weights_out` is non-null it receives the softmax weights laid out as
// [groups][heads][q_len][kv_len].
using AttentionMask = std::shared_ptr<const std::vector<std::uint8_t>>;
Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& shape,
              const Var& bias = nullptr, const AttentionMask& mask = nullptr,
              std::vector<double>* weights_out = nullptr);

// Bilinear resize of a [h*w, C] pixel-major map to [out_h*out_w, C], using
// half-pixel centers (align_corners = false) with edge clamping.
Var bilinear_resize(const Var& x, int h, int w, int out_h, int out_w);

// Runs reverse accumulation from `root` (seeded with ones).
void backward(const Var& root);

bool all_finite(const Var& x);

}  // namespace afht::nn
