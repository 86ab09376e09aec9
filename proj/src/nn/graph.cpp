#include "afht/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_set>

// Small products otherwise take Eigen's coefficient-wise path, whose result
// depends on operand alignment under wide SIMD. Routing every product through
// the packed kernel keeps repeated evaluations bit-identical.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

#include "afht/error.hpp"

namespace afht::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
using StridedC = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedM = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

void require(bool ok, const char* what) {
  if (!ok) throw ParameterError(std::string("tensor shape mismatch in ") + what);
}

bool needs_grad(const Var& v) { return v && v->requires_grad; }

template <typename Fwd, typename Dfdx>
Var unary(const Var& x, Fwd f, Dfdx df) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x->value[i]);
  return make_op(x->rows, x->cols, std::move(out), {x}, [df](Node& self) {
    Node& in = *self.parents[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

}  // namespace

Var constant(int rows, int cols, std::vector<double> values) {
  return leaf(rows, cols, std::move(values), false);
}

Var zeros(int rows, int cols) {
  return leaf(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0), false);
}

Var leaf(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw ParameterError("leaf: value count does not match shape");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

Var make_op(int rows, int cols, std::vector<double> value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(), needs_grad);
  if (any) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return n;
}

Var matmul(const Var& a, const Var& b) {
  require(a->cols == b->rows, "matmul");
  std::vector<double> out(static_cast<std::size_t>(a->rows) * b->cols);
  MapM(out.data(), a->rows, b->cols).noalias() =
      MapC(a->value.data(), a->rows, a->cols) * MapC(b->value.data(), b->rows, b->cols);
  return make_op(a->rows, b->cols, std::move(out), {a, b}, [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    MapC G(self.grad.data(), self.rows, self.cols);
    if (A.requires_grad)
      MapM(A.ensure_grad().data(), A.rows, A.cols).noalias() +=
          G * MapC(B.value.data(), B.rows, B.cols).transpose();
    if (B.requires_grad)
      MapM(B.ensure_grad().data(), B.rows, B.cols).noalias() +=
          MapC(A.value.data(), A.rows, A.cols).transpose() * G;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x->cols == w->rows, "linear");
  require(!b || (b->rows == 1 && b->cols == w->cols), "linear bias");
  std::vector<double> out(static_cast<std::size_t>(x->rows) * w->cols);
  MapM O(out.data(), x->rows, w->cols);
  O.noalias() = MapC(x->value.data(), x->rows, x->cols) * MapC(w->value.data(), w->rows, w->cols);
  if (b) O.rowwise() += MapC(b->value.data(), 1, b->cols).row(0);
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_op(x->rows, w->cols, std::move(out), std::move(parents), [](Node& self) {
    Node& X = *self.parents[0];
    Node& W = *self.parents[1];
    MapC G(self.grad.data(), self.rows, self.cols);
    if (X.requires_grad)
      MapM(X.ensure_grad().data(), X.rows, X.cols).noalias() +=
          G * MapC(W.value.data(), W.rows, W.cols).transpose();
    if (W.requires_grad)
      MapM(W.ensure_grad().data(), W.rows, W.cols).noalias() +=
          MapC(X.value.data(), X.rows, X.cols).transpose() * G;
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Node& B = *self.parents[2];
      double* gb = B.ensure_grad().data();
      // Row-sequential sum; Eigen's partial reduction order depends on alignment.
      for (int r = 0; r < self.rows; ++r) {
        const double* g = self.grad.data() + static_cast<std::size_t>(r) * self.cols;
        for (int c = 0; c < self.cols; ++c) gb[c] += g[c];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a->rows == b->rows && a->cols == b->cols, "add");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op(a->rows, a->cols, std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  require(a->rows == b->rows && a->cols == b->cols, "mul");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_op(a->rows, a->cols, std::move(out), {a, b}, [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  require(row->rows == 1 && row->cols == x->cols, "add_row");
  std::vector<double> out(x->size());
  const int n = x->rows, c = x->cols;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + j] + row->value[j];
  return make_op(n, c, std::move(out), {x, row}, [](Node& self) {
    Node& X = *self.parents[0];
    Node& R = *self.parents[1];
    if (X.requires_grad) {
      auto& g = X.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (R.requires_grad) {
      auto& g = R.ensure_grad();
      for (int i = 0; i < self.rows; ++i)
        for (int j = 0; j < self.cols; ++j) g[j] += self.grad[i * self.cols + j];
    }
  });
}

Var mul_row(const Var& x, const Var& row) {
  require(row->rows == 1 && row->cols == x->cols, "mul_row");
  std::vector<double> out(x->size());
  const int n = x->rows, c = x->cols;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + j] * row->value[j];
  return make_op(n, c, std::move(out), {x, row}, [](Node& self) {
    Node& X = *self.parents[0];
    Node& R = *self.parents[1];
    const int c = self.cols;
    if (X.requires_grad) {
      auto& g = X.ensure_grad();
      for (int i = 0; i < self.rows; ++i)
        for (int j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * R.value[j];
    }
    if (R.requires_grad) {
      auto& g = R.ensure_grad();
      for (int i = 0; i < self.rows; ++i)
        for (int j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * X.value[i * c + j];
    }
  });
}

Var scale(const Var& x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var gelu(const Var& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var layer_norm(const Var& x, double eps) {
  const int n = x->rows, c = x->cols;
  std::vector<double> out(x->size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (int i = 0; i < n; ++i) {
    const double* row = x->value.data() + static_cast<std::size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] = (row[j] - mean) * is;
  }
  return make_op(n, c, std::move(out), {x}, [inv_std](Node& self) {
    Node& X = *self.parents[0];
    auto& g = X.ensure_grad();
    const int c = self.cols;
    for (int i = 0; i < self.rows; ++i) {
      const double* dy = self.grad.data() + static_cast<std::size_t>(i) * c;
      const double* xh = self.value.data() + static_cast<std::size_t>(i) * c;
      double mean_dy = 0.0, mean_dy_xh = 0.0;
      for (int j = 0; j < c; ++j) {
        mean_dy += dy[j];
        mean_dy_xh += dy[j] * xh[j];
      }
      mean_dy /= c;
      mean_dy_xh /= c;
      const double is = (*inv_std)[i];
      for (int j = 0; j < c; ++j)
        g[static_cast<std::size_t>(i) * c + j] += is * (dy[j] - mean_dy - xh[j] * mean_dy_xh);
    }
  });
}

Var gather_rows(const Var& x, IndexList index) {
  const int c = x->cols;
  const int n = static_cast<int>(index->size());
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i) {
    const int src = (*index)[i];
    if (src < 0) continue;
    if (src >= x->rows) throw ParameterError("gather_rows: index out of range");
    std::copy_n(x->value.data() + static_cast<std::size_t>(src) * c, c,
                out.data() + static_cast<std::size_t>(i) * c);
  }
  return make_op(n, c, std::move(out), {x}, [index](Node& self) {
    Node& X = *self.parents[0];
    auto& g = X.ensure_grad();
    const int c = self.cols;
    for (int i = 0; i < self.rows; ++i) {
      const int src = (*index)[i];
      if (src < 0) continue;
      double* dst = g.data() + static_cast<std::size_t>(src) * c;
      const double* gi = self.grad.data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) dst[j] += gi[j];
    }
  });
}

Var reshape(const Var& x, int rows, int cols) {
  require(static_cast<std::size_t>(rows) * cols == x->size(), "reshape");
  return make_op(rows, cols, x->value, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var slice_cols(const Var& x, int start, int len) {
  require(start >= 0 && len >= 0 && start + len <= x->cols, "slice_cols");
  const int n = x->rows, c = x->cols;
  std::vector<double> out(static_cast<std::size_t>(n) * len);
  for (int i = 0; i < n; ++i)
    std::copy_n(x->value.data() + static_cast<std::size_t>(i) * c + start, len,
                out.data() + static_cast<std::size_t>(i) * len);
  return make_op(n, len, std::move(out), {x}, [start](Node& self) {
    Node& X = *self.parents[0];
    auto& g = X.ensure_grad();
    for (int i = 0; i < self.rows; ++i)
      for (int j = 0; j < self.cols; ++j)
        g[static_cast<std::size_t>(i) * X.cols + start + j] +=
            self.grad[static_cast<std::size_t>(i) * self.cols + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols");
  const int n = parts[0]->rows;
  int c = 0;
  for (const auto& p : parts) {
    require(p->rows == n, "concat_cols");
    c += p->cols;
  }
  std::vector<double> out(static_cast<std::size_t>(n) * c);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < n; ++i)
      std::copy_n(p->value.data() + static_cast<std::size_t>(i) * p->cols, p->cols,
                  out.data() + static_cast<std::size_t>(i) * c + off);
    off += p->cols;
  }
  return make_op(n, c, std::move(out), parts, [](Node& self) {
    int off = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (int i = 0; i < self.rows; ++i)
          for (int j = 0; j < p->cols; ++j)
            g[static_cast<std::size_t>(i) * p->cols + j] +=
                self.grad[static_cast<std::size_t>(i) * self.cols + off + j];
      }
      off += p->cols;
    }
  });
}

Var mean_consecutive_rows(const Var& x, int k) {
  require(k >= 1 && x->rows % k == 0, "mean_consecutive_rows");
  const int n = x->rows / k, c = x->cols;
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < c; ++j)
        out[static_cast<std::size_t>(i) * c + j] +=
            x->value[(static_cast<std::size_t>(i) * k + r) * c + j] / k;
  return make_op(n, c, std::move(out), {x}, [k](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const int c = self.cols;
    for (int i = 0; i < self.rows; ++i)
      for (int r = 0; r < k; ++r)
        for (int j = 0; j < c; ++j)
          g[(static_cast<std::size_t>(i) * k + r) * c + j] +=
              self.grad[static_cast<std::size_t>(i) * c + j] / k;
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x->value) s += v;
  return make_op(1, 1, {s}, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& gi : g) gi += self.grad[0];
  });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x->size())); }

Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& s, const Var& bias,
              const AttentionMask& mask, std::vector<double>* weights_out) {
  const int D = q->cols;
  require(k->cols == D && v->cols == D, "attention width");
  require(q->rows == s.groups * s.q_len && k->rows == s.groups * s.kv_len &&
              v->rows == s.groups * s.kv_len,
          "attention rows");
  if (s.heads < 1 || D % s.heads != 0)
    throw ParameterError("attention: width " + std::to_string(D) + " not divisible by " +
                         std::to_string(s.heads) + " heads");
  require(!bias || (bias->rows == s.heads && bias->cols == s.q_len * s.kv_len), "attention bias");
  require(!mask || mask->size() == static_cast<std::size_t>(s.groups) * s.q_len * s.kv_len,
          "attention mask");
  const int dh = D / s.heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t block = static_cast<std::size_t>(s.q_len) * s.kv_len;
  auto probs = std::make_shared<std::vector<double>>(block * s.groups * s.heads);
  std::vector<double> out(static_cast<std::size_t>(q->rows) * D, 0.0);

  for (int g = 0; g < s.groups; ++g) {
    const std::uint8_t* m = mask ? mask->data() + g * block : nullptr;
    for (int h = 0; h < s.heads; ++h) {
      StridedC Q(q->value.data() + static_cast<std::size_t>(g) * s.q_len * D + h * dh, s.q_len, dh,
                 Eigen::OuterStride<>(D));
      StridedC K(k->value.data() + static_cast<std::size_t>(g) * s.kv_len * D + h * dh, s.kv_len,
                 dh, Eigen::OuterStride<>(D));
      StridedC V(v->value.data() + static_cast<std::size_t>(g) * s.kv_len * D + h * dh, s.kv_len,
                 dh, Eigen::OuterStride<>(D));
      double* P = probs->data() + (static_cast<std::size_t>(g) * s.heads + h) * block;
      MapM S(P, s.q_len, s.kv_len);
      S.noalias() = (Q * K.transpose()) * sc;
      if (bias) S += MapC(bias->value.data() + h * block, s.q_len, s.kv_len);
      for (int i = 0; i < s.q_len; ++i) {
        double* row = P + static_cast<std::size_t>(i) * s.kv_len;
        const std::uint8_t* mrow = m ? m + static_cast<std::size_t>(i) * s.kv_len : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < s.kv_len; ++j)
          if (!mrow || mrow[j]) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < s.kv_len; ++j) {
          row[j] = (!mrow || mrow[j]) ? std::exp(row[j] - mx) : 0.0;
          z += row[j];
        }
        for (int j = 0; j < s.kv_len; ++j) row[j] /= z;
      }
      StridedM O(out.data() + static_cast<std::size_t>(g) * s.q_len * D + h * dh, s.q_len, dh,
                 Eigen::OuterStride<>(D));
      O.noalias() = S * V;
    }
  }
  if (weights_out) *weights_out = *probs;

  std::vector<Var> parents{q, k, v};
  if (bias) parents.push_back(bias);
  return make_op(q->rows, D, std::move(out), std::move(parents), [probs, s, dh, sc, block](Node& self) {
    Node& Qn = *self.parents[0];
    Node& Kn = *self.parents[1];
    Node& Vn = *self.parents[2];
    Node* Bn = self.parents.size() > 3 ? self.parents[3].get() : nullptr;
    const int D = self.cols;
    double* gq = Qn.requires_grad ? Qn.ensure_grad().data() : nullptr;
    double* gk = Kn.requires_grad ? Kn.ensure_grad().data() : nullptr;
    double* gv = Vn.requires_grad ? Vn.ensure_grad().data() : nullptr;
    double* gb = (Bn && Bn->requires_grad) ? Bn->ensure_grad().data() : nullptr;
    RowMat dP(s.q_len, s.kv_len);
    for (int g = 0; g < s.groups; ++g) {
      for (int h = 0; h < s.heads; ++h) {
        const std::size_t qoff = static_cast<std::size_t>(g) * s.q_len * D + h * dh;
        const std::size_t koff = static_cast<std::size_t>(g) * s.kv_len * D + h * dh;
        StridedC dO(self.grad.data() + qoff, s.q_len, dh, Eigen::OuterStride<>(D));
        StridedC Q(Qn.value.data() + qoff, s.q_len, dh, Eigen::OuterStride<>(D));
        StridedC K(Kn.value.data() + koff, s.kv_len, dh, Eigen::OuterStride<>(D));
        StridedC V(Vn.value.data() + koff, s.kv_len, dh, Eigen::OuterStride<>(D));
        MapC P(probs->data() + (static_cast<std::size_t>(g) * s.heads + h) * block, s.q_len, s.kv_len);
        if (gv) StridedM(gv + koff, s.kv_len, dh, Eigen::OuterStride<>(D)).noalias() += P.transpose() * dO;
        dP.noalias() = dO * V.transpose();
        // dS = P * (dP - rowsum(dP * P))
        for (int i = 0; i < s.q_len; ++i) {
          double dot = 0.0;
          for (int j = 0; j < s.kv_len; ++j) dot += dP(i, j) * P(i, j);
          for (int j = 0; j < s.kv_len; ++j) dP(i, j) = P(i, j) * (dP(i, j) - dot);
        }
        if (gb) MapM(gb + h * block, s.q_len, s.kv_len) += dP;
        if (gq) StridedM(gq + qoff, s.q_len, dh, Eigen::OuterStride<>(D)).noalias() += sc * (dP * K);
        if (gk)
          StridedM(gk + koff, s.kv_len, dh, Eigen::OuterStride<>(D)).noalias() +=
              sc * (dP.transpose() * Q);
      }
    }
  });
}

Var bilinear_resize(const Var& x, int h, int w, int out_h, int out_w) {
  require(x->rows == h * w, "bilinear_resize");
  struct Tap {
    int i0, i1;
    double w0, w1;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * ratio - 0.5;
      if (src < 0.0) src = 0.0;
      int i0 = static_cast<int>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      const int i1 = std::min(i0 + 1, in - 1);
      const double l = src - i0;
      t[o] = {i0, i1, 1.0 - l, l};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(w, out_w));
  const int c = x->cols;
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * c, 0.0);
  for (int oy = 0; oy < out_h; ++oy) {
    const Tap& a = (*ty)[oy];
    for (int ox = 0; ox < out_w; ++ox) {
      const Tap& b = (*tx)[ox];
      double* o = out.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
      const double* v00 = x->value.data() + (static_cast<std::size_t>(a.i0) * w + b.i0) * c;
      const double* v01 = x->value.data() + (static_cast<std::size_t>(a.i0) * w + b.i1) * c;
      const double* v10 = x->value.data() + (static_cast<std::size_t>(a.i1) * w + b.i0) * c;
      const double* v11 = x->value.data() + (static_cast<std::size_t>(a.i1) * w + b.i1) * c;
      for (int j = 0; j < c; ++j)
        o[j] = a.w0 * (b.w0 * v00[j] + b.w1 * v01[j]) + a.w1 * (b.w0 * v10[j] + b.w1 * v11[j]);
    }
  }
  return make_op(out_h * out_w, c, std::move(out), {x}, [ty, tx, w, out_w](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const int c = self.cols;
    for (int oy = 0; oy < static_cast<int>(ty->size()); ++oy) {
      const Tap& a = (*ty)[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& b = (*tx)[ox];
        const double* go = self.grad.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
        auto acc = [&](int iy, int ix, double wt) {
          double* d = g.data() + (static_cast<std::size_t>(iy) * w + ix) * c;
          for (int j = 0; j < c; ++j) d[j] += wt * go[j];
        };
        acc(a.i0, b.i0, a.w0 * b.w0);
        acc(a.i0, b.i1, a.w0 * b.w1);
        acc(a.i1, b.i0, a.w1 * b.w0);
        acc(a.i1, b.i1, a.w1 * b.w1);
      }
    }
  });
}

void backward(const Var& root) {
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  std::fill(root->grad.begin(), root->grad.end(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

bool all_finite(const Var& x) {
  return std::all_of(x->value.begin(), x->value.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace afht::nn
