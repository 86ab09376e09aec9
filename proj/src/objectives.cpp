#include "afht/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "afht/error.hpp"

namespace afht {
namespace {

void check_pair(std::size_t a, std::size_t b, const char* who) {
  if (a != b) throw ParameterError(std::string(who) + ": shape mismatch");
  if (a == 0) throw ParameterError(std::string(who) + ": empty grid");
}

void check_unit_interval(std::span<const double> t, const char* who) {
  for (double v : t)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(who) + ": target outside [0, 1]");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double bce_with_logits(std::span<const double> z, std::span<const double> t) {
  check_pair(z.size(), t.size(), "bce_with_logits");
  check_unit_interval(t, "bce_with_logits");
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    sum += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  return sum / static_cast<double>(z.size());
}

double bce_with_logits(const Grid& logits, const Grid& target) {
  return bce_with_logits(std::span<const double>(logits.values), std::span<const double>(target.values));
}

void bce_with_logits_grad(std::span<const double> z, std::span<const double> t, std::span<double> grad) {
  check_pair(z.size(), t.size(), "bce_with_logits_grad");
  const double inv_n = 1.0 / static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) grad[i] = (sigmoid(z[i]) - t[i]) * inv_n;
}

double soft_iou(std::span<const double> p, std::span<const double> t) {
  check_pair(p.size(), t.size(), "soft_iou");
  double inter = 0.0, uni = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * t[i];
    uni += p[i] + t[i] - p[i] * t[i];
    tsum += t[i];
  }
  if (!(tsum > 0.0)) throw ValidationError("soft_iou: all-zero target");
  return inter / uni;
}

double soft_iou(const Grid& probs, const Grid& target) {
  return soft_iou(std::span<const double>(probs.values), std::span<const double>(target.values));
}

void soft_iou_grad(std::span<const double> p, std::span<const double> t, std::span<double> grad) {
  check_pair(p.size(), t.size(), "soft_iou_grad");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * t[i];
    uni += p[i] + t[i] - p[i] * t[i];
  }
  if (!(uni > 0.0)) throw ValidationError("soft_iou: all-zero target");
  const double inv_u2 = 1.0 / (uni * uni);
  for (std::size_t i = 0; i < p.size(); ++i) grad[i] = (t[i] * uni - inter * (1.0 - t[i])) * inv_u2;
}

LossBreakdown total_loss(const Grid& logits, const Grid& target, double lambda_iou) {
  LossBreakdown out;
  out.lambda_iou = lambda_iou;
  out.bce = bce_with_logits(logits, target);
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = sigmoid(logits.values[i]);
  out.soft_iou_loss = 1.0 - soft_iou(probs, target.values);
  out.total = out.bce + lambda_iou * out.soft_iou_loss;
  return out;
}

nn::Var bce_with_logits_loss(const nn::Var& logits, TargetPtr target) {
  const double v = bce_with_logits(logits->value, *target);
  return nn::make_op(1, 1, {v}, {logits}, [target](nn::Node& self) {
    nn::Node& z = *self.parents[0];
    std::vector<double> g(z.size());
    bce_with_logits_grad(z.value, *target, g);
    auto& dz = z.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dz[i] += self.grad[0] * g[i];
  });
}

nn::Var soft_iou_loss(const nn::Var& probs, TargetPtr target) {
  const double v = 1.0 - soft_iou(probs->value, *target);
  return nn::make_op(1, 1, {v}, {probs}, [target](nn::Node& self) {
    nn::Node& p = *self.parents[0];
    std::vector<double> g(p.size());
    soft_iou_grad(p.value, *target, g);
    auto& dp = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dp[i] -= self.grad[0] * g[i];
  });
}

LossVars total_loss(const nn::Var& logits, TargetPtr target, double lambda_iou) {
  nn::Var bce = bce_with_logits_loss(logits, target);
  nn::Var iou = soft_iou_loss(nn::sigmoid(logits), target);
  LossVars out;
  out.bce = bce->value[0];
  out.soft_iou_loss = iou->value[0];
  out.total = lambda_iou == 0.0 ? bce : nn::add(bce, nn::scale(iou, lambda_iou));
  return out;
}

}  // namespace afht
