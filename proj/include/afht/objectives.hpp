#pragma once

#include <memory>
#include <span>
#include <vector>

#include "afht/nn/graph.hpp"
#include "afht/types.hpp"

namespace afht {

struct LossBreakdown {
  double bce = 0.0;
  double soft_iou_loss = 0.0;
  double total = 0.0;
  double lambda_iou = 1.0;
};

// Mean over pixels of -[t log s(z) + (1 - t) log(1 - s(z))] in the stable
// form max(z, 0) - z t + log(1 + exp(-|z|)). Targets must lie in [0, 1].
double bce_with_logits(std::span<const double> logits, std::span<const double> target);
double bce_with_logits(const Grid& logits, const Grid& target);
// d bce / d logits (for the mean), written into `grad`.
void bce_with_logits_grad(std::span<const double> logits, std::span<const double> target,
                          std::span<double> grad);

// sum(p t) / sum(p + t - p t). Requires sum(target) > 0.
double soft_iou(std::span<const double> probs, std::span<const double> target);
double soft_iou(const Grid& probs, const Grid& target);
// d soft_iou / d probs.
void soft_iou_grad(std::span<const double> probs, std::span<const double> target, std::span<double> grad);

LossBreakdown total_loss(const Grid& logits, const Grid& target, double lambda_iou);

// Graph versions; `target` is a shared constant.
using TargetPtr = std::shared_ptr<const std::vector<double>>;
nn::Var bce_with_logits_loss(const nn::Var& logits, TargetPtr target);
nn::Var soft_iou_loss(const nn::Var& probs, TargetPtr target);  // 1 - soft_iou

struct LossVars {
  nn::Var total;
  double bce = 0.0;
  double soft_iou_loss = 0.0;
};
LossVars total_loss(const nn::Var& logits, TargetPtr target, double lambda_iou);

}  // namespace afht
