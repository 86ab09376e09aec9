#pragma once

#include <string>
#include <vector>

#include "afht/config.hpp"
#include "afht/nn/params.hpp"
#include "afht/types.hpp"

namespace afht {

// "surgery: ...; tool: ...; action: ...; objective: predict the safe tissue
// interaction region."
std::string render_prompt(const PromptTriplet& triplet);

// Maps a prompt triplet to a [1, cond_dim] condition vector in the shared
// embedding space. Implementations may wrap a pretrained text tower.
class ConditionEncoder {
 public:
  virtual ~ConditionEncoder() = default;
  virtual nn::Var encode(const PromptTriplet& triplet) const = 0;
  virtual int dim() const = 0;
};

// Learned per-slot embedding tables (surgery, tool, action; each with a
// trailing null token) -> concat -> Linear -> SiLU -> Linear.
class TableConditionEncoder final : public ConditionEncoder {
 public:
  TableConditionEncoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng,
                        const std::string& prefix = "cond.");

  nn::Var encode(const PromptTriplet& triplet) const override;
  int dim() const override { return dim_; }

  // Row index of a token in its table; throws ValidationError listing the
  // known vocabulary when absent.
  int surgery_index(const std::string& s) const;
  int tool_index(const std::string& s) const;
  int action_index(const std::string& s) const;

 private:
  ModelConfig cfg_;
  int dim_;
  nn::Var surgery_table_, tool_table_, action_table_;
  nn::Var fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  nn::Var null_condition_;
};

}  // namespace afht
