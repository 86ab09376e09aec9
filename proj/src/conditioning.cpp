#include "afht/conditioning.hpp"

#include <algorithm>
#include <memory>

#include "afht/error.hpp"

namespace afht {
namespace {

int lookup(const std::vector<std::string>& vocab, const std::string& token, const char* slot) {
  auto it = std::find(vocab.begin(), vocab.end(), token);
  if (it != vocab.end()) return static_cast<int>(it - vocab.begin());
  std::string known;
  for (const auto& v : vocab) known += (known.empty() ? "" : ", ") + v;
  throw ValidationError(std::string("unknown ") + slot + " token '" + token + "' (known: " + known + ")");
}

}  // namespace

std::string render_prompt(const PromptTriplet& t) {
  if (t.surgery.empty() || t.tool.empty() || t.action.empty())
    throw ParameterError("render_prompt: empty triplet field");
  return "surgery: " + t.surgery + "; tool: " + t.tool + "; action: " + t.action +
         "; objective: predict the safe tissue interaction region.";
}

TableConditionEncoder::TableConditionEncoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng,
                                             const std::string& prefix)
    : cfg_(cfg), dim_(cfg.cond_dim) {
  const int e = cfg.token_dim;
  surgery_table_ = params.normal(prefix + "surgery_table", static_cast<int>(cfg.surgeries.size()) + 1, e, 1.0, rng);
  tool_table_ = params.normal(prefix + "tool_table", static_cast<int>(cfg.tools.size()) + 1, e, 1.0, rng);
  action_table_ = params.normal(prefix + "action_table", static_cast<int>(cfg.actions.size()) + 1, e, 1.0, rng);
  fc1_w_ = params.xavier(prefix + "fc1.w", 3 * e, cfg.cond_hidden, rng);
  fc1_b_ = params.zeros(prefix + "fc1.b", 1, cfg.cond_hidden);
  fc2_w_ = params.xavier(prefix + "fc2.w", cfg.cond_hidden, cfg.cond_dim, rng);
  fc2_b_ = params.zeros(prefix + "fc2.b", 1, cfg.cond_dim);
  null_condition_ = params.normal(prefix + "null_condition", 1, cfg.cond_dim, 1.0, rng);
}

int TableConditionEncoder::surgery_index(const std::string& s) const {
  return lookup(cfg_.surgeries, s, "surgery");
}
int TableConditionEncoder::tool_index(const std::string& s) const { return lookup(cfg_.tools, s, "tool"); }
int TableConditionEncoder::action_index(const std::string& s) const {
  return lookup(cfg_.actions, s, "action");
}

nn::Var TableConditionEncoder::encode(const PromptTriplet& t) const {
  if (cfg_.condition == ConditionMode::kNoLanguage) return null_condition_;
  const int s_idx = surgery_index(t.surgery);
  const int t_idx = cfg_.condition == ConditionMode::kNoTool ? static_cast<int>(cfg_.tools.size())
                                                              : tool_index(t.tool);
  const int a_idx = cfg_.condition == ConditionMode::kNoAction ? static_cast<int>(cfg_.actions.size())
                                                                : action_index(t.action);
  auto one = [](int i) { return std::make_shared<const std::vector<int>>(std::vector<int>{i}); };
  nn::Var joined = nn::concat_cols({nn::gather_rows(surgery_table_, one(s_idx)),
                                    nn::gather_rows(tool_table_, one(t_idx)),
                                    nn::gather_rows(action_table_, one(a_idx))});
  nn::Var hidden = nn::silu(nn::linear(joined, fc1_w_, fc1_b_));
  return nn::linear(hidden, fc2_w_, fc2_b_);
}

}  // namespace afht
