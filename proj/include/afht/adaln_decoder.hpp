#pragma once

#include <memory>
#include <string>
#include <vector>

#include "afht/config.hpp"
#include "afht/nn/params.hpp"
#include "afht/video_encoder.hpp"

namespace afht {

// LayerNorm(x) * (1 + gamma) + beta per token; the norm has no affine of its
// own. gamma and beta are [1, D].
nn::Var modulate(const nn::Var& x, const nn::Var& gamma, const nn::Var& beta, double eps);

class Decoder {
 public:
  virtual ~Decoder() = default;
  // Per-pixel logits [out_h * out_w, 1] (row-major) for a feature map and a
  // [1, cond_dim] condition vector.
  virtual nn::Var forward(const FeatureMap& features, const nn::Var& cond, int out_h, int out_w) const = 0;
  // Tokens after the decoder blocks, before the final normalization and head.
  virtual nn::Var blocks_forward(const FeatureMap& features, const nn::Var& cond) const = 0;
  // Tokens entering the first block (projected features + positional embedding).
  virtual nn::Var embed_tokens(const FeatureMap& features) const = 0;
};

// Transformer decoder whose blocks are conditioned through adaptive layer
// norm with zero-initialized regression (adaLN-Zero):
//   x += g1 * Attn(modulate(x, gamma1, beta1))
//   x += g2 * FFN(modulate(x, gamma2, beta2))
class AdaLNDecoder final : public Decoder {
 public:
  AdaLNDecoder(const ModelConfig& cfg, int feature_dim, int grid_h, int grid_w, nn::ParamSet& params,
               Rng& rng, const std::string& prefix = "dec.");

  nn::Var forward(const FeatureMap& features, const nn::Var& cond, int out_h, int out_w) const override;
  nn::Var blocks_forward(const FeatureMap& features, const nn::Var& cond) const override;
  nn::Var embed_tokens(const FeatureMap& features) const override;

  // One block applied to tokens x under condition c.
  nn::Var block(int index, const nn::Var& x, const nn::Var& cond) const;

 private:
  struct Block {
    nn::Var ada_w, ada_b, qkv_w, qkv_b, proj_w, proj_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  ModelConfig cfg_;
  int grid_h_, grid_w_;
  nn::Var in_w_, in_b_, pos_;
  std::vector<Block> blocks_;
  nn::Var final_ada_w_, final_ada_b_, head_w_, head_b_;
};

// Ablation variant: conditioning enters through cross-attention from feature
// tokens (queries) to condition tokens (keys/values).
class CrossAttentionDecoder final : public Decoder {
 public:
  CrossAttentionDecoder(const ModelConfig& cfg, int feature_dim, int grid_h, int grid_w,
                        nn::ParamSet& params, Rng& rng, const std::string& prefix = "dec.");

  nn::Var forward(const FeatureMap& features, const nn::Var& cond, int out_h, int out_w) const override;
  nn::Var blocks_forward(const FeatureMap& features, const nn::Var& cond) const override;
  nn::Var embed_tokens(const FeatureMap& features) const override;

 private:
  struct Block {
    nn::Var ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
    nn::Var ln2_g, ln2_b, xq_w, xq_b, xk_w, xk_b, xv_w, xv_b, xproj_w, xproj_b;
    nn::Var ln3_g, ln3_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  ModelConfig cfg_;
  int grid_h_, grid_w_;
  nn::Var in_w_, in_b_, pos_;
  nn::Var ctok_w_, ctok_b_;
  std::vector<Block> blocks_;
  nn::Var final_ln_g_, final_ln_b_, head_w_, head_b_;
};

std::unique_ptr<Decoder> make_decoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng);

}  // namespace afht
