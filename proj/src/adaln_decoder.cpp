#include "afht/adaln_decoder.hpp"

#include <cmath>

#include <string>

#include "afht/error.hpp"

namespace afht {

namespace {

// Learned positional table initialized with fixed 2D sine-cosine features
// (half the channels encode the row, half the column).
nn::Var positional_embedding(nn::ParamSet& params, const std::string& name, int h, int w, int d, Rng& rng) {
  if (d % 4 != 0) return params.normal(name, h * w, d, 0.02, rng);
  const int q = d / 4;
  std::vector<double> v(static_cast<std::size_t>(h) * w * d);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* row = &v[(static_cast<std::size_t>(y) * w + x) * d];
      for (int k = 0; k < q; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / q);
        row[k] = std::sin(y * omega);
        row[q + k] = std::cos(y * omega);
        row[2 * q + k] = std::sin(x * omega);
        row[3 * q + k] = std::cos(x * omega);
      }
    }
  return params.add(name, h * w, d, std::move(v));
}

}  // namespace
namespace {

using nn::Var;

void check_finite(const Var& x, int block) {
  if (!nn::all_finite(x))
    throw NumericError("decoder: non-finite activation at block " + std::to_string(block));
}

void check_features(const FeatureMap& f, int grid_h, int grid_w) {
  if (f.height != grid_h || f.width != grid_w)
    throw ConfigError("decoder expects a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " feature grid, got " + std::to_string(f.height) + "x" + std::to_string(f.width));
}

Var self_attention(const Var& x, const Var& qkv_w, const Var& qkv_b, const Var& proj_w,
                   const Var& proj_b, int heads) {
  const int d = x->cols;
  Var qkv = nn::linear(x, qkv_w, qkv_b);
  nn::AttentionShape shape{1, heads, x->rows, x->rows};
  Var a = nn::attention(nn::slice_cols(qkv, 0, d), nn::slice_cols(qkv, d, d), nn::slice_cols(qkv, 2 * d, d), shape);
  return nn::linear(a, proj_w, proj_b);
}

Var ffn(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
  return nn::linear(nn::gelu(nn::linear(x, w1, b1)), w2, b2);
}

}  // namespace

Var modulate(const Var& x, const Var& gamma, const Var& beta, double eps) {
  return nn::add_row(nn::mul_row(nn::layer_norm(x, eps), nn::add_scalar(gamma, 1.0)), beta);
}

AdaLNDecoder::AdaLNDecoder(const ModelConfig& cfg, int feature_dim, int grid_h, int grid_w,
                           nn::ParamSet& params, Rng& rng, const std::string& prefix)
    : cfg_(cfg), grid_h_(grid_h), grid_w_(grid_w) {
  const int d = cfg.dec_width;
  if (feature_dim != d) {
    in_w_ = params.xavier(prefix + "in.w", feature_dim, d, rng);
    in_b_ = params.zeros(prefix + "in.b", 1, d);
  }
  pos_ = positional_embedding(params, prefix + "pos", grid_h, grid_w, d, rng);
  const int chunks = cfg.adaln_gates ? 6 : 4;
  for (int b = 0; b < cfg.dec_depth; ++b) {
    const std::string bp = prefix + "b" + std::to_string(b) + ".";
    Block blk;
    blk.ada_w = params.zeros(bp + "ada.w", cfg.cond_dim, chunks * d);
    blk.ada_b = params.zeros(bp + "ada.b", 1, chunks * d);
    blk.qkv_w = params.xavier(bp + "qkv.w", d, 3 * d, rng);
    blk.qkv_b = params.zeros(bp + "qkv.b", 1, 3 * d);
    blk.proj_w = params.xavier(bp + "proj.w", d, d, rng);
    blk.proj_b = params.zeros(bp + "proj.b", 1, d);
    blk.fc1_w = params.xavier(bp + "fc1.w", d, 4 * d, rng);
    blk.fc1_b = params.zeros(bp + "fc1.b", 1, 4 * d);
    blk.fc2_w = params.xavier(bp + "fc2.w", 4 * d, d, rng);
    blk.fc2_b = params.zeros(bp + "fc2.b", 1, d);
    blocks_.push_back(blk);
  }
  if (cfg.final_modulation) {
    final_ada_w_ = params.zeros(prefix + "final.ada.w", cfg.cond_dim, 2 * d);
    final_ada_b_ = params.zeros(prefix + "final.ada.b", 1, 2 * d);
  }
  head_w_ = params.zeros(prefix + "head.w", d, 1);
  head_b_ = params.zeros(prefix + "head.b", 1, 1);
}

Var AdaLNDecoder::embed_tokens(const FeatureMap& f) const {
  check_features(f, grid_h_, grid_w_);
  Var x = in_w_ ? nn::linear(f.tokens, in_w_, in_b_) : f.tokens;
  return nn::add(x, pos_);
}

Var AdaLNDecoder::block(int index, const Var& x, const Var& cond) const {
  const Block& b = blocks_.at(index);
  const int d = cfg_.dec_width;
  Var ada = nn::linear(nn::silu(cond), b.ada_w, b.ada_b);
  auto chunk = [&](int i) { return nn::slice_cols(ada, i * d, d); };
  Var attn = self_attention(modulate(x, chunk(0), chunk(1), cfg_.ln_eps), b.qkv_w, b.qkv_b, b.proj_w,
                            b.proj_b, cfg_.dec_heads);
  Var y = nn::add(x, cfg_.adaln_gates ? nn::mul_row(attn, chunk(2)) : attn);
  const int off = cfg_.adaln_gates ? 3 : 2;
  Var m = ffn(modulate(y, chunk(off), chunk(off + 1), cfg_.ln_eps), b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b);
  Var out = nn::add(y, cfg_.adaln_gates ? nn::mul_row(m, chunk(off + 2)) : m);
  check_finite(out, index);
  return out;
}

Var AdaLNDecoder::blocks_forward(const FeatureMap& f, const Var& cond) const {
  if (cond->rows != 1 || cond->cols != cfg_.cond_dim)
    throw ConfigError("condition vector width " + std::to_string(cond->cols) + " != cond_dim " +
                      std::to_string(cfg_.cond_dim));
  Var x = embed_tokens(f);
  for (int i = 0; i < static_cast<int>(blocks_.size()); ++i) x = block(i, x, cond);
  return x;
}

Var AdaLNDecoder::forward(const FeatureMap& f, const Var& cond, int out_h, int out_w) const {
  Var x = blocks_forward(f, cond);
  const int d = cfg_.dec_width;
  if (cfg_.final_modulation) {
    Var ada = nn::linear(nn::silu(cond), final_ada_w_, final_ada_b_);
    x = modulate(x, nn::slice_cols(ada, 0, d), nn::slice_cols(ada, d, d), cfg_.ln_eps);
  } else {
    x = nn::layer_norm(x, cfg_.ln_eps);
  }
  Var logits = nn::linear(x, head_w_, head_b_);
  Var out = nn::bilinear_resize(logits, grid_h_, grid_w_, out_h, out_w);
  check_finite(out, static_cast<int>(blocks_.size()));
  return out;
}

CrossAttentionDecoder::CrossAttentionDecoder(const ModelConfig& cfg, int feature_dim, int grid_h,
                                             int grid_w, nn::ParamSet& params, Rng& rng,
                                             const std::string& prefix)
    : cfg_(cfg), grid_h_(grid_h), grid_w_(grid_w) {
  const int d = cfg.dec_width;
  if (feature_dim != d) {
    in_w_ = params.xavier(prefix + "in.w", feature_dim, d, rng);
    in_b_ = params.zeros(prefix + "in.b", 1, d);
  }
  pos_ = positional_embedding(params, prefix + "pos", grid_h, grid_w, d, rng);
  ctok_w_ = params.xavier(prefix + "cond_tokens.w", cfg.cond_dim, cfg.xattn_tokens * d, rng);
  ctok_b_ = params.zeros(prefix + "cond_tokens.b", 1, cfg.xattn_tokens * d);
  for (int b = 0; b < cfg.dec_depth; ++b) {
    const std::string bp = prefix + "b" + std::to_string(b) + ".";
    Block k;
    k.ln1_g = params.ones(bp + "ln1.g", 1, d);
    k.ln1_b = params.zeros(bp + "ln1.b", 1, d);
    k.qkv_w = params.xavier(bp + "qkv.w", d, 3 * d, rng);
    k.qkv_b = params.zeros(bp + "qkv.b", 1, 3 * d);
    k.proj_w = params.xavier(bp + "proj.w", d, d, rng);
    k.proj_b = params.zeros(bp + "proj.b", 1, d);
    k.ln2_g = params.ones(bp + "ln2.g", 1, d);
    k.ln2_b = params.zeros(bp + "ln2.b", 1, d);
    k.xq_w = params.xavier(bp + "xattn.q.w", d, d, rng);
    k.xq_b = params.zeros(bp + "xattn.q.b", 1, d);
    k.xk_w = params.xavier(bp + "xattn.k.w", d, d, rng);
    k.xk_b = params.zeros(bp + "xattn.k.b", 1, d);
    k.xv_w = params.xavier(bp + "xattn.v.w", d, d, rng);
    k.xv_b = params.zeros(bp + "xattn.v.b", 1, d);
    k.xproj_w = params.xavier(bp + "xattn.proj.w", d, d, rng);
    k.xproj_b = params.zeros(bp + "xattn.proj.b", 1, d);
    k.ln3_g = params.ones(bp + "ln3.g", 1, d);
    k.ln3_b = params.zeros(bp + "ln3.b", 1, d);
    k.fc1_w = params.xavier(bp + "fc1.w", d, 4 * d, rng);
    k.fc1_b = params.zeros(bp + "fc1.b", 1, 4 * d);
    k.fc2_w = params.xavier(bp + "fc2.w", 4 * d, d, rng);
    k.fc2_b = params.zeros(bp + "fc2.b", 1, d);
    blocks_.push_back(k);
  }
  final_ln_g_ = params.ones(prefix + "final.ln.g", 1, d);
  final_ln_b_ = params.zeros(prefix + "final.ln.b", 1, d);
  head_w_ = params.zeros(prefix + "head.w", d, 1);
  head_b_ = params.zeros(prefix + "head.b", 1, 1);
}

Var CrossAttentionDecoder::embed_tokens(const FeatureMap& f) const {
  check_features(f, grid_h_, grid_w_);
  Var x = in_w_ ? nn::linear(f.tokens, in_w_, in_b_) : f.tokens;
  return nn::add(x, pos_);
}

Var CrossAttentionDecoder::blocks_forward(const FeatureMap& f, const Var& cond) const {
  if (cond->rows != 1 || cond->cols != cfg_.cond_dim)
    throw ConfigError("condition vector width " + std::to_string(cond->cols) + " != cond_dim " +
                      std::to_string(cfg_.cond_dim));
  const int d = cfg_.dec_width;
  const double eps = cfg_.ln_eps;
  Var ctx = nn::reshape(nn::linear(cond, ctok_w_, ctok_b_), cfg_.xattn_tokens, d);
  Var x = embed_tokens(f);
  for (int i = 0; i < static_cast<int>(blocks_.size()); ++i) {
    const Block& b = blocks_[i];
    x = nn::add(x, self_attention(layer_norm_affine(x, b.ln1_g, b.ln1_b, eps), b.qkv_w, b.qkv_b,
                                  b.proj_w, b.proj_b, cfg_.dec_heads));
    Var q = nn::linear(layer_norm_affine(x, b.ln2_g, b.ln2_b, eps), b.xq_w, b.xq_b);
    Var k = nn::linear(ctx, b.xk_w, b.xk_b);
    Var v = nn::linear(ctx, b.xv_w, b.xv_b);
    nn::AttentionShape shape{1, cfg_.dec_heads, x->rows, cfg_.xattn_tokens};
    x = nn::add(x, nn::linear(nn::attention(q, k, v, shape), b.xproj_w, b.xproj_b));
    x = nn::add(x, ffn(layer_norm_affine(x, b.ln3_g, b.ln3_b, eps), b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b));
    check_finite(x, i);
  }
  return x;
}

Var CrossAttentionDecoder::forward(const FeatureMap& f, const Var& cond, int out_h, int out_w) const {
  Var x = layer_norm_affine(blocks_forward(f, cond), final_ln_g_, final_ln_b_, cfg_.ln_eps);
  Var out = nn::bilinear_resize(nn::linear(x, head_w_, head_b_), grid_h_, grid_w_, out_h, out_w);
  check_finite(out, static_cast<int>(blocks_.size()));
  return out;
}

std::unique_ptr<Decoder> make_decoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng) {
  const int gh = cfg.frame_height / cfg.spatial_reduction_h();
  const int gw = cfg.frame_width / cfg.spatial_reduction_w();
  if (cfg.decoder == DecoderKind::kCrossAttention)
    return std::make_unique<CrossAttentionDecoder>(cfg, cfg.feature_dim(), gh, gw, params, rng);
  return std::make_unique<AdaLNDecoder>(cfg, cfg.feature_dim(), gh, gw, params, rng);
}

}  // namespace afht
