#include "afht/video_encoder.hpp"

#include <algorithm>
#include <string>

#include "afht/error.hpp"

namespace afht {
namespace {

using nn::Var;

std::shared_ptr<std::vector<int>> make_index(std::size_t n) {
  return std::make_shared<std::vector<int>>(n, 0);
}

int shift_region(int pos, int extent, int window, int shift) {
  if (shift == 0) return 0;
  if (pos < extent - window) return 0;
  if (pos < extent - shift) return 1;
  return 2;
}

void check_finite(const Var& x, const char* where, int layer) {
  if (!nn::all_finite(x))
    throw NumericError(std::string(where) + ": non-finite activation at layer " + std::to_string(layer));
}

Var mlp(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
  return nn::linear(nn::gelu(nn::linear(x, w1, b1)), w2, b2);
}

}  // namespace

Var layer_norm_affine(const Var& x, const Var& gain, const Var& bias, double eps) {
  return nn::add_row(nn::mul_row(nn::layer_norm(x, eps), gain), bias);
}

WindowLayout make_window_layout(Grid3 grid, Grid3 window, bool shifted, ShiftAxes axes) {
  WindowLayout L;
  L.grid = grid;
  L.window = {std::min(window.t, grid.t), std::min(window.h, grid.h), std::min(window.w, grid.w)};
  if (grid.t % L.window.t || grid.h % L.window.h || grid.w % L.window.w)
    throw ConfigError("token grid " + std::to_string(grid.t) + "x" + std::to_string(grid.h) + "x" +
                      std::to_string(grid.w) + " is not divisible by the attention window");
  auto axis_shift = [&](bool on, int g, int w) { return (shifted && on && g > w) ? w / 2 : 0; };
  L.shift = {axis_shift(axes.t, grid.t, window.t), axis_shift(axes.h, grid.h, window.h),
             axis_shift(axes.w, grid.w, window.w)};
  const Grid3 nw{grid.t / L.window.t, grid.h / L.window.h, grid.w / L.window.w};
  L.num_windows = nw.count();
  L.window_size = L.window.count();

  auto part = make_index(grid.count());
  auto inv = make_index(grid.count());
  std::vector<int> region(grid.count());
  int pos = 0;
  for (int wt = 0; wt < nw.t; ++wt)
    for (int wh = 0; wh < nw.h; ++wh)
      for (int ww = 0; ww < nw.w; ++ww)
        for (int a = 0; a < L.window.t; ++a)
          for (int b = 0; b < L.window.h; ++b)
            for (int c = 0; c < L.window.w; ++c, ++pos) {
              const int rt = wt * L.window.t + a;
              const int rh = wh * L.window.h + b;
              const int rw = ww * L.window.w + c;
              const int src = token_index(grid, (rt + L.shift.t) % grid.t, (rh + L.shift.h) % grid.h,
                                          (rw + L.shift.w) % grid.w);
              (*part)[pos] = src;
              (*inv)[src] = pos;
              region[pos] = shift_region(rt, grid.t, L.window.t, L.shift.t) * 9 +
                            shift_region(rh, grid.h, L.window.h, L.shift.h) * 3 +
                            shift_region(rw, grid.w, L.window.w, L.shift.w);
            }
  L.partition = part;
  L.inverse = inv;
  if (L.shift.t || L.shift.h || L.shift.w) {
    const int ws = L.window_size;
    auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(L.num_windows) * ws * ws);
    for (int g = 0; g < L.num_windows; ++g)
      for (int i = 0; i < ws; ++i)
        for (int j = 0; j < ws; ++j)
          (*mask)[(static_cast<std::size_t>(g) * ws + i) * ws + j] =
              region[g * ws + i] == region[g * ws + j] ? 1 : 0;
    L.mask = mask;
  }
  return L;
}

WindowAttention::WindowAttention(int dim, int heads, Grid3 window, nn::ParamSet& params, Rng& rng,
                                 const std::string& prefix)
    : dim_(dim), heads_(heads), window_(window) {
  if (dim % heads != 0)
    throw ConfigError("window attention width " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  qkv_w_ = params.xavier(prefix + "qkv.w", dim, 3 * dim, rng);
  qkv_b_ = params.zeros(prefix + "qkv.b", 1, 3 * dim);
  proj_w_ = params.xavier(prefix + "proj.w", dim, dim, rng);
  proj_b_ = params.zeros(prefix + "proj.b", 1, dim);
  const int ws = window.count();
  rel_bias_ = params.normal(prefix + "bias", heads, ws * ws, 0.02, rng);
}

Var WindowAttention::bias_for(const WindowLayout& layout) const {
  if (layout.window == window_) return rel_bias_;
  // Sub-window: pick the bias entries of the matching in-window offsets.
  const Grid3& e = layout.window;
  const int full = window_.count();
  const int ws = e.count();
  std::vector<int> offset(ws);
  int k = 0;
  for (int a = 0; a < e.t; ++a)
    for (int b = 0; b < e.h; ++b)
      for (int c = 0; c < e.w; ++c) offset[k++] = token_index(window_, a, b, c);
  auto idx = make_index(static_cast<std::size_t>(heads_) * ws * ws);
  for (int h = 0; h < heads_; ++h)
    for (int i = 0; i < ws; ++i)
      for (int j = 0; j < ws; ++j)
        (*idx)[(static_cast<std::size_t>(h) * ws + i) * ws + j] = (h * full + offset[i]) * full + offset[j];
  Var flat = nn::reshape(rel_bias_, heads_ * full * full, 1);
  return nn::reshape(nn::gather_rows(flat, idx), heads_, ws * ws);
}

Var WindowAttention::attend(const Var& x, const WindowLayout& layout,
                            std::vector<double>* weights_out) const {
  Var qkv = nn::linear(x, qkv_w_, qkv_b_);
  Var q = nn::slice_cols(qkv, 0, dim_);
  Var k = nn::slice_cols(qkv, dim_, dim_);
  Var v = nn::slice_cols(qkv, 2 * dim_, dim_);
  nn::AttentionShape shape{layout.num_windows, heads_, layout.window_size, layout.window_size};
  Var a = nn::attention(q, k, v, shape, bias_for(layout), layout.mask, weights_out);
  return nn::linear(a, proj_w_, proj_b_);
}

Var WindowAttention::forward(const Var& x, const WindowLayout& layout,
                             std::vector<double>* weights_out) const {
  return nn::add(x, attend(x, layout, weights_out));
}

Var patchify(const ClipWindow& clip, int pt, int ph, int pw, Grid3& grid) {
  if (clip.height % ph || clip.width % pw)
    throw ConfigError("frame " + std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                      " not divisible by the patch size");
  const int padded_t = (clip.frames + pt - 1) / pt * pt;
  const int pad = padded_t - clip.frames;
  grid = {padded_t / pt, clip.height / ph, clip.width / pw};
  const int pdim = pt * ph * pw * 3;
  std::vector<double> rows(static_cast<std::size_t>(grid.count()) * pdim);
  std::size_t o = 0;
  for (int t = 0; t < grid.t; ++t)
    for (int h = 0; h < grid.h; ++h)
      for (int w = 0; w < grid.w; ++w)
        for (int dt = 0; dt < pt; ++dt) {
          const int src_t = std::max(0, t * pt + dt - pad);
          for (int dy = 0; dy < ph; ++dy)
            for (int dx = 0; dx < pw; ++dx)
              for (int c = 0; c < 3; ++c) rows[o++] = 2.0 * clip.at(src_t, h * ph + dy, w * pw + dx, c) - 1.0;
        }
  return nn::constant(grid.count(), pdim, std::move(rows));
}

nn::IndexList merge_index(const Grid3& g) {
  if (g.h % 2 || g.w % 2) throw ConfigError("patch merging needs an even spatial grid");
  const Grid3 out{g.t, g.h / 2, g.w / 2};
  auto idx = make_index(static_cast<std::size_t>(out.count()) * 4);
  std::size_t o = 0;
  for (int t = 0; t < out.t; ++t)
    for (int h = 0; h < out.h; ++h)
      for (int w = 0; w < out.w; ++w) {
        (*idx)[o++] = token_index(g, t, 2 * h, 2 * w);
        (*idx)[o++] = token_index(g, t, 2 * h + 1, 2 * w);
        (*idx)[o++] = token_index(g, t, 2 * h, 2 * w + 1);
        (*idx)[o++] = token_index(g, t, 2 * h + 1, 2 * w + 1);
      }
  return idx;
}

Var temporal_mean(const Var& tokens, const Grid3& g) {
  if (g.t == 1) return tokens;
  auto idx = make_index(static_cast<std::size_t>(g.count()));
  std::size_t o = 0;
  for (int h = 0; h < g.h; ++h)
    for (int w = 0; w < g.w; ++w)
      for (int t = 0; t < g.t; ++t) (*idx)[o++] = token_index(g, t, h, w);
  return nn::mean_consecutive_rows(nn::gather_rows(tokens, idx), g.t);
}

nn::IndexList conv3_index(const Grid3& g) {
  auto idx = make_index(static_cast<std::size_t>(g.count()) * 27);
  std::size_t o = 0;
  for (int t = 0; t < g.t; ++t)
    for (int h = 0; h < g.h; ++h)
      for (int w = 0; w < g.w; ++w)
        for (int dt = -1; dt <= 1; ++dt)
          for (int dh = -1; dh <= 1; ++dh)
            for (int dw = -1; dw <= 1; ++dw) {
              const int tt = t + dt, hh = h + dh, ww = w + dw;
              const bool in = tt >= 0 && tt < g.t && hh >= 0 && hh < g.h && ww >= 0 && ww < g.w;
              (*idx)[o++] = in ? token_index(g, tt, hh, ww) : -1;
            }
  return idx;
}

SwinVideoEncoder::SwinVideoEncoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng,
                                   const std::string& prefix)
    : cfg_(cfg) {
  const int pdim = cfg.patch_t * cfg.patch_h * cfg.patch_w * 3;
  embed_w_ = params.xavier(prefix + "embed.w", pdim, cfg.enc_widths[0], rng);
  embed_b_ = params.zeros(prefix + "embed.b", 1, cfg.enc_widths[0]);
  const Grid3 window{cfg.win_t, cfg.win_h, cfg.win_w};
  for (int s = 0; s < cfg.stages(); ++s) {
    const int d = cfg.enc_widths[s];
    const std::string sp = prefix + "s" + std::to_string(s) + ".";
    Stage st;
    if (s > 0) {
      const int prev = cfg.enc_widths[s - 1];
      st.merge_ln_g = params.ones(sp + "merge.ln.g", 1, 4 * prev);
      st.merge_ln_b = params.zeros(sp + "merge.ln.b", 1, 4 * prev);
      st.merge_w = params.xavier(sp + "merge.w", 4 * prev, d, rng);
    }
    for (int b = 0; b < cfg.enc_depths[s]; ++b) {
      const std::string bp = sp + "b" + std::to_string(b) + ".";
      Block blk;
      blk.ln1_g = params.ones(bp + "ln1.g", 1, d);
      blk.ln1_b = params.zeros(bp + "ln1.b", 1, d);
      blk.attn = std::make_unique<WindowAttention>(d, cfg.enc_heads, window, params, rng, bp + "attn.");
      blk.ln2_g = params.ones(bp + "ln2.g", 1, d);
      blk.ln2_b = params.zeros(bp + "ln2.b", 1, d);
      blk.fc1_w = params.xavier(bp + "fc1.w", d, cfg.mlp_ratio * d, rng);
      blk.fc1_b = params.zeros(bp + "fc1.b", 1, cfg.mlp_ratio * d);
      blk.fc2_w = params.xavier(bp + "fc2.w", cfg.mlp_ratio * d, d, rng);
      blk.fc2_b = params.zeros(bp + "fc2.b", 1, d);
      blk.shifted = (b % 2) == 1;
      st.blocks.push_back(std::move(blk));
    }
    stages_.push_back(std::move(st));
  }
  final_ln_g_ = params.ones(prefix + "final_ln.g", 1, cfg.feature_dim());
  final_ln_b_ = params.zeros(prefix + "final_ln.b", 1, cfg.feature_dim());
}

Var SwinVideoEncoder::run_block(const Block& b, const Var& x, const Grid3& grid, int layer) const {
  const WindowLayout layout =
      make_window_layout(grid, {cfg_.win_t, cfg_.win_h, cfg_.win_w}, b.shifted, axes_);
  Var h = layer_norm_affine(x, b.ln1_g, b.ln1_b, cfg_.ln_eps);
  Var a = b.attn->attend(nn::gather_rows(h, layout.partition), layout);
  Var y = nn::add(x, nn::gather_rows(a, layout.inverse));
  Var m = mlp(layer_norm_affine(y, b.ln2_g, b.ln2_b, cfg_.ln_eps), b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b);
  Var out = nn::add(y, m);
  check_finite(out, "video encoder", layer);
  return out;
}

FeatureMap SwinVideoEncoder::encode(const ClipWindow& clip) const {
  if (clip.height != cfg_.frame_height || clip.width != cfg_.frame_width)
    throw ConfigError("clip geometry " + std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                      " does not match model geometry " + std::to_string(cfg_.frame_height) + "x" +
                      std::to_string(cfg_.frame_width));
  Grid3 grid;
  Var x = nn::linear(patchify(clip, cfg_.patch_t, cfg_.patch_h, cfg_.patch_w, grid), embed_w_, embed_b_);
  int layer = 0;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& st = stages_[s];
    if (s > 0) {
      const int prev = cfg_.enc_widths[s - 1];
      Var merged = nn::gather_rows(x, merge_index(grid));
      grid = {grid.t, grid.h / 2, grid.w / 2};
      merged = nn::reshape(merged, grid.count(), 4 * prev);
      x = nn::linear(layer_norm_affine(merged, st.merge_ln_g, st.merge_ln_b, cfg_.ln_eps), st.merge_w, nullptr);
    }
    for (const Block& b : st.blocks) x = run_block(b, x, grid, layer++);
  }
  x = layer_norm_affine(x, final_ln_g_, final_ln_b_, cfg_.ln_eps);
  return {temporal_mean(x, grid), cfg_.feature_dim(), grid.h, grid.w};
}

ConvVideoEncoder::ConvVideoEncoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng,
                                   const std::string& prefix)
    : cfg_(cfg) {
  const int pdim = cfg.patch_t * cfg.patch_h * cfg.patch_w * 3;
  embed_w_ = params.xavier(prefix + "embed.w", pdim, cfg.enc_widths[0], rng);
  embed_b_ = params.zeros(prefix + "embed.b", 1, cfg.enc_widths[0]);
  for (int s = 0; s < cfg.stages(); ++s) {
    const int d = cfg.enc_widths[s];
    const std::string sp = prefix + "s" + std::to_string(s) + ".";
    Stage st;
    if (s > 0) {
      st.merge_w = params.xavier(sp + "merge.w", 4 * cfg.enc_widths[s - 1], d, rng);
      st.merge_b = params.zeros(sp + "merge.b", 1, d);
    }
    for (int b = 0; b < cfg.enc_depths[s]; ++b) {
      const std::string bp = sp + "res" + std::to_string(b) + ".";
      ResBlock rb;
      rb.conv1_w = params.xavier(bp + "conv1.w", 27 * d, d, rng);
      rb.conv1_b = params.zeros(bp + "conv1.b", 1, d);
      rb.conv2_w = params.xavier(bp + "conv2.w", 27 * d, d, rng);
      rb.conv2_b = params.zeros(bp + "conv2.b", 1, d);
      st.blocks.push_back(rb);
    }
    stages_.push_back(std::move(st));
  }
  final_ln_g_ = params.ones(prefix + "final_ln.g", 1, cfg.feature_dim());
  final_ln_b_ = params.zeros(prefix + "final_ln.b", 1, cfg.feature_dim());
}

FeatureMap ConvVideoEncoder::encode(const ClipWindow& clip) const {
  if (clip.height != cfg_.frame_height || clip.width != cfg_.frame_width)
    throw ConfigError("clip geometry does not match model geometry");
  Grid3 grid;
  Var x = nn::linear(patchify(clip, cfg_.patch_t, cfg_.patch_h, cfg_.patch_w, grid), embed_w_, embed_b_);
  int layer = 0;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& st = stages_[s];
    const int d = cfg_.enc_widths[s];
    if (s > 0) {
      Var merged = nn::gather_rows(x, merge_index(grid));
      grid = {grid.t, grid.h / 2, grid.w / 2};
      x = nn::linear(nn::reshape(merged, grid.count(), 4 * cfg_.enc_widths[s - 1]), st.merge_w, st.merge_b);
    }
    const nn::IndexList cols = conv3_index(grid);
    for (const ResBlock& rb : st.blocks) {
      Var y = nn::relu(nn::linear(nn::reshape(nn::gather_rows(x, cols), grid.count(), 27 * d), rb.conv1_w, rb.conv1_b));
      y = nn::linear(nn::reshape(nn::gather_rows(y, cols), grid.count(), 27 * d), rb.conv2_w, rb.conv2_b);
      x = nn::relu(nn::add(x, y));
      check_finite(x, "conv encoder", layer++);
    }
  }
  x = layer_norm_affine(x, final_ln_g_, final_ln_b_, cfg_.ln_eps);
  return {temporal_mean(x, grid), cfg_.feature_dim(), grid.h, grid.w};
}

std::unique_ptr<VideoEncoder> make_video_encoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng) {
  if (cfg.encoder == EncoderKind::kConv) return std::make_unique<ConvVideoEncoder>(cfg, params, rng);
  return std::make_unique<SwinVideoEncoder>(cfg, params, rng);
}

}  // namespace afht
