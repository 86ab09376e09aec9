#pragma once

#include <memory>
#include <string>
#include <vector>

#include "afht/clip_store.hpp"
#include "afht/config.hpp"
#include "afht/nn/params.hpp"

namespace afht {

struct Grid3 {
  int t = 1;
  int h = 1;
  int w = 1;
  int count() const { return t * h * w; }
  friend bool operator==(const Grid3&, const Grid3&) = default;
};

// Token order everywhere is (t, h, w) row-major.
inline int token_index(const Grid3& g, int t, int h, int w) { return (t * g.h + h) * g.w + w; }

// Partition of a token grid into non-overlapping 3D windows, optionally after
// a cyclic shift of half a window along every axis that is longer than the
// window. Axes shorter than the window use the whole axis as the window.
struct WindowLayout {
  Grid3 grid;
  Grid3 window;  // effective window
  Grid3 shift;
  int num_windows = 0;
  int window_size = 0;
  nn::IndexList partition;  // window-major position -> token index
  nn::IndexList inverse;    // token index -> window-major position
  nn::AttentionMask mask;   // null when no axis is shifted
};

struct ShiftAxes {
  bool t = true;
  bool h = true;
  bool w = true;
};

WindowLayout make_window_layout(Grid3 grid, Grid3 window, bool shifted, ShiftAxes axes = {});

// Multi-head self-attention inside windows with a learned additive bias over
// in-window position pairs.
class WindowAttention {
 public:
  WindowAttention(int dim, int heads, Grid3 configured_window, nn::ParamSet& params, Rng& rng,
                  const std::string& prefix);

  // x: [num_windows * window_size, dim] in window-major order. Returns the
  // attention branch only.
  nn::Var attend(const nn::Var& x, const WindowLayout& layout,
                 std::vector<double>* weights_out = nullptr) const;
  // Residual form x + attend(x).
  nn::Var forward(const nn::Var& x, const WindowLayout& layout,
                  std::vector<double>* weights_out = nullptr) const;

  const nn::Var& qkv_weight() const { return qkv_w_; }
  const nn::Var& qkv_bias() const { return qkv_b_; }

 private:
  nn::Var bias_for(const WindowLayout& layout) const;

  int dim_;
  int heads_;
  Grid3 window_;
  nn::Var qkv_w_, qkv_b_, proj_w_, proj_b_, rel_bias_;
};

struct FeatureMap {
  nn::Var tokens;  // [height * width, channels], (h, w) row-major
  int channels = 0;
  int height = 0;
  int width = 0;
};

class VideoEncoder {
 public:
  virtual ~VideoEncoder() = default;
  virtual FeatureMap encode(const ClipWindow& clip) const = 0;
};

// 3D patch embedding of a clip, with the time axis left-padded by repeating
// the first frame up to a multiple of patch_t. Returns [tokens, patch_dim]
// rows as a constant and the token grid.
nn::Var patchify(const ClipWindow& clip, int pt, int ph, int pw, Grid3& grid_out);

// Index list merging 2x2 spatial neighbours: output token i takes rows
// 4i..4i+3 in order (0,0), (1,0), (0,1), (1,1) as (dh, dw).
nn::IndexList merge_index(const Grid3& grid);

// Mean over the time axis: [t*h*w, C] -> [h*w, C].
nn::Var temporal_mean(const nn::Var& tokens, const Grid3& grid);

class SwinVideoEncoder final : public VideoEncoder {
 public:
  SwinVideoEncoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng,
                   const std::string& prefix = "enc.");
  FeatureMap encode(const ClipWindow& clip) const override;

  // Disables cyclic shifting along selected axes (used to compare layouts).
  void set_shift_axes(ShiftAxes axes) { axes_ = axes; }

 private:
  struct Block {
    nn::Var ln1_g, ln1_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    std::unique_ptr<WindowAttention> attn;
    bool shifted = false;
  };
  struct Stage {
    nn::Var merge_ln_g, merge_ln_b, merge_w;  // absent for stage 0
    std::vector<Block> blocks;
  };

  nn::Var run_block(const Block& b, const nn::Var& x, const Grid3& grid, int layer) const;

  ModelConfig cfg_;
  ShiftAxes axes_;
  nn::Var embed_w_, embed_b_;
  std::vector<Stage> stages_;
  nn::Var final_ln_g_, final_ln_b_;
};

// Residual 3D-convolutional backbone with the same output contract as the
// windowed encoder.
class ConvVideoEncoder final : public VideoEncoder {
 public:
  ConvVideoEncoder(const ModelConfig& cfg, nn::ParamSet& params, Rng& rng,
                   const std::string& prefix = "enc.");
  FeatureMap encode(const ClipWindow& clip) const override;

 private:
  struct ResBlock {
    nn::Var conv1_w, conv1_b, conv2_w, conv2_b;
  };
  struct Stage {
    nn::Var merge_w, merge_b;
    std::vector<ResBlock> blocks;
  };

  ModelConfig cfg_;
  nn::Var embed_w_, embed_b_;
  std::vector<Stage> stages_;
  nn::Var final_ln_g_, final_ln_b_;
};

// im2col index list for a 3x3x3 zero-padded convolution: [grid.count()*27].
nn::IndexList conv3_index(const Grid3& grid);

std::unique_ptr<VideoEncoder> make_video_encoder(const ModelConfig& cfg, nn::ParamSet& params,
                                                 Rng& rng);

// Affine layer norm helper shared by encoder and decoder.
nn::Var layer_norm_affine(const nn::Var& x, const nn::Var& gain, const nn::Var& bias, double eps);

}  // namespace afht
