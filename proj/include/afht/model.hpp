#pragma once

#include <cstdint>
#include <memory>

#include "afht/adaln_decoder.hpp"
#include "afht/clip_store.hpp"
#include "afht/conditioning.hpp"
#include "afht/config.hpp"
#include "afht/types.hpp"
#include "afht/video_encoder.hpp"

namespace afht {

// Condition encoder + video encoder + decoder, owning one parameter set.
// Parameters register as "cond.*", "enc.*", "dec.*" in that order.
class AffordanceModel {
 public:
  AffordanceModel(const ModelConfig& cfg, std::uint64_t init_seed);

  AffordanceModel(const AffordanceModel&) = delete;
  AffordanceModel& operator=(const AffordanceModel&) = delete;

  // Per-pixel logits [H * W, 1].
  nn::Var forward_logits(const ClipWindow& clip, const PromptTriplet& triplet) const;
  // sigmoid(logits) as an H x W grid.
  Grid predict(const ClipWindow& clip, const PromptTriplet& triplet) const;

  // Throws ConfigError when the clip cannot be fed to this model.
  void check_geometry(int height, int width) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const ConditionEncoder& condition_encoder() const { return *cond_; }
  const VideoEncoder& video_encoder() const { return *encoder_; }
  const Decoder& decoder() const { return *decoder_; }

 private:
  ModelConfig cfg_;
  nn::ParamSet params_;
  std::unique_ptr<ConditionEncoder> cond_;
  std::unique_ptr<VideoEncoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
};

Grid logits_to_grid(const nn::Var& logits, int height, int width);
Grid sigmoid_grid(const Grid& logits);

}  // namespace afht
