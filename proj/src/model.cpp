#include "afht/model.hpp"

#include <cmath>

#include "afht/error.hpp"

namespace afht {

AffordanceModel::AffordanceModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng cond_rng(derive_seed(init_seed, hash_string("cond")));
  Rng enc_rng(derive_seed(init_seed, hash_string("enc")));
  Rng dec_rng(derive_seed(init_seed, hash_string("dec")));
  cond_ = std::make_unique<TableConditionEncoder>(cfg_, params_, cond_rng);
  encoder_ = make_video_encoder(cfg_, params_, enc_rng);
  decoder_ = make_decoder(cfg_, params_, dec_rng);
}

void AffordanceModel::check_geometry(int height, int width) const {
  if (height != cfg_.frame_height || width != cfg_.frame_width)
    throw ConfigError("geometry mismatch: data is " + std::to_string(height) + "x" + std::to_string(width) +
                      " but the checkpoint expects " + std::to_string(cfg_.frame_height) + "x" +
                      std::to_string(cfg_.frame_width));
}

nn::Var AffordanceModel::forward_logits(const ClipWindow& clip, const PromptTriplet& triplet) const {
  check_geometry(clip.height, clip.width);
  const nn::Var cond = cond_->encode(triplet);
  const FeatureMap features = encoder_->encode(clip);
  return decoder_->forward(features, cond, cfg_.frame_height, cfg_.frame_width);
}

Grid AffordanceModel::predict(const ClipWindow& clip, const PromptTriplet& triplet) const {
  return sigmoid_grid(logits_to_grid(forward_logits(clip, triplet), cfg_.frame_height, cfg_.frame_width));
}

Grid logits_to_grid(const nn::Var& logits, int height, int width) {
  if (logits->size() != static_cast<std::size_t>(height) * width)
    throw ParameterError("logits_to_grid: size mismatch");
  Grid g(height, width);
  g.values = logits->value;
  return g;
}

Grid sigmoid_grid(const Grid& logits) {
  Grid g = logits;
  for (double& v : g.values) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return g;
}

}  // namespace afht
