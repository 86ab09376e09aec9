#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "afht/clip_store.hpp"
#include "afht/config.hpp"
#include "afht/data_model.hpp"
#include "afht/heatmap_targets.hpp"
#include "afht/metrics_eval.hpp"
#include "afht/model.hpp"
#include "afht/rng.hpp"

namespace afht {

// lr_min + (lr0 - lr_min) (1 + cos(pi step / total)) / 2; steps past the end
// clamp to lr_min.
double cosine_lr(int step, int total_steps, double lr0, double lr_min);

// Uniform frame index in the record's pre-action range.
int sample_target_frame(const AnnotationRecord& record, Rng& rng);

struct TrainSample {
  ClipWindow clip;
  TargetHeatmap target;
};

void hflip(TrainSample& s);
// Multiplicative brightness and contrast about 0.5, applied to frames only.
void jitter(TrainSample& s, double brightness, double contrast);
// Crops [y0, y0 + ch) x [x0, x0 + cw) from every frame, resizes back to the
// frame size, and rebuilds the target with the same map applied to its
// centroid and sigma.
void crop_resize(TrainSample& s, int y0, int x0, int ch, int cw);
// Maps a point through the crop-resize above.
Point2 crop_resize_point(Point2 p, int y0, int x0, int ch, int cw, int height, int width);

// Applies the flagged augmentations (hflip, brightness, crop). A crop that
// would drop the target peak is redrawn up to 10 times, then skipped.
void augment(TrainSample& s, Rng& rng, const std::set<std::string>& flags);

class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  // One update of every parameter that holds a gradient.
  void step(nn::ParamSet& params, double lr);

  std::int64_t steps() const { return t_; }
  std::vector<std::vector<double>>& m() { return m_; }
  std::vector<std::vector<double>>& v() { return v_; }
  const std::vector<std::vector<double>>& m() const { return m_; }
  const std::vector<std::vector<double>>& v() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_, wd_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct NamedTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
};

// Contents of an AFHT checkpoint file.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<NamedTensor> params;
  std::vector<std::vector<double>> adam_m, adam_v;  // empty when not saved
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  double best_score = -1.0;
};

void save_checkpoint(const std::string& path, const AffordanceModel& model, const TrainConfig& train,
                     const AdamW* optimizer, std::int64_t step, std::uint64_t init_seed, double best_score);
Checkpoint load_checkpoint(const std::string& path);
// Model with the checkpoint's configuration and parameter values.
std::unique_ptr<AffordanceModel> model_from_checkpoint(const Checkpoint& ckpt);

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double bce = 0.0;
  double soft_iou_loss = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct EpochValidation {
  int epoch = 0;
  int step = 0;
  MetricsAggregate metrics;
};

struct TrainOptions {
  std::string out_dir;      // best.ckpt, last.ckpt and train_log.txt go here when set
  std::string resume_from;  // checkpoint to continue from
  int stop_at_step = -1;    // stop (and save last.ckpt) once this many steps are done
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochValidation> validation;
  int total_steps = 0;
  std::size_t param_count = 0;
  std::size_t trainable_count = 0;
  std::string best_path;
  std::string last_path;
  std::unique_ptr<AffordanceModel> model;
};

std::string format_step_record(const StepRecord& r);

// Ablation presets must already be applied to the configs (see apply_ablation).
TrainResult train(const Manifest& manifest, ClipCache& clips, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, const TrainOptions& opts = {});

}  // namespace afht
