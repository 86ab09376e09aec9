#include "afht/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <numbers>
#include <sstream>

#include "afht/binary_io.hpp"
#include "afht/error.hpp"
#include "afht/objectives.hpp"

namespace afht {

double cosine_lr(int step, int total_steps, double lr0, double lr_min) {
  if (total_steps < 1) throw ParameterError("cosine_lr: total_steps must be >= 1");
  if (step < 0) throw ParameterError("cosine_lr: negative step");
  if (step >= total_steps) return lr_min;
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * step / total_steps));
}

int sample_target_frame(const AnnotationRecord& r, Rng& rng) {
  if (r.pre_action_end < r.pre_action_start)
    throw ValidationError("clip '" + r.clip_id + "': empty pre-action range");
  return static_cast<int>(rng.uniform_int(r.pre_action_start, r.pre_action_end));
}

void hflip(TrainSample& s) {
  ClipWindow& c = s.clip;
  for (int t = 0; t < c.frames; ++t)
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width / 2; ++x)
        for (int k = 0; k < 3; ++k) std::swap(c.at(t, y, x, k), c.at(t, y, c.width - 1 - x, k));
  Grid& g = s.target.values;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width / 2; ++x) std::swap(g.at(y, x), g.at(y, g.width - 1 - x));
  s.target.centroid.x = g.width - 1 - s.target.centroid.x;
}

void jitter(TrainSample& s, double brightness, double contrast) {
  for (double& v : s.clip.pixels) v = std::clamp(((v - 0.5) * contrast + 0.5) * brightness, 0.0, 1.0);
}

Point2 crop_resize_point(Point2 p, int y0, int x0, int ch, int cw, int height, int width) {
  return {(p.x - x0 + 0.5) * width / cw - 0.5, (p.y - y0 + 0.5) * height / ch - 0.5};
}

void crop_resize(TrainSample& s, int y0, int x0, int ch, int cw) {
  ClipWindow& c = s.clip;
  const int H = c.height, W = c.width;
  if (ch < 1 || cw < 1 || y0 < 0 || x0 < 0 || y0 + ch > H || x0 + cw > W)
    throw ParameterError("crop_resize: crop outside the frame");
  std::vector<double> out(c.pixels.size());
  for (int y = 0; y < H; ++y) {
    const double sy = std::clamp(y0 + (y + 0.5) * ch / H - 0.5, double(y0), double(y0 + ch - 1));
    const int ya = static_cast<int>(std::floor(sy));
    const int yb = std::min(ya + 1, y0 + ch - 1);
    const double fy = sy - ya;
    for (int x = 0; x < W; ++x) {
      const double sx = std::clamp(x0 + (x + 0.5) * cw / W - 0.5, double(x0), double(x0 + cw - 1));
      const int xa = static_cast<int>(std::floor(sx));
      const int xb = std::min(xa + 1, x0 + cw - 1);
      const double fx = sx - xa;
      for (int t = 0; t < c.frames; ++t)
        for (int k = 0; k < 3; ++k) {
          const double v = (1 - fy) * ((1 - fx) * c.at(t, ya, xa, k) + fx * c.at(t, ya, xb, k)) +
                           fy * ((1 - fx) * c.at(t, yb, xa, k) + fx * c.at(t, yb, xb, k));
          out[((static_cast<std::size_t>(t) * H + y) * W + x) * 3 + k] = v;
        }
    }
  }
  c.pixels = std::move(out);
  const Point2 cen = crop_resize_point(s.target.centroid, y0, x0, ch, cw, H, W);
  const double sigma = s.target.sigma * 0.5 * (static_cast<double>(W) / cw + static_cast<double>(H) / ch);
  s.target = gaussian_target(cen, sigma, s.target.values.height, s.target.values.width);
}

void augment(TrainSample& s, Rng& rng, const std::set<std::string>& flags) {
  for (const auto& f : flags)
    if (f != "hflip" && f != "brightness" && f != "crop") throw ParameterError("unknown augmentation '" + f + "'");
  if (flags.count("hflip") && rng.bernoulli(0.5)) hflip(s);
  if (flags.count("brightness")) {
    const double b = rng.uniform(0.8, 1.2);
    const double c = rng.uniform(0.8, 1.2);
    jitter(s, b, c);
  }
  if (flags.count("crop")) {
    const int H = s.clip.height, W = s.clip.width;
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double scale = rng.uniform(0.8, 1.0);
      const int ch = std::max(1, static_cast<int>(std::lround(scale * H)));
      const int cw = std::max(1, static_cast<int>(std::lround(scale * W)));
      const int y0 = static_cast<int>(rng.uniform_int(0, H - ch));
      const int x0 = static_cast<int>(rng.uniform_int(0, W - cw));
      const Point2 p = crop_resize_point(s.target.centroid, y0, x0, ch, cw, H, W);
      if (p.x < 0.0 || p.y < 0.0 || p.x > W - 1.0 || p.y > H - 1.0) continue;
      crop_resize(s, y0, x0, ch, cw);
      break;
    }
  }
}

void AdamW::step(nn::ParamSet& params, double lr) {
  auto& all = params.all();
  if (m_.size() != all.size()) {
    m_.assign(all.size(), {});
    v_.assign(all.size(), {});
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < all.size(); ++i) {
    nn::Node& p = *all[i].var;
    if (!p.requires_grad || p.grad.empty()) continue;
    if (m_[i].size() != p.size()) {
      m_[i].assign(p.size(), 0.0);
      v_[i].assign(p.size(), 0.0);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const double mh = m_[i][j] / bc1;
      const double vh = v_[i][j] / bc2;
      p.value[j] -= lr * (mh / (std::sqrt(vh) + eps_) + wd_ * p.value[j]);
    }
  }
}

namespace {

constexpr char kMagic[4] = {'A', 'F', 'H', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF64 = 2;

void write_moments(std::ostream& out, const std::vector<std::vector<double>>& mo) {
  binio::write_u32(out, static_cast<std::uint32_t>(mo.size()));
  for (const auto& t : mo) {
    binio::write_u64(out, t.size());
    for (double x : t) binio::write_f64(out, x);
  }
}

std::vector<std::vector<double>> read_moments(std::istream& in) {
  const auto n = binio::read_u32(in);
  std::vector<std::vector<double>> mo(n);
  for (auto& t : mo) {
    const auto len = binio::read_u64(in);
    if (len > (1ull << 32)) throw ValidationError("checkpoint: corrupt moment tensor");
    t.resize(len);
    for (double& x : t) x = binio::read_f64(in);
  }
  return mo;
}

}  // namespace

void save_checkpoint(const std::string& path, const AffordanceModel& model, const TrainConfig& train,
                     const AdamW* opt, std::int64_t step, std::uint64_t init_seed, double best_score) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  binio::write_u32(out, kVersion);
  binio::write_string(out, to_key_values(model.config()));
  binio::write_string(out, to_key_values(train));
  binio::write_u64(out, static_cast<std::uint64_t>(step));
  binio::write_u64(out, train.seed);
  binio::write_u64(out, init_seed);
  binio::write_f64(out, best_score);
  const auto& ps = model.params().all();
  binio::write_u32(out, static_cast<std::uint32_t>(ps.size()));
  for (const auto& p : ps) {
    binio::write_string(out, p.name);
    binio::write_u32(out, static_cast<std::uint32_t>(p.var->rows));
    binio::write_u32(out, static_cast<std::uint32_t>(p.var->cols));
    binio::write_u32(out, kDtypeF64);
    for (double x : p.var->value) binio::write_f64(out, x);
  }
  binio::write_u32(out, opt ? 1u : 0u);
  if (opt) {
    write_moments(out, opt->m());
    write_moments(out, opt->v());
  }
  const std::string tmp = path + ".tmp";
  binio::write_file(tmp, out.str());
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = binio::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) throw ValidationError(path + ": not an AFHT checkpoint");
  const auto version = binio::read_u32(in);
  if (version != kVersion) throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  {
    TrainConfig scratch;
    apply_key_values(c.model, scratch, parse_key_values(binio::read_string(in)));
    ModelConfig scratch_model;
    apply_key_values(scratch_model, c.train, parse_key_values(binio::read_string(in)));
  }
  c.step = static_cast<std::int64_t>(binio::read_u64(in));
  c.seed = binio::read_u64(in);
  c.init_seed = binio::read_u64(in);
  c.best_score = binio::read_f64(in);
  const auto n = binio::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = binio::read_string(in);
    t.rows = static_cast<int>(binio::read_u32(in));
    t.cols = static_cast<int>(binio::read_u32(in));
    const auto dtype = binio::read_u32(in);
    if (t.rows < 0 || t.cols < 0 || static_cast<std::uint64_t>(t.rows) * t.cols > (1ull << 30))
      throw ValidationError(path + ": corrupt tensor shape for " + t.name);
    t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
    if (dtype == kDtypeF64) {
      for (double& x : t.values) x = binio::read_f64(in);
    } else if (dtype == 1) {
      for (double& x : t.values) x = binio::read_f32(in);
    } else {
      throw ValidationError(path + ": unknown dtype for " + t.name);
    }
    c.params.push_back(std::move(t));
  }
  if (binio::read_u32(in) == 1u) {
    c.adam_m = read_moments(in);
    c.adam_v = read_moments(in);
  }
  return c;
}

std::unique_ptr<AffordanceModel> model_from_checkpoint(const Checkpoint& c) {
  auto model = std::make_unique<AffordanceModel>(c.model, c.init_seed);
  auto& ps = model->params().all();
  if (ps.size() != c.params.size())
    throw ValidationError("checkpoint holds " + std::to_string(c.params.size()) + " tensors, model expects " +
                          std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const NamedTensor& t = c.params[i];
    nn::Node& p = *ps[i].var;
    if (t.name != ps[i].name || t.rows != p.rows || t.cols != p.cols)
      throw ValidationError("checkpoint tensor '" + t.name + "' does not match model parameter '" + ps[i].name + "'");
    p.value = t.values;
  }
  return model;
}

std::string format_step_record(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "step=%d epoch=%d bce=%.17g soft_iou_loss=%.17g total=%.17g lr=%.17g", r.step,
                r.epoch, r.bce, r.soft_iou_loss, r.total, r.lr);
  return buf;
}

TrainResult train(const Manifest& manifest, ClipCache& clips, const ModelConfig& model_cfg_in,
                  const TrainConfig& train_cfg_in, const TrainOptions& opts) {
#if defined(__GLIBC__)
  // Every step allocates and frees the same large activation buffers; keep
  // them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  ModelConfig model_cfg = model_cfg_in;
  TrainConfig cfg = train_cfg_in;
  std::uint64_t init_seed = derive_seed(cfg.seed, hash_string("init"));
  std::int64_t start_step = 0;
  double best_score = -1.0;
  Checkpoint resume;
  if (!opts.resume_from.empty()) {
    resume = load_checkpoint(opts.resume_from);
    model_cfg = resume.model;
    cfg = resume.train;
    init_seed = resume.init_seed;
    start_step = resume.step;
    best_score = resume.best_score;
  }
  model_cfg.validate();
  cfg.validate();

  const SplitReport splits = validate_splits(manifest);
  if (splits.leakage) {
    std::string ids;
    for (const auto& c : splits.leaking_cases) ids += (ids.empty() ? "" : ",") + c;
    throw ValidationError("split leakage across cases: " + ids);
  }
  const auto train_records = manifest.in_split(Split::kTrain);
  const auto val_records = manifest.in_split(Split::kVal);
  if (train_records.empty()) throw ValidationError("train split is empty");
  for (const auto* r : train_records)
    if (r->frame_height != model_cfg.frame_height || r->frame_width != model_cfg.frame_width)
      throw ConfigError("clip '" + r->clip_id + "' geometry differs from the model configuration");

  TrainResult res;
  res.model = opts.resume_from.empty() ? std::make_unique<AffordanceModel>(model_cfg, init_seed)
                                       : model_from_checkpoint(resume);
  AffordanceModel& model = *res.model;
  nn::ParamSet& params = model.params();
  params.set_trainable("cond.", !cfg.freeze_conditioning);
  params.set_trainable("enc.", !cfg.freeze_encoder);
  params.set_trainable("dec.", !cfg.freeze_decoder);
  res.param_count = params.scalar_count();
  res.trainable_count = params.trainable_scalar_count();

  AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  if (!opts.resume_from.empty()) {
    opt.m() = resume.adam_m;
    opt.v() = resume.adam_v;
    opt.set_steps(start_step);
  }

  const int n = static_cast<int>(train_records.size());
  const int batch = std::min(cfg.batch, n);
  const int per_epoch = (n + batch - 1) / batch;
  const int total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * per_epoch;
  res.total_steps = total;

  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log_file.open((std::filesystem::path(opts.out_dir) / "train_log.txt").string(),
                  start_step > 0 ? std::ios::app : std::ios::trunc);
    res.best_path = (std::filesystem::path(opts.out_dir) / "best.ckpt").string();
    res.last_path = (std::filesystem::path(opts.out_dir) / "last.ckpt").string();
  }
  auto emit = [&](const std::string& line) {
    if (log_file) log_file << line << '\n';
    if (opts.log) *opts.log << line << '\n';
  };
  emit("params total=" + std::to_string(res.param_count) + " trainable=" + std::to_string(res.trainable_count) +
       " ablation=" + to_string(cfg.ablation));

  EvalOptions eval_opts{cfg.tau, cfg.all_components, cfg.sigma_scale, cfg.min_sigma};
  std::vector<int> order;
  int order_epoch = -1;
  bool best_saved = false;
  for (std::int64_t step = start_step; step < total; ++step) {
    if (opts.stop_at_step >= 0 && step >= opts.stop_at_step) break;
    const int epoch = static_cast<int>(step / per_epoch);
    const int b = static_cast<int>(step % per_epoch);
    if (order_epoch != epoch) {
      order.resize(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      Rng shuffle_rng(derive_seed(cfg.seed, hash_string("order"), epoch));
      for (int i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, i - 1))]);
      order_epoch = epoch;
    }
    const int lo = b * batch, hi = std::min(n, lo + batch);
    const double lr = cosine_lr(static_cast<int>(step), total, cfg.lr0, cfg.lr_min);
    params.zero_grad();
    StepRecord rec;
    rec.step = static_cast<int>(step);
    rec.epoch = epoch;
    rec.lr = lr;
    for (int i = lo; i < hi; ++i) {
      const AnnotationRecord& r = *train_records[order[i]];
      Rng rng(derive_seed(cfg.seed, hash_string("sample"), epoch, hash_string(r.clip_id)));
      const int t0 = sample_target_frame(r, rng);
      TrainSample s;
      s.clip = build_clip_window(clips.get(r.frames_path), t0, model_cfg.window_n, model_cfg.stride);
      const Point2 c = polygon_centroid(r.keypoints, r.clip_id);
      s.target = gaussian_target(c, default_sigma(r.keypoints, cfg.sigma_scale, cfg.min_sigma), r.frame_height,
                                 r.frame_width);
      augment(s, rng, cfg.augment);
      const nn::Var logits = model.forward_logits(s.clip, r.triplet());
      auto target = std::make_shared<const std::vector<double>>(s.target.values.values);
      const LossVars loss = total_loss(logits, target, cfg.lambda_iou);
      const double v = loss.total->value[0];
      if (!std::isfinite(v))
        throw NumericError("non-finite loss at step " + std::to_string(step) + " on clip '" + r.clip_id + "'");
      rec.bce += loss.bce / (hi - lo);
      rec.soft_iou_loss += loss.soft_iou_loss / (hi - lo);
      rec.total += v / (hi - lo);
      if (loss.total->requires_grad) nn::backward(nn::scale(loss.total, 1.0 / (hi - lo)));
    }
    opt.step(params, lr);
    res.steps.push_back(rec);
    emit(format_step_record(rec));

    const bool epoch_end = (step + 1) % per_epoch == 0 || step + 1 == total;
    if (epoch_end && cfg.val_every > 0 && !val_records.empty() && (epoch + 1) % cfg.val_every == 0) {
      const MetricsReport rep = evaluate_records(model, val_records, clips, eval_opts);
      res.validation.push_back({epoch, static_cast<int>(step), rep.aggregate});
      char buf[256];
      std::snprintf(buf, sizeof buf, "val epoch=%d dice=%.6f pck005=%.6f pck01=%.6f hd_px=%.6f assd_px=%.6f", epoch,
                    rep.aggregate.dice, rep.aggregate.pck005, rep.aggregate.pck01, rep.aggregate.hd_px,
                    rep.aggregate.assd_px);
      emit(buf);
      const double score = rep.aggregate.pck01 + 1e-3 * rep.aggregate.dice;
      if (score > best_score) {
        best_score = score;
        best_saved = true;
        if (!res.best_path.empty())
          save_checkpoint(res.best_path, model, cfg, &opt, step + 1, init_seed, best_score);
      }
    }
  }
  if (!res.last_path.empty()) {
    save_checkpoint(res.last_path, model, cfg, &opt, opt.steps(), init_seed, best_score);
    // Without validation the last checkpoint doubles as the best one.
    if (!best_saved && !std::filesystem::exists(res.best_path))
      std::filesystem::copy_file(res.last_path, res.best_path);
  }
  return res;
}

}  // namespace afht
