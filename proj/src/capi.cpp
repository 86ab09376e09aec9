#include "afht/afht.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "afht/clip_store.hpp"
#include "afht/config.hpp"
#include "afht/data_model.hpp"
#include "afht/error.hpp"
#include "afht/image_io.hpp"
#include "afht/metrics_eval.hpp"
#include "afht/synthetic_gen.hpp"
#include "afht/trainer.hpp"

struct afht_model {
  afht::Checkpoint checkpoint;
  std::unique_ptr<afht::AffordanceModel> model;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
int guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return AFHT_OK;
  } catch (const afht::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return AFHT_ERR_VALIDATION;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return AFHT_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return AFHT_ERR_VALIDATION;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AFHT_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

std::string str(const char* s) { return s ? std::string(s) : std::string(); }

void require(bool ok, const char* what) {
  if (!ok) throw afht::ParameterError(what);
}

nlohmann::ordered_json aggregate_json(const afht::MetricsAggregate& a) {
  nlohmann::ordered_json j;
  j["dice"] = a.dice;
  j["pck005"] = a.pck005;
  j["pck01"] = a.pck01;
  j["hd_px"] = a.hd_px;
  j["assd_px"] = a.assd_px;
  j["rows"] = a.rows;
  j["boundary_rows"] = a.boundary_rows;
  return j;
}

}  // namespace

extern "C" {

const char* afht_last_error(void) { return g_last_error.c_str(); }
const char* afht_version(void) { return "0.1.0"; }
void afht_string_free(char* s) { std::free(s); }

int afht_config_keys(const char* kind, char** out_lines) {
  return guarded([&] {
    const std::string k = str(kind);
    std::vector<std::string> keys;
    if (k == "model") keys = afht::model_config_keys();
    else if (k == "train") keys = afht::train_config_keys();
    else if (k == "dataset") keys = afht::dataset_config_keys();
    else throw afht::ParameterError("unknown key set '" + k + "'");
    std::string out;
    for (const auto& key : keys) out += key + "\n";
    put(out_lines, out);
  });
}

int afht_generate_dataset(const char* out_dir, const char* config_text, char** out_summary) {
  return guarded([&] {
    require(out_dir && *out_dir, "output directory is required");
    afht::DatasetConfig cfg;
    afht::apply_dataset_key_values(cfg, afht::parse_key_values(str(config_text)));
    const afht::Manifest m = afht::generate_dataset(cfg, out_dir);
    const afht::SplitReport rep = afht::validate_splits(m);
    nlohmann::ordered_json j;
    j["manifest"] = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
    j["clips"] = m.records.size();
    for (auto s : {afht::Split::kTrain, afht::Split::kVal, afht::Split::kTest}) {
      const auto it = rep.case_counts.find(s);
      j["cases"][afht::to_string(s)] = it == rep.case_counts.end() ? 0 : it->second;
    }
    put(out_summary, j.dump());
  });
}

int afht_validate_manifest(const char* manifest_path, char** out_report) {
  bool leak = false;
  const int rc = guarded([&] {
    require(manifest_path, "manifest path is required");
    const afht::Manifest m = afht::load_manifest(manifest_path);
    const afht::SplitReport rep = afht::validate_splits(m);
    nlohmann::ordered_json j;
    j["records"] = m.records.size();
    j["leakage"] = rep.leakage;
    j["leaking_cases"] = rep.leaking_cases;
    for (auto s : {afht::Split::kTrain, afht::Split::kVal, afht::Split::kTest}) {
      const auto c = rep.clip_counts.find(s);
      const auto k = rep.case_counts.find(s);
      j["clips"][afht::to_string(s)] = c == rep.clip_counts.end() ? 0 : c->second;
      j["cases"][afht::to_string(s)] = k == rep.case_counts.end() ? 0 : k->second;
    }
    put(out_report, j.dump());
    if (rep.leakage) {
      std::string ids;
      for (const auto& c : rep.leaking_cases) ids += (ids.empty() ? "" : ",") + c;
      g_last_error = "split leakage: cases " + ids + " appear in more than one split";
      leak = true;
    }
  });
  if (rc == AFHT_OK && leak) return AFHT_ERR_VALIDATION;
  return rc;
}

int afht_train(const char* manifest_path, const char* config_text, const char* out_dir, const char* resume_path,
               int stop_at_step, char** out_summary) {
  return guarded([&] {
    require(manifest_path, "manifest path is required");
    afht::ModelConfig mc;
    afht::TrainConfig tc;
    afht::apply_key_values(mc, tc, afht::parse_key_values(str(config_text)));
    const afht::Manifest m = afht::load_manifest(manifest_path);
    afht::ClipCache clips(m.base_dir);
    afht::TrainOptions opts;
    opts.out_dir = str(out_dir);
    opts.resume_from = str(resume_path);
    opts.stop_at_step = stop_at_step;
    const afht::TrainResult r = afht::train(m, clips, mc, tc, opts);
    nlohmann::ordered_json j;
    j["steps_run"] = r.steps.size();
    j["total_steps"] = r.total_steps;
    j["param_count"] = r.param_count;
    j["trainable_count"] = r.trainable_count;
    if (!r.steps.empty()) {
      j["first_step"] = r.steps.front().step;
      j["last_step"] = r.steps.back().step;
      j["last_loss"] = r.steps.back().total;
    }
    if (!r.validation.empty()) j["last_validation"] = aggregate_json(r.validation.back().metrics);
    j["best_checkpoint"] = r.best_path;
    j["last_checkpoint"] = r.last_path;
    put(out_summary, j.dump());
  });
}

int afht_model_load(const char* checkpoint_path, afht_model** out_model) {
  return guarded([&] {
    require(checkpoint_path && out_model, "checkpoint path and output handle are required");
    auto h = std::make_unique<afht_model>();
    h->checkpoint = afht::load_checkpoint(checkpoint_path);
    h->model = afht::model_from_checkpoint(h->checkpoint);
    h->checkpoint.params.clear();
    h->checkpoint.adam_m.clear();
    h->checkpoint.adam_v.clear();
    *out_model = h.release();
  });
}

void afht_model_free(afht_model* model) { delete model; }

int afht_model_geometry(const afht_model* model, int* height, int* width) {
  return guarded([&] {
    require(model, "model handle is required");
    if (height) *height = model->model->config().frame_height;
    if (width) *width = model->model->config().frame_width;
  });
}

int afht_evaluate(const afht_model* model, const char* manifest_path, const char* split, const char* options_text,
                  const char* report_path, char** out_aggregate) {
  return guarded([&] {
    require(model && manifest_path && split, "model, manifest and split are required");
    const afht::TrainConfig& tc = model->checkpoint.train;
    afht::EvalOptions eo{tc.tau, tc.all_components, tc.sigma_scale, tc.min_sigma};
    for (const auto& [k, v] : afht::parse_key_values(str(options_text))) {
      try {
        if (k == "tau") eo.tau = std::stod(v);
        else if (k == "all_components") eo.all_components = (v == "true" || v == "1");
        else if (k == "sigma_scale") eo.sigma_scale = std::stod(v);
        else if (k == "min_sigma") eo.min_sigma = std::stod(v);
        else throw afht::ParameterError("unknown evaluation key '" + k + "'");
      } catch (const std::logic_error&) {
        throw afht::ParameterError("malformed value for '" + k + "': " + v);
      }
    }
    const afht::Manifest m = afht::load_manifest(manifest_path);
    for (const auto& r : m.records) model->model->check_geometry(r.frame_height, r.frame_width);
    afht::ClipCache clips(m.base_dir);
    const afht::MetricsReport rep = afht::evaluate_split(*model->model, m, afht::parse_split(split), clips, eo);
    if (report_path && *report_path) afht::save_report(rep, report_path);
    nlohmann::ordered_json j = aggregate_json(rep.aggregate);
    j["skipped"] = rep.skipped;
    j["degenerate"] = rep.degenerate;
    put(out_aggregate, j.dump());
  });
}

int afht_predict(const afht_model* model, const char* clip_path, int frame, const char* surgery, const char* tool,
                 const char* action, double* out, size_t out_len) {
  return guarded([&] {
    require(model && clip_path && surgery && tool && action && out, "missing argument");
    const afht::ModelConfig& cfg = model->model->config();
    const afht::ClipFrames clip = afht::load_clip(clip_path);
    model->model->check_geometry(clip.height, clip.width);
    if (out_len < static_cast<size_t>(cfg.frame_height) * cfg.frame_width)
      throw afht::ParameterError("output buffer too small");
    const afht::ClipWindow win = afht::build_clip_window(clip, frame, cfg.window_n, cfg.stride);
    const afht::Grid g = model->model->predict(win, {surgery, tool, action});
    std::copy(g.values.begin(), g.values.end(), out);
  });
}

int afht_write_prediction(const double* heatmap, int height, int width, const char* clip_path, int frame,
                          const char* grid_path, const char* pgm_path, const char* overlay_path) {
  return guarded([&] {
    require(heatmap && height > 0 && width > 0, "heatmap is required");
    afht::Grid g(height, width);
    std::copy(heatmap, heatmap + g.size(), g.values.begin());
    if (grid_path && *grid_path) afht::save_grid(g, grid_path);
    if (pgm_path && *pgm_path) afht::save_pgm(g, pgm_path);
    if (overlay_path && *overlay_path) {
      require(clip_path, "overlay needs the clip");
      const afht::ClipFrames clip = afht::load_clip(clip_path);
      if (clip.height != height || clip.width != width)
        throw afht::ValidationError("clip geometry differs from the heatmap");
      if (frame < 0 || frame >= clip.frames) throw afht::ParameterError("frame index out of range");
      afht::save_ppm(afht::overlay_heatmap(clip.frame(frame), g, 0.5), overlay_path);
    }
  });
}

int afht_comparison_table(const char* const* names, const char* const* report_paths, int count, char** out_table) {
  return guarded([&] {
    require(count >= 0 && (count == 0 || (names && report_paths)), "names and report paths are required");
    std::vector<std::pair<std::string, afht::MetricsAggregate>> rows;
    for (int i = 0; i < count; ++i) rows.emplace_back(names[i], afht::load_report(report_paths[i]).aggregate);
    put(out_table, afht::format_table(rows));
  });
}

}  // extern "C"
