// Command-line front end over the afht C API.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "afht/afht.h"

namespace {

namespace fs = std::filesystem;

const char* kind_name(int code) {
  switch (code) {
    case AFHT_ERR_PARAMETER: return "usage";
    case AFHT_ERR_VALIDATION: return "data";
    case AFHT_ERR_NUMERIC: return "numeric";
    default: return "internal";
  }
}

int exit_code(int status) { return status == AFHT_ERR_INTERNAL ? 2 : status; }

// One machine-parsable line per failure: `afht: error <code> <kind>: <message>`.
int fail(int status, const std::string& message) {
  std::string m = message;
  std::replace(m.begin(), m.end(), '\n', ' ');
  std::cerr << "afht: error " << exit_code(status) << ' ' << kind_name(status) << ": " << m << '\n';
  return exit_code(status);
}

int fail_last(int status) { return fail(status, afht_last_error()); }

std::string take(char* s) {
  std::string out = s ? s : "";
  afht_string_free(s);
  return out;
}

std::vector<std::string> keys_of(const char* kind) {
  char* raw = nullptr;
  if (afht_config_keys(kind, &raw) != AFHT_OK) return {};
  std::istringstream is(take(raw));
  std::vector<std::string> keys;
  for (std::string k; std::getline(is, k);)
    if (!k.empty()) keys.push_back(k);
  return keys;
}

// Registers one `--key` option per config key; set values override the file.
struct KeyFlags {
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::vector<std::string>& keys) {
    for (const auto& k : keys)
      if (!app->get_option_no_throw("--" + k)) app->add_option("--" + k, values[k], "config key " + k);
  }

  std::string config_text(const std::string& file, CLI::App* app) const {
    std::string text;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw std::runtime_error("cannot open config file " + file);
      std::ostringstream os;
      os << in.rdbuf();
      text = os.str() + "\n";
    }
    for (const auto& [k, v] : values)
      if (app->count("--" + k) > 0) text += k + " = " + v + "\n";
    return text;
  }
};

std::string json_field(const std::string& json, const std::string& key) {
  const auto pos = json.find("\"" + key + "\":");
  if (pos == std::string::npos) return {};
  auto start = pos + key.size() + 3;
  auto end = json.find_first_of(",}", start);
  std::string v = json.substr(start, end - start);
  if (!v.empty() && v.front() == '"') v = v.substr(1, v.size() - 2);
  return v;
}

int run_eval(const std::string& checkpoint, const std::string& data, const std::string& split,
             const std::string& options, const std::string& report, std::string* aggregate) {
  afht_model* model = nullptr;
  int rc = afht_model_load(checkpoint.c_str(), &model);
  if (rc != AFHT_OK) return fail_last(rc);
  char* out = nullptr;
  rc = afht_evaluate(model, data.c_str(), split.c_str(), options.c_str(), report.empty() ? nullptr : report.c_str(),
                     &out);
  afht_model_free(model);
  if (rc != AFHT_OK) return fail_last(rc);
  *aggregate = take(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-conditioned affordance heatmap toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out, gen_config;
  KeyFlags gen_flags;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--config", gen_config, "key = value file");
  gen_flags.add(gen, keys_of("dataset"));

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_data, tr_config, tr_out, tr_resume;
  int tr_stop = -1;
  KeyFlags tr_flags;
  tr->add_option("--data", tr_data, "Manifest file or dataset directory")->required();
  tr->add_option("--config", tr_config, "key = value file");
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--stop-at-step", tr_stop, "Stop after this many total steps");
  tr_flags.add(tr, keys_of("model"));
  tr_flags.add(tr, keys_of("train"));

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report;
  KeyFlags ev_flags;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Manifest file or dataset directory")->required();
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--report", ev_report, "Per-row report output path");
  ev_flags.add(ev, {"tau", "all_components", "sigma_scale", "min_sigma"});

  // predict
  auto* pr = app.add_subcommand("predict", "Predict a heatmap for one clip frame");
  std::string pr_ckpt, pr_clip, pr_out, pr_surgery = "cholecystectomy", pr_tool, pr_action;
  int pr_frame = 0;
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint path")->required();
  pr->add_option("--clip", pr_clip, "AFVC clip file")->required();
  pr->add_option("--frame", pr_frame, "Target frame index")->required();
  pr->add_option("--surgery", pr_surgery, "Surgery token");
  pr->add_option("--tool", pr_tool, "Tool token")->required();
  pr->add_option("--action", pr_action, "Action token")->required();
  pr->add_option("--out", pr_out, "Output prefix (.grid, .pgm, _overlay.ppm)")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate one ablation preset, then refresh the comparison table");
  std::string ab_preset, ab_data, ab_config, ab_out, ab_split = "test";
  KeyFlags ab_flags;
  ab->add_option("preset", ab_preset, "Ablation preset")->required();
  ab->add_option("--data", ab_data, "Manifest file or dataset directory")->required();
  ab->add_option("--config", ab_config, "key = value file");
  ab->add_option("--out", ab_out, "Output directory holding one folder per preset")->required();
  ab->add_option("--split", ab_split, "Evaluation split");
  ab_flags.add(ab, keys_of("model"));
  ab_flags.add(ab, keys_of("train"));

  // validate
  auto* va = app.add_subcommand("validate", "Check a manifest for split leakage");
  std::string va_data;
  va->add_option("--data", va_data, "Manifest file or dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << app.help();
    return fail(AFHT_ERR_PARAMETER, e.what());
  }

  try {
    if (*gen) {
      char* out = nullptr;
      const int rc = afht_generate_dataset(gen_out.c_str(), gen_flags.config_text(gen_config, gen).c_str(), &out);
      if (rc != AFHT_OK) return fail_last(rc);
      std::cout << take(out) << '\n';
      return 0;
    }
    if (*tr) {
      char* out = nullptr;
      const int rc = afht_train(tr_data.c_str(), tr_flags.config_text(tr_config, tr).c_str(), tr_out.c_str(),
                                tr_resume.empty() ? nullptr : tr_resume.c_str(), tr_stop, &out);
      if (rc != AFHT_OK) return fail_last(rc);
      std::cout << take(out) << '\n';
      return 0;
    }
    if (*ev) {
      std::string agg;
      const int rc = run_eval(ev_ckpt, ev_data, ev_split, ev_flags.config_text("", ev), ev_report, &agg);
      if (rc != 0) return rc;
      std::cout << agg << '\n';
      return 0;
    }
    if (*pr) {
      afht_model* model = nullptr;
      int rc = afht_model_load(pr_ckpt.c_str(), &model);
      if (rc != AFHT_OK) return fail_last(rc);
      int h = 0, w = 0;
      afht_model_geometry(model, &h, &w);
      std::vector<double> hm(static_cast<std::size_t>(h) * w);
      rc = afht_predict(model, pr_clip.c_str(), pr_frame, pr_surgery.c_str(), pr_tool.c_str(), pr_action.c_str(),
                        hm.data(), hm.size());
      afht_model_free(model);
      if (rc != AFHT_OK) return fail_last(rc);
      const std::string grid = pr_out + ".grid", pgm = pr_out + ".pgm", overlay = pr_out + "_overlay.ppm";
      rc = afht_write_prediction(hm.data(), h, w, pr_clip.c_str(), pr_frame, grid.c_str(), pgm.c_str(),
                                 overlay.c_str());
      if (rc != AFHT_OK) return fail_last(rc);
      std::cout << grid << '\n' << pgm << '\n' << overlay << '\n';
      return 0;
    }
    if (*ab) {
      const fs::path run_dir = fs::path(ab_out) / ab_preset;
      std::string text = ab_flags.config_text(ab_config, ab) + "ablation = " + ab_preset + "\n";
      char* out = nullptr;
      int rc = afht_train(ab_data.c_str(), text.c_str(), run_dir.string().c_str(), nullptr, -1, &out);
      if (rc != AFHT_OK) return fail_last(rc);
      const std::string summary = take(out);
      std::string agg;
      const std::string report = (run_dir / "report.tsv").string();
      rc = run_eval(json_field(summary, "best_checkpoint"), ab_data, ab_split, "", report, &agg);
      if (rc != 0) return rc;

      std::vector<std::string> names, paths;
      for (const auto& entry : fs::directory_iterator(ab_out)) {
        if (entry.is_directory() && fs::exists(entry.path() / "report.tsv")) {
          names.push_back(entry.path().filename().string());
          paths.push_back((entry.path() / "report.tsv").string());
        }
      }
      std::vector<std::size_t> idx(names.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if ((names[a] == "none") != (names[b] == "none")) return names[a] == "none";
        return names[a] < names[b];
      });
      std::vector<const char*> cn, cp;
      for (std::size_t i : idx) {
        cn.push_back(names[i].c_str());
        cp.push_back(paths[i].c_str());
      }
      char* table = nullptr;
      rc = afht_comparison_table(cn.data(), cp.data(), static_cast<int>(cn.size()), &table);
      if (rc != AFHT_OK) return fail_last(rc);
      const std::string t = take(table);
      std::ofstream((fs::path(ab_out) / "comparison.txt").string()) << t;
      std::cout << t;
      return 0;
    }
    if (*va) {
      char* out = nullptr;
      const int rc = afht_validate_manifest(va_data.c_str(), &out);
      const std::string report = take(out);
      if (!report.empty()) std::cout << report << '\n';
      if (rc != AFHT_OK) return fail_last(rc);
      return 0;
    }
  } catch (const std::exception& e) {
    return fail(AFHT_ERR_VALIDATION, e.what());
  }
  return 0;
}
