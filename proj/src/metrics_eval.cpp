#include "afht/metrics_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "afht/clip_store.hpp"
#include "afht/error.hpp"
#include "afht/model.hpp"

namespace afht {
namespace {

constexpr double kFar = 1e15;

// Exact 1D squared distance transform (lower envelope of parabolas).
void distance_1d(const double* f, double* d, int n, int step, std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto fv = [&](int q) { return f[static_cast<std::size_t>(q) * step]; };
  for (int q = 1; q < n; ++q) {
    double s = ((fv(q) + 1.0 * q * q) - (fv(v[k]) + 1.0 * v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((fv(q) + 1.0 * q * q) - (fv(v[k]) + 1.0 * v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[static_cast<std::size_t>(q) * step] = dq * dq + fv(v[k]);
  }
}

// Squared Euclidean distance from every pixel to the nearest listed pixel.
std::vector<double> squared_distance_map(const std::vector<Pixel>& sites, int h, int w) {
  std::vector<double> f(static_cast<std::size_t>(h) * w, kFar);
  for (const Pixel& p : sites) f[static_cast<std::size_t>(p.y) * w + p.x] = 0.0;
  std::vector<double> tmp(f.size());
  const int n = std::max(h, w);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  for (int x = 0; x < w; ++x) distance_1d(f.data() + x, tmp.data() + x, h, w, v, z);
  for (int y = 0; y < h; ++y)
    distance_1d(tmp.data() + static_cast<std::size_t>(y) * w, f.data() + static_cast<std::size_t>(y) * w, w, 1, v, z);
  return f;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double soft_dice(const Grid& pred, const Grid& target, bool* both_empty) {
  if (pred.height != target.height || pred.width != target.width)
    throw ParameterError("soft_dice: shape mismatch");
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred.values[i] * target.values[i];
    sp += pred.values[i];
    st += target.values[i];
  }
  if (both_empty) *both_empty = false;
  if (sp + st == 0.0) {
    if (both_empty) *both_empty = true;
    return 1.0;
  }
  return 2.0 * inter / (sp + st);
}

RegionResult heatmap_to_region(const Grid& hm, double tau, bool all_components) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("heatmap_to_region: tau must lie in (0, 1)");
  if (hm.values.empty()) throw ValidationError("heatmap_to_region: empty heatmap");
  const double mx = *std::max_element(hm.values.begin(), hm.values.end());
  if (!(mx > 0.0)) throw ValidationError("heatmap_to_region: no positive activation");
  const double thr = tau * mx;
  RegionResult res{RegionMask(hm.height, hm.width, MaskSource::kThreshold), 0};
  std::vector<int> label(hm.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<int> queue;
  for (int y = 0; y < hm.height; ++y) {
    for (int x = 0; x < hm.width; ++x) {
      const int start = y * hm.width + x;
      if (!(hm.values[start] >= thr) || label[start] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      queue.assign(1, start);
      label[start] = id;
      for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const int p = queue[qi];
        ++sizes[id];
        const int py = p / hm.width, px = p % hm.width;
        const int nb[4][2] = {{py - 1, px}, {py + 1, px}, {py, px - 1}, {py, px + 1}};
        for (const auto& n : nb) {
          if (n[0] < 0 || n[0] >= hm.height || n[1] < 0 || n[1] >= hm.width) continue;
          const int q = n[0] * hm.width + n[1];
          if (label[q] < 0 && hm.values[q] >= thr) {
            label[q] = id;
            queue.push_back(q);
          }
        }
      }
    }
  }
  if (sizes.empty()) {
    res.mask.empty = true;
    throw ValidationError("heatmap_to_region: empty mask after thresholding");
  }
  int keep = 0;
  for (int i = 1; i < static_cast<int>(sizes.size()); ++i)
    if (sizes[i] > sizes[keep]) keep = i;
  res.secondary_components = static_cast<int>(sizes.size()) - 1;
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] >= 0 && (all_components || label[i] == keep)) res.mask.values[i] = 1;
  return res;
}

Pixel argmax_pixel(const Grid& g) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < g.size(); ++i)
    if (g.values[i] > g.values[best]) best = i;
  return {static_cast<int>(best % g.width), static_cast<int>(best / g.width)};
}

int pck_at(const Grid& pred, Point2 gt, double alpha, int height, int width) {
  if (!(alpha > 0.0)) throw ParameterError("pck_at: alpha must be > 0");
  const Pixel p = argmax_pixel(pred);
  const double d = std::hypot(p.x - gt.x, p.y - gt.y);
  const double thr = alpha * std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
  return d <= thr ? 1 : 0;
}

std::vector<Pixel> boundary_pixels(const RegionMask& m) {
  std::vector<Pixel> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1))
        out.push_back({x, y});
    }
  return out;
}

SurfaceDistances surface_distances(const RegionMask& a, const RegionMask& b) {
  if (a.height != b.height || a.width != b.width) throw ParameterError("surface distances: shape mismatch");
  const auto ba = boundary_pixels(a);
  const auto bb = boundary_pixels(b);
  if (ba.empty() || bb.empty()) throw ValidationError("surface distances: empty mask");
  const auto da = squared_distance_map(ba, a.height, a.width);
  const auto db = squared_distance_map(bb, b.height, b.width);
  SurfaceDistances out;
  double sum_a = 0.0, sum_b = 0.0, max_a = 0.0, max_b = 0.0;
  for (const Pixel& p : ba) {
    const double d = std::sqrt(db[static_cast<std::size_t>(p.y) * b.width + p.x]);
    sum_a += d;
    max_a = std::max(max_a, d);
  }
  for (const Pixel& p : bb) {
    const double d = std::sqrt(da[static_cast<std::size_t>(p.y) * a.width + p.x]);
    sum_b += d;
    max_b = std::max(max_b, d);
  }
  out.hausdorff = std::max(max_a, max_b);
  out.assd = (sum_a + sum_b) / static_cast<double>(ba.size() + bb.size());
  return out;
}

double hausdorff_px(const RegionMask& a, const RegionMask& b) { return surface_distances(a, b).hausdorff; }
double assd_px(const RegionMask& a, const RegionMask& b) { return surface_distances(a, b).assd; }

std::vector<int> evaluation_frames(int start, int end, int count) {
  if (end < start) throw ParameterError("evaluation_frames: empty range");
  const int half_end = start + (end - start) / 2;
  std::vector<int> out;
  if (count <= 1 || half_end == start) return {start};
  for (int i = 0; i < count; ++i) {
    const int f = start + static_cast<int>(std::lround(static_cast<double>(i) * (half_end - start) / (count - 1)));
    if (out.empty() || out.back() != f) out.push_back(f);
  }
  return out;
}

MetricsAggregate aggregate_rows(const std::vector<MetricsRow>& rows) {
  MetricsAggregate a;
  for (const auto& r : rows) {
    a.dice += r.dice;
    a.pck005 += r.pck005;
    a.pck01 += r.pck01;
    ++a.rows;
    if (r.boundary_valid) {
      a.hd_px += r.hd_px;
      a.assd_px += r.assd_px;
      ++a.boundary_rows;
    }
  }
  if (a.rows > 0) {
    a.dice /= a.rows;
    a.pck005 /= a.rows;
    a.pck01 /= a.rows;
  }
  if (a.boundary_rows > 0) {
    a.hd_px /= a.boundary_rows;
    a.assd_px /= a.boundary_rows;
  }
  return a;
}

MetricsRow evaluate_prediction(const Grid& hm, const AnnotationRecord& rec, int frame, const EvalOptions& o) {
  MetricsRow row;
  row.clip_id = rec.clip_id;
  row.frame = frame;
  const Point2 c = polygon_centroid(rec.keypoints, rec.clip_id);
  const double sigma = default_sigma(rec.keypoints, o.sigma_scale, o.min_sigma);
  const TargetHeatmap target = gaussian_target(c, sigma, rec.frame_height, rec.frame_width);
  row.dice = soft_dice(hm, target.values);
  row.pck005 = pck_at(hm, c, 0.05, rec.frame_height, rec.frame_width);
  row.pck01 = pck_at(hm, c, 0.1, rec.frame_height, rec.frame_width);
  const RegionMask gt = rasterize_polygon(rec.keypoints, rec.frame_height, rec.frame_width);
  if (gt.empty) {
    row.boundary_valid = false;
    row.note = "degenerate_annotation";
    return row;
  }
  try {
    const RegionResult pred = heatmap_to_region(hm, o.tau, o.all_components);
    row.secondary = pred.secondary_components;
    const SurfaceDistances sd = surface_distances(pred.mask, gt);
    row.hd_px = sd.hausdorff;
    row.assd_px = sd.assd;
  } catch (const ValidationError&) {
    row.boundary_valid = false;
    row.note = "empty_prediction";
  }
  return row;
}

MetricsReport evaluate_records(const AffordanceModel& model, const std::vector<const AnnotationRecord*>& records,
                               ClipCache& clips, const EvalOptions& opts) {
  MetricsReport rep;
  const ModelConfig& cfg = model.config();
  for (const AnnotationRecord* rec : records) {
    model.check_geometry(rec->frame_height, rec->frame_width);
    const ClipFrames& frames = clips.get(rec->frames_path);
    if (frames.height != rec->frame_height || frames.width != rec->frame_width)
      throw ValidationError("clip '" + rec->clip_id + "': frame file geometry differs from the record");
    for (int f : evaluation_frames(rec->pre_action_start, rec->pre_action_end)) {
      const ClipWindow win = build_clip_window(frames, f, cfg.window_n, cfg.stride);
      MetricsRow row = evaluate_prediction(model.predict(win, rec->triplet()), *rec, f, opts);
      if (rec->degenerate) ++rep.degenerate;
      if (!row.boundary_valid) ++rep.skipped;
      rep.rows.push_back(std::move(row));
    }
  }
  rep.aggregate = aggregate_rows(rep.rows);
  return rep;
}

MetricsReport evaluate_split(const AffordanceModel& model, const Manifest& manifest, Split split,
                             ClipCache& clips, const EvalOptions& opts) {
  const auto records = manifest.in_split(split);
  if (records.empty()) throw ValidationError(std::string("split '") + to_string(split) + "' is empty");
  return evaluate_records(model, records, clips, opts);
}

void save_report(const MetricsReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path);
  out << "clip_id\tframe\tdice\tpck005\tpck01\thd_px\tassd_px\tsecondary\tstatus\n";
  for (const auto& r : rep.rows) {
    out << r.clip_id << '\t' << r.frame << '\t' << fmt(r.dice) << '\t' << fmt(r.pck005) << '\t' << fmt(r.pck01)
        << '\t' << (r.boundary_valid ? fmt(r.hd_px) : "nan") << '\t' << (r.boundary_valid ? fmt(r.assd_px) : "nan")
        << '\t' << r.secondary << '\t' << (r.note.empty() ? "ok" : r.note) << '\n';
  }
  const auto& a = rep.aggregate;
  out << "#aggregate dice=" << fmt(a.dice) << " pck005=" << fmt(a.pck005) << " pck01=" << fmt(a.pck01)
      << " hd_px=" << fmt(a.hd_px) << " assd_px=" << fmt(a.assd_px) << " rows=" << a.rows
      << " boundary_rows=" << a.boundary_rows << " skipped=" << rep.skipped << " degenerate=" << rep.degenerate
      << '\n';
}

MetricsReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path);
  MetricsReport rep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    if (line.rfind("#aggregate", 0) == 0) {
      std::istringstream is(line.substr(10));
      std::string kv;
      while (is >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        auto& a = rep.aggregate;
        if (k == "dice") a.dice = std::stod(v);
        else if (k == "pck005") a.pck005 = std::stod(v);
        else if (k == "pck01") a.pck01 = std::stod(v);
        else if (k == "hd_px") a.hd_px = std::stod(v);
        else if (k == "assd_px") a.assd_px = std::stod(v);
        else if (k == "rows") a.rows = std::stoi(v);
        else if (k == "boundary_rows") a.boundary_rows = std::stoi(v);
        else if (k == "skipped") rep.skipped = std::stoi(v);
        else if (k == "degenerate") rep.degenerate = std::stoi(v);
      }
      continue;
    }
    std::istringstream is(line);
    MetricsRow r;
    std::string hd, assd, status;
    std::getline(is, r.clip_id, '\t');
    if (!(is >> r.frame >> r.dice >> r.pck005 >> r.pck01 >> hd >> assd >> r.secondary >> status))
      throw ValidationError("malformed report row: " + line);
    r.boundary_valid = hd != "nan";
    if (r.boundary_valid) {
      r.hd_px = std::stod(hd);
      r.assd_px = std::stod(assd);
    }
    if (status != "ok") r.note = status;
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::string format_table(const std::vector<std::pair<std::string, MetricsAggregate>>& rows) {
  std::size_t name_w = 7;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "Model" << std::right << std::setw(9) << "DICE"
     << std::setw(11) << "PCK@0.05" << std::setw(10) << "PCK@0.1" << std::setw(10) << "HD(px)" << std::setw(10)
     << "ASSD(px)" << '\n';
  os << std::fixed;
  for (const auto& [name, a] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name << std::right << std::setprecision(3)
       << std::setw(9) << a.dice << std::setw(11) << a.pck005 << std::setw(10) << a.pck01 << std::setw(10)
       << a.hd_px << std::setw(10) << a.assd_px << '\n';
  }
  return os.str();
}

}  // namespace afht
