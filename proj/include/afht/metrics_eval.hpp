#pragma once

#include <map>
#include <string>
#include <vector>

#include "afht/data_model.hpp"
#include "afht/heatmap_targets.hpp"
#include "afht/types.hpp"

namespace afht {

class AffordanceModel;
class ClipCache;

// 2 sum(p t) / (sum p + sum t). Both grids all-zero gives 1 with
// `both_empty` set.
double soft_dice(const Grid& pred, const Grid& target, bool* both_empty = nullptr);

struct RegionResult {
  RegionMask mask;
  int secondary_components = 0;  // components dropped by largest-component retention
};

// Pixels >= tau * max(heatmap); keeps the largest 4-connected component
// (ties: first in row-major order) unless `all_components`. A heatmap with
// no positive value counts as empty. Throws
// ValidationError on an empty result.
RegionResult heatmap_to_region(const Grid& heatmap, double tau, bool all_components = false);

struct Pixel {
  int x = 0;
  int y = 0;
};

// First maximum in row-major order.
Pixel argmax_pixel(const Grid& g);

// 1 iff |argmax - gt| <= alpha * sqrt(H^2 + W^2).
int pck_at(const Grid& pred, Point2 gt, double alpha, int height, int width);

// Set pixels with an unset 4-neighbour or lying on the frame edge.
std::vector<Pixel> boundary_pixels(const RegionMask& mask);

struct SurfaceDistances {
  double hausdorff = 0.0;
  double assd = 0.0;
};

// Boundary-to-boundary distances computed with exact Euclidean distance
// transforms. Throws ValidationError if either mask is empty.
SurfaceDistances surface_distances(const RegionMask& a, const RegionMask& b);
double hausdorff_px(const RegionMask& a, const RegionMask& b);
double assd_px(const RegionMask& a, const RegionMask& b);

// Eight evenly spaced frames over the earlier half of [start, end], rounded,
// duplicates collapsed.
std::vector<int> evaluation_frames(int start, int end, int count = 8);

struct MetricsRow {
  std::string clip_id;
  int frame = 0;
  double dice = 0.0;
  double pck005 = 0.0;
  double pck01 = 0.0;
  double hd_px = 0.0;
  double assd_px = 0.0;
  int secondary = 0;
  bool boundary_valid = true;  // false when HD/ASSD could not be computed
  std::string note;
};

struct MetricsAggregate {
  double dice = 0.0;
  double pck005 = 0.0;
  double pck01 = 0.0;
  double hd_px = 0.0;
  double assd_px = 0.0;
  int rows = 0;
  int boundary_rows = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsAggregate aggregate;
  int skipped = 0;     // rows without boundary metrics
  int degenerate = 0;  // rows whose annotation quad is degenerate
};

// Means over rows; HD and ASSD over rows with valid boundary metrics.
MetricsAggregate aggregate_rows(const std::vector<MetricsRow>& rows);

struct EvalOptions {
  double tau = 0.5;
  bool all_components = false;
  double sigma_scale = 0.5;
  double min_sigma = 1.0;
};

MetricsRow evaluate_prediction(const Grid& heatmap, const AnnotationRecord& record, int frame,
                               const EvalOptions& opts);

MetricsReport evaluate_records(const AffordanceModel& model, const std::vector<const AnnotationRecord*>& records,
                               ClipCache& clips, const EvalOptions& opts);

MetricsReport evaluate_split(const AffordanceModel& model, const Manifest& manifest, Split split,
                             ClipCache& clips, const EvalOptions& opts);

// Tab-separated rows with a header, then an `#aggregate` footer.
void save_report(const MetricsReport& report, const std::string& path);
MetricsReport load_report(const std::string& path);

// Human-readable table in the column order DICE, PCK@0.05, PCK@0.1, HD, ASSD.
std::string format_table(const std::vector<std::pair<std::string, MetricsAggregate>>& rows);

}  // namespace afht
