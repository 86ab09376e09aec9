#include "afht/data_model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "afht/error.hpp"
#include "afht/geometry.hpp"

namespace afht {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kDegenerateArea = 1e-9;

template <typename T>
T required(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

bool AnnotationRecord::same_fields(const AnnotationRecord& o) const {
  return clip_id == o.clip_id && case_id == o.case_id && split == o.split && surgery == o.surgery &&
         tool == o.tool && action == o.action && frame_count == o.frame_count &&
         frame_height == o.frame_height && frame_width == o.frame_width &&
         pre_action_start == o.pre_action_start && pre_action_end == o.pre_action_end &&
         keypoints == o.keypoints && frames_path == o.frames_path;
}

const AnnotationRecord* Manifest::find(const std::string& clip_id) const {
  for (const auto& r : records)
    if (r.clip_id == clip_id) return &r;
  return nullptr;
}

std::vector<const AnnotationRecord*> Manifest::in_split(Split s) const {
  std::vector<const AnnotationRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

void validate_record(AnnotationRecord& r) {
  const std::string who = "clip '" + r.clip_id + "': ";
  if (r.clip_id.empty()) throw ValidationError("record with empty clip_id");
  if (r.surgery.empty() || r.tool.empty() || r.action.empty())
    throw ValidationError(who + "empty prompt field");
  if (!is_known_tool_action(r.tool, r.action))
    throw ValidationError(who + "tool-action pair (" + r.tool + ", " + r.action +
                          ") is not in the vocabulary");
  if (r.frame_count < 1 || r.frame_height < 1 || r.frame_width < 1)
    throw ValidationError(who + "non-positive frame geometry");
  if (r.pre_action_start < 0 || r.pre_action_start > r.pre_action_end ||
      r.pre_action_end >= r.frame_count)
    throw ValidationError(who + "pre-action range outside [0, frame_count)");
  for (const Point2& p : r.keypoints) {
    if (!(p.x >= 0.0 && p.x <= r.frame_width - 1 && p.y >= 0.0 && p.y <= r.frame_height - 1)) {
      std::ostringstream os;
      os << who << "keypoint (" << p.x << ", " << p.y << ") outside the " << r.frame_width << "x"
         << r.frame_height << " frame";
      throw ValidationError(os.str());
    }
  }
  if (geom::has_proper_crossing(r.keypoints))
    throw ValidationError(who + "keypoints form a self-intersecting quadrilateral");
  r.degenerate = std::abs(geom::signed_area(r.keypoints)) < kDegenerateArea;
  if (!r.degenerate && !geom::is_simple(r.keypoints))
    throw ValidationError(who + "keypoints form a self-intersecting quadrilateral");
}

std::string record_to_line(const AnnotationRecord& r) {
  ordered_json j;
  j["clip_id"] = r.clip_id;
  j["case_id"] = r.case_id;
  j["split"] = to_string(r.split);
  j["surgery"] = r.surgery;
  j["tool"] = r.tool;
  j["action"] = r.action;
  j["frame_count"] = r.frame_count;
  j["frame_height"] = r.frame_height;
  j["frame_width"] = r.frame_width;
  j["pre_action_start"] = r.pre_action_start;
  j["pre_action_end"] = r.pre_action_end;
  auto kp = ordered_json::array();
  for (const Point2& p : r.keypoints) {
    kp.push_back(p.x);
    kp.push_back(p.y);
  }
  j["keypoints"] = kp;
  j["frames_path"] = r.frames_path;
  return j.dump();
}

AnnotationRecord record_from_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("record is not an object");
  AnnotationRecord r;
  r.clip_id = required<std::string>(j, "clip_id");
  r.case_id = required<std::string>(j, "case_id");
  r.split = parse_split(required<std::string>(j, "split"));
  r.surgery = required<std::string>(j, "surgery");
  r.tool = required<std::string>(j, "tool");
  r.action = required<std::string>(j, "action");
  r.frame_count = required<int>(j, "frame_count");
  r.frame_height = required<int>(j, "frame_height");
  r.frame_width = required<int>(j, "frame_width");
  r.pre_action_start = required<int>(j, "pre_action_start");
  r.pre_action_end = required<int>(j, "pre_action_end");
  const auto kp = required<std::vector<double>>(j, "keypoints");
  if (kp.size() != 8) throw ValidationError("keypoints must hold 8 numbers");
  for (int i = 0; i < 4; ++i) r.keypoints[i] = {kp[2 * i], kp[2 * i + 1]};
  r.frames_path = required<std::string>(j, "frames_path");
  return r;
}

Manifest parse_manifest(std::istream& in) {
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotationRecord r;
    try {
      r = record_from_line(line);
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    validate_record(r);
    if (!seen.insert(r.clip_id).second)
      throw ValidationError("duplicate clip_id '" + r.clip_id + "' at line " + std::to_string(line_no));
    m.vocabulary.insert(r.triplet());
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest load_manifest(const std::string& path_or_dir) {
  std::filesystem::path path(path_or_dir);
  if (std::filesystem::is_directory(path)) path /= "manifest.jsonl";
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path)) throw IoError("cannot open manifest " + path.string());
  Manifest m = parse_manifest(in);
  m.base_dir = path.parent_path().string();
  return m;
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  for (const auto& r : manifest.records) out << record_to_line(r) << '\n';
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  write_manifest(out, manifest);
}

SplitReport validate_splits(const Manifest& manifest) {
  SplitReport rep;
  for (const auto& r : manifest.records) {
    rep.case_splits[r.case_id].insert(r.split);
    ++rep.clip_counts[r.split];
  }
  for (const auto& [case_id, splits] : rep.case_splits) {
    for (Split s : splits) ++rep.case_counts[s];
    if (splits.size() > 1) rep.leaking_cases.push_back(case_id);
  }
  rep.leakage = !rep.leaking_cases.empty();
  return rep;
}

std::vector<PromptTriplet> parse_vocabulary(std::istream& in) {
  std::vector<PromptTriplet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw ValidationError("vocabulary line " + std::to_string(line_no) +
                            ": expected surgery<TAB>tool<TAB>action");
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

std::vector<PromptTriplet> load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path);
  return parse_vocabulary(in);
}

void save_vocabulary(const std::vector<PromptTriplet>& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + path);
  for (const auto& t : vocab) out << t.surgery << '\t' << t.tool << '\t' << t.action << '\n';
}

}  // namespace afht
