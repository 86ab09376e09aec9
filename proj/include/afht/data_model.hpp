#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "afht/types.hpp"

namespace afht {

enum class Split { kTrain, kVal, kTest };

const char* to_string(Split s);
Split parse_split(const std::string& s);  // throws ValidationError

// One clip's metadata. `degenerate` is derived at load (zero-area quad) and is
// not part of the persisted record.
struct AnnotationRecord {
  std::string clip_id;
  std::string case_id;
  Split split = Split::kTrain;
  std::string surgery;
  std::string tool;
  std::string action;
  int frame_count = 0;
  int frame_height = 0;
  int frame_width = 0;
  int pre_action_start = 0;
  int pre_action_end = 0;
  Quad keypoints{};
  std::string frames_path;
  bool degenerate = false;

  PromptTriplet triplet() const { return {surgery, tool, action}; }
  bool same_fields(const AnnotationRecord& other) const;
};

struct Manifest {
  std::vector<AnnotationRecord> records;
  std::set<PromptTriplet> vocabulary;
  // Directory the manifest was loaded from; frames_path entries are relative to it.
  std::string base_dir;

  const AnnotationRecord* find(const std::string& clip_id) const;
  std::vector<const AnnotationRecord*> in_split(Split s) const;
};

// Checks every record invariant and sets `degenerate`. Throws ValidationError
// naming the clip.
void validate_record(AnnotationRecord& record);

std::string record_to_line(const AnnotationRecord& record);
AnnotationRecord record_from_line(const std::string& line);

Manifest parse_manifest(std::istream& in);
// Accepts a manifest file or a dataset directory holding manifest.jsonl.
Manifest load_manifest(const std::string& path_or_dir);
void write_manifest(std::ostream& out, const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::string& path);

struct SplitReport {
  std::map<std::string, std::set<Split>> case_splits;
  std::vector<std::string> leaking_cases;  // sorted
  bool leakage = false;
  std::map<Split, int> clip_counts;
  std::map<Split, int> case_counts;  // cases appearing in each split
};

SplitReport validate_splits(const Manifest& manifest);

// Vocabulary file: one `surgery<TAB>tool<TAB>action` triplet per line.
std::vector<PromptTriplet> parse_vocabulary(std::istream& in);
std::vector<PromptTriplet> load_vocabulary(const std::string& path);
void save_vocabulary(const std::vector<PromptTriplet>& vocab, const std::string& path);

}  // namespace afht
