#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtseg/tracer.hpp"

namespace mtseg {

struct StudyEntry {
  std::string id;
  std::filesystem::path pet;
  std::filesystem::path ct;
  std::optional<std::filesystem::path> gt;
  std::optional<std::filesystem::path> organs;
  std::optional<std::filesystem::path> bone;
  std::optional<TracerClass> tracer;  // known tracer, for classifier scoring
};

/// One JSON object per line:
///   {"id": "...", "pet": "...", "ct": "...", "gt": "...", "organs": "...",
///    "bone": "...", "tracer": "FDG"|"PSMA"}
/// gt, organs, bone and tracer are optional. Blank lines are skipped, relative
/// paths resolve against `base_dir`. File existence is not checked here.
///
/// Errors: ManifestUnreadable (bad JSON, missing or mistyped fields, unknown
/// keys, duplicate ids, no studies).
std::vector<StudyEntry> parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
std::vector<StudyEntry> load_manifest(const std::filesystem::path& path);

/// Paths are written as given (no relativisation).
std::string to_jsonl(const std::vector<StudyEntry>& studies);

}  // namespace mtseg
