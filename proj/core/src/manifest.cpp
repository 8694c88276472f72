#include "mtseg/manifest.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "mtseg/error.hpp"

namespace mtseg {

namespace {

[[noreturn]] void unreadable(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ManifestUnreadable, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<StudyEntry> parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  static const std::set<std::string> known{"id", "pet", "ct", "gt", "organs", "bone", "tracer"};
  std::vector<StudyEntry> studies;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      unreadable(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) unreadable(line_no, "record is not an object");
    for (const auto& [key, value] : rec.items())
      if (!known.contains(key)) unreadable(line_no, "unknown field '" + key + "'");

    auto text_field = [&](const char* key, bool required) -> std::optional<std::string> {
      auto it = rec.find(key);
      if (it == rec.end()) {
        if (required) unreadable(line_no, std::string("missing field '") + key + "'");
        return std::nullopt;
      }
      if (!it->is_string() || it->get<std::string>().empty())
        unreadable(line_no, std::string("field '") + key + "' must be a non-empty string");
      return it->get<std::string>();
    };
    auto path_field = [&](const char* key, bool required) -> std::optional<std::filesystem::path> {
      auto v = text_field(key, required);
      if (!v) return std::nullopt;
      std::filesystem::path p(*v);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      return p.lexically_normal();
    };

    StudyEntry e;
    e.id = *text_field("id", true);
    if (e.id.find_first_of("/\\") != std::string::npos) unreadable(line_no, "id must not contain path separators");
    if (!ids.insert(e.id).second) unreadable(line_no, "duplicate id '" + e.id + "'");
    e.pet = *path_field("pet", true);
    e.ct = *path_field("ct", true);
    e.gt = path_field("gt", false);
    e.organs = path_field("organs", false);
    e.bone = path_field("bone", false);
    if (auto t = text_field("tracer", false)) {
      try {
        e.tracer = parse_tracer(*t);
      } catch (const Error&) {
        unreadable(line_no, "tracer must be FDG or PSMA");
      }
    }
    studies.push_back(std::move(e));
  }
  if (studies.empty()) throw Error(ErrorCode::ManifestUnreadable, "manifest lists no studies");
  return studies;
}

std::vector<StudyEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ManifestUnreadable, "cannot read manifest " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_manifest(text.str(), std::filesystem::absolute(path).parent_path());
}

std::string to_jsonl(const std::vector<StudyEntry>& studies) {
  std::string out;
  for (const auto& s : studies) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["pet"] = s.pet.string();
    rec["ct"] = s.ct.string();
    if (s.gt) rec["gt"] = s.gt->string();
    if (s.organs) rec["organs"] = s.organs->string();
    if (s.bone) rec["bone"] = s.bone->string();
    if (s.tracer) rec["tracer"] = std::string(to_string(*s.tracer));
    out += rec.dump() + "\n";
  }
  return out;
}

}  // namespace mtseg
