#include "mtseg/label_schema.hpp"

#include <fstream>
#include <sstream>

#include "mtseg/error.hpp"

namespace mtseg {

LabelSchema::LabelSchema(std::string id) : id_(std::move(id)) {
  names_.emplace(kBackground, "background");
  names_.emplace(kLesion, "lesion");
}

LabelSchema LabelSchema::default_schema() {
  LabelSchema s("default");
  const char* organs[] = {"liver", "kidneys", "urinary bladder", "spleen", "lung",
                          "brain", "heart",   "femur",           "stomach", "prostate"};
  Label id = 2;
  for (const char* organ : organs) s.add(id++, organ);
  s.add(12, "bone");
  return s;
}

void LabelSchema::add(Label id, std::string name) {
  if (name.empty()) throw Error(ErrorCode::InvalidArgument, "label name must not be empty");
  if (names_.contains(id)) {
    if ((id == kBackground || id == kLesion) && names_.at(id) == name) return;
    throw Error(ErrorCode::InvalidArgument, "duplicate label id " + std::to_string(id));
  }
  if (find(name)) throw Error(ErrorCode::InvalidArgument, "duplicate label name '" + name + "'");
  names_.emplace(id, std::move(name));
}

std::optional<Label> LabelSchema::find(std::string_view name) const {
  for (const auto& [id, n] : names_) {
    if (n == name) return id;
  }
  return std::nullopt;
}

const std::string& LabelSchema::name(Label label) const {
  const auto it = names_.find(label);
  if (it == names_.end()) throw Error(ErrorCode::UnknownLabel, "label " + std::to_string(label) + " not in schema");
  return it->second;
}

std::string LabelSchema::serialize() const {
  std::ostringstream out;
  for (const auto& [id, n] : names_) out << id << ' ' << n << '\n';
  return out.str();
}

LabelSchema LabelSchema::parse(std::string_view text, std::string id) {
  LabelSchema s(std::move(id));
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    long value = -1;
    fields >> value;
    std::string name;
    std::getline(fields >> std::ws, name);
    if (!fields.eof() && fields.fail()) throw Error(ErrorCode::MalformedHeader, "bad schema line: " + line);
    if (value < 0 || value > 65535 || name.empty()) throw Error(ErrorCode::MalformedHeader, "bad schema line: " + line);
    s.add(static_cast<Label>(value), name);
  }
  return s;
}

void LabelSchema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << serialize();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

LabelSchema LabelSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.stem().string());
}

}  // namespace mtseg
