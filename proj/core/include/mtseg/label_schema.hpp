#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "mtseg/volume.hpp"

namespace mtseg {

inline constexpr Label kBackground = 0;
inline constexpr Label kLesion = 1;

/// Ordered id -> name table. Background (0) and lesion (1) are always present;
/// ids and names are unique.
class LabelSchema {
 public:
  /// Background and lesion only.
  explicit LabelSchema(std::string id = "default");

  /// 0 background, 1 lesion, then the organs 2..11 and bone 12.
  static LabelSchema default_schema();

  void add(Label id, std::string name);

  const std::string& id() const { return id_; }
  bool contains(Label label) const { return names_.contains(label); }
  std::optional<Label> find(std::string_view name) const;
  const std::string& name(Label label) const;
  const std::map<Label, std::string>& entries() const { return names_; }

  /// One "<id> <name>" line per label, ascending id; names may contain spaces.
  std::string serialize() const;
  static LabelSchema parse(std::string_view text, std::string id = "default");
  void save(const std::filesystem::path& path) const;
  static LabelSchema load(const std::filesystem::path& path);

 private:
  std::string id_;
  std::map<Label, std::string> names_;
};

}  // namespace mtseg
