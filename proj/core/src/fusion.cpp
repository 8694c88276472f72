#include "mtseg/fusion.hpp"

#include <algorithm>

#include "mtseg/error.hpp"

namespace mtseg {

const std::map<Label, Label>& FusionPolicy::remap(LabelSource s) const {
  switch (s) {
    case LabelSource::Lesion: return lesion_remap;
    case LabelSource::Organ: return organ_remap;
    case LabelSource::Bone: return bone_remap;
  }
  return organ_remap;
}

void validate(const FusionPolicy& policy) {
  std::array<int, 3> seen{};
  for (auto s : policy.precedence) ++seen[static_cast<std::size_t>(s)];
  if (policy.precedence.size() != 3 || std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
    throw Error(ErrorCode::InvalidArgument, "precedence must list lesion, organ and bone exactly once");
  for (auto s : policy.precedence) {
    for (const auto& [from, to] : policy.remap(s)) {
      if (!policy.schema.contains(to))
        throw Error(ErrorCode::UnmappedLabel, "remap target " + std::to_string(to) + " not in schema");
    }
  }
}

namespace {

// Dense lookup from source label to fused label; 0 marks "unmapped".
std::vector<Label> build_lut(const LabelVolume& src, const std::map<Label, Label>& remap, const LabelSchema& schema,
                             const char* source_name) {
  Label max = 0;
  for (Label l : src.labels) max = std::max(max, l);
  std::vector<Label> lut(static_cast<std::size_t>(max) + 1, 0);
  std::vector<bool> used(lut.size(), false);
  for (Label l : src.labels) used[l] = true;
  for (std::size_t l = 1; l < lut.size(); ++l) {
    if (!used[l]) continue;
    const auto label = static_cast<Label>(l);
    Label target = label;
    if (!remap.empty()) {
      const auto it = remap.find(label);
      if (it == remap.end())
        throw Error(ErrorCode::UnmappedLabel, std::string(source_name) + " label " + std::to_string(l) + " has no mapping");
      target = it->second;
    }
    if (target == kBackground || !schema.contains(target))
      throw Error(ErrorCode::UnmappedLabel,
                  std::string(source_name) + " label " + std::to_string(l) + " maps outside the schema");
    lut[l] = target;
  }
  return lut;
}

}  // namespace

LabelVolume fuse_labels(const LabelVolume& bone, const LabelVolume& organs, const LabelVolume& lesions,
                        const FusionPolicy& policy) {
  validate(policy);
  require_same_geometry(lesions.geometry, organs.geometry, "organ labels do not share the lesion geometry");
  require_same_geometry(lesions.geometry, bone.geometry, "bone labels do not share the lesion geometry");

  struct Layer {
    const LabelVolume* volume;
    std::vector<Label> lut;
  };
  std::vector<Layer> layers;
  for (auto s : policy.precedence) {
    switch (s) {
      case LabelSource::Lesion: layers.push_back({&lesions, build_lut(lesions, policy.lesion_remap, policy.schema, "lesion")}); break;
      case LabelSource::Organ: layers.push_back({&organs, build_lut(organs, policy.organ_remap, policy.schema, "organ")}); break;
      case LabelSource::Bone: layers.push_back({&bone, build_lut(bone, policy.bone_remap, policy.schema, "bone")}); break;
    }
  }

  LabelVolume out(lesions.geometry, kBackground, policy.schema.id());
  for (std::size_t n = 0; n < out.labels.size(); ++n) {
    for (const auto& layer : layers) {
      const Label l = layer.volume->labels[n];
      if (l != kBackground) {
        out.labels[n] = layer.lut[l];
        break;
      }
    }
  }
  return out;
}

const LabelStats* FusionReport::find(Label label) const {
  for (const auto& s : labels) {
    if (s.label == label) return &s;
  }
  return nullptr;
}

FusionReport validate_fused(const LabelVolume& lv, const LabelSchema& schema) {
  std::map<Label, std::size_t> counts;
  for (Label l : lv.labels) ++counts[l];
  const double ml = voxel_volume_ml(lv.geometry);

  FusionReport report;
  for (const auto& [id, name] : schema.entries()) {
    const auto it = counts.find(id);
    const std::size_t c = it == counts.end() ? 0 : it->second;
    report.labels.push_back({id, name, c, static_cast<double>(c) * ml});
  }
  for (const auto& [id, c] : counts) {
    if (schema.contains(id)) continue;
    report.unknown_labels.push_back(id);
    report.labels.push_back({id, "unknown", c, static_cast<double>(c) * ml});
  }
  return report;
}

LabelVolume extract_binary_mask(const LabelVolume& lv, Label label_id, const LabelSchema& schema) {
  if (!schema.contains(label_id))
    throw Error(ErrorCode::UnknownLabel, "label " + std::to_string(label_id) + " not in schema " + schema.id());
  LabelVolume out(lv.geometry, 0, "binary");
  for (std::size_t n = 0; n < lv.labels.size(); ++n) out.labels[n] = lv.labels[n] == label_id ? 1 : 0;
  return out;
}

}  // namespace mtseg
