#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "mtseg/label_schema.hpp"
#include "mtseg/volume.hpp"

namespace mtseg {

enum class LabelSource { Lesion, Organ, Bone };

/// Which source wins where several are non-background, and how each source's
/// labels map into the fused schema. An empty remap table is the identity.
struct FusionPolicy {
  std::vector<LabelSource> precedence{LabelSource::Lesion, LabelSource::Organ, LabelSource::Bone};
  LabelSchema schema = LabelSchema::default_schema();
  std::map<Label, Label> lesion_remap{{1, kLesion}};
  std::map<Label, Label> organ_remap;
  std::map<Label, Label> bone_remap{{1, 12}, {12, 12}};

  static FusionPolicy defaults() { return {}; }
  const std::map<Label, Label>& remap(LabelSource s) const;
};

/// Throws InvalidArgument unless precedence lists each source exactly once and
/// UnmappedLabel when a remap target is outside the schema.
void validate(const FusionPolicy& policy);

/// Per voxel, the first source in precedence order with a non-background label
/// wins, after remapping.
///
/// Errors: GeometryMismatch, UnmappedLabel.
LabelVolume fuse_labels(const LabelVolume& bone, const LabelVolume& organs, const LabelVolume& lesions,
                        const FusionPolicy& policy);

struct LabelStats {
  Label label = 0;
  std::string name;
  std::size_t voxels = 0;
  double volume_ml = 0.0;
};

struct FusionReport {
  /// One entry per schema label, then any out-of-schema labels found.
  std::vector<LabelStats> labels;
  std::vector<Label> unknown_labels;

  const LabelStats* find(Label label) const;
};

FusionReport validate_fused(const LabelVolume& lv, const LabelSchema& schema);

/// Binary mask (labels {0,1}) where lv == label_id. Throws UnknownLabel when
/// label_id is not part of the schema.
LabelVolume extract_binary_mask(const LabelVolume& lv, Label label_id, const LabelSchema& schema);

}  // namespace mtseg
