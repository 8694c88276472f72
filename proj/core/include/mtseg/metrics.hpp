#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtseg/volume.hpp"

namespace mtseg {

enum class Connectivity { Six = 6, Eighteen = 18, TwentySix = 26 };
enum class FalseVolumeMode { Component, Voxelwise };

std::string_view to_string(FalseVolumeMode m);
FalseVolumeMode parse_false_volume_mode(std::string_view text);
Connectivity parse_connectivity(int value);

struct ComponentSet {
  Connectivity connectivity = Connectivity::Eighteen;
  /// Components ordered by their smallest linear index; voxel lists ascending.
  std::vector<std::vector<std::size_t>> components;

  std::size_t count() const { return components.size(); }
};

/// Neighbour offsets (dx, dy, dz) for a connectivity, excluding the centre.
std::vector<std::array<int, 3>> neighbour_offsets(Connectivity c);

/// Nonzero labels count as foreground.
ComponentSet connected_components(const LabelVolume& mask, Connectivity connectivity = Connectivity::Eighteen);

/// 2|P and G| / (|P| + |G|); 1.0 when both are empty.
double dice_score(const LabelVolume& pred, const LabelVolume& gt);

/// Component mode: volume of predicted components with no voxel in gt.
/// Voxelwise mode: volume of pred minus gt. Milliliters.
double fp_volume(const LabelVolume& pred, const LabelVolume& gt, FalseVolumeMode mode = FalseVolumeMode::Component,
                 Connectivity connectivity = Connectivity::Eighteen);
/// fp_volume with the roles of pred and gt exchanged.
double fn_volume(const LabelVolume& pred, const LabelVolume& gt, FalseVolumeMode mode = FalseVolumeMode::Component,
                 Connectivity connectivity = Connectivity::Eighteen);

struct EvalReport {
  std::string study_id;
  double dice = 1.0;
  double fpvol_ml = 0.0;
  double fnvol_ml = 0.0;
  FalseVolumeMode mode = FalseVolumeMode::Component;
};

struct EvalSummary {
  std::size_t studies = 0;
  double mean_dice = 0.0;
  double mean_fpvol_ml = 0.0;
  double mean_fnvol_ml = 0.0;
};

EvalReport evaluate_study(const LabelVolume& pred, const LabelVolume& gt, FalseVolumeMode mode = FalseVolumeMode::Component,
                          std::string study_id = {}, Connectivity connectivity = Connectivity::Eighteen);

/// Arithmetic means in report order. Throws EmptyReportList.
EvalSummary aggregate(std::span<const EvalReport> reports);

/// Reference values reported for the full-scale models on the challenge test
/// data. Not reproducible here; kept for side-by-side reporting only.
struct ReferenceResult {
  std::string_view tracer;
  double dice;
  double fpvol_ml;
  double fnvol_ml;
};
inline constexpr ReferenceResult kReferenceResults[] = {
    {"FDG", 0.8408, 1.7979, 2.3625},
    {"PSMA", 0.7385, 9.3574, 5.0745},
};
inline constexpr double kReferenceClassifierAccuracy = 0.9985;

}  // namespace mtseg
