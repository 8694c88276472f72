#pragma once

#include <optional>
#include <utility>

#include "mtseg/tracer.hpp"
#include "mtseg/volume.hpp"

namespace mtseg {

enum class Interpolation { Trilinear, Nearest };
enum class Normalization { ZScore, ZScoreMasked, None };

struct ClipPercentiles {
  double lo = 0.5;
  double hi = 99.5;
};

struct PreprocessParams {
  Vec3 target_spacing{2.0, 2.0, 2.0};
  Interpolation image_interpolation = Interpolation::Trilinear;
  Normalization normalization = Normalization::ZScore;
  /// Applied to the CT channel only, before normalization.
  std::optional<ClipPercentiles> ct_clip;
  TracerClass tracer = TracerClass::FDG;
};

/// Throws InvalidSpacing / InvalidArgument when the invariants do not hold.
void validate(const PreprocessParams& p);

struct NormalizationStats {
  double mean = 0.0;
  double std_dev = 0.0;
  std::size_t count = 0;
  bool degenerate = false;
};

inline constexpr double kDegenerateStd = 1e-8;

/// Output grid for resampling `g` to `target_spacing`: dims are
/// round(n * s / t) (at least 1) and the outer voxel faces coincide with the
/// input's at the low corner.
Geometry resampled_geometry(const Geometry& g, const Vec3& target_spacing);

/// Samples `vol` at the voxel centers of `reference` (both canonical), with
/// clamp-to-edge outside the source grid.
ImageVolume resample_to(const ImageVolume& vol, const Geometry& reference, Interpolation interp);

/// Errors: InvalidSpacing, NotCanonical.
ImageVolume resample(const ImageVolume& vol, const Vec3& target_spacing, Interpolation interp);

/// Nearest-neighbour by world coordinate onto `reference`.
LabelVolume resample_labels(const LabelVolume& lv, const Geometry& reference);

/// (v - mean) / std with population statistics over the voxels where `mask`
/// is nonzero (all voxels without a mask). std below 1e-8 gives all zeros and
/// the degenerate flag.
std::pair<ImageVolume, NormalizationStats> zscore_normalize(const ImageVolume& vol,
                                                            const LabelVolume* mask = nullptr);

/// Clamps every voxel into the [lo, hi] percentile range of the volume.
ImageVolume clip_percentiles(const ImageVolume& vol, const ClipPercentiles& clip);

struct PreprocessedStudy {
  ImageVolume pet;
  ImageVolume ct;
  NormalizationStats pet_stats;
  NormalizationStats ct_stats;
};

/// Resamples PET to the target spacing, resamples CT onto the PET grid, then
/// normalizes each channel independently.
PreprocessedStudy preprocess_study(const ImageVolume& pet, const ImageVolume& ct, const PreprocessParams& params);

}  // namespace mtseg
