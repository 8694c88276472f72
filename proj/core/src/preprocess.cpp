#include "mtseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtseg/error.hpp"
#include "mtseg/numeric.hpp"

namespace mtseg {

void validate(const PreprocessParams& p) {
  for (double t : p.target_spacing) {
    if (!(std::isfinite(t) && t > 0.0)) throw Error(ErrorCode::InvalidSpacing, "target spacing must be positive");
  }
  if (p.ct_clip && !(p.ct_clip->lo >= 0.0 && p.ct_clip->lo < p.ct_clip->hi && p.ct_clip->hi <= 100.0))
    throw Error(ErrorCode::InvalidArgument, "clip percentiles need 0 <= lo < hi <= 100");
}

namespace {

void require_canonical(const Geometry& g, const char* what) {
  if (!g.orientation.is_canonical()) throw Error(ErrorCode::NotCanonical, what);
}

// Continuous source index of output voxel o along one axis: offset + o * ratio.
struct AxisMap {
  double offset;
  double ratio;
};

std::array<AxisMap, 3> axis_maps(const Geometry& src, const Geometry& dst) {
  std::array<AxisMap, 3> maps{};
  for (std::size_t a = 0; a < 3; ++a) {
    maps[a].offset = (dst.origin[a] - src.origin[a]) / src.spacing[a];
    maps[a].ratio = dst.spacing[a] / src.spacing[a];
  }
  return maps;
}

struct LinearTap {
  std::size_t lo, hi;
  double frac;
};

std::vector<LinearTap> linear_taps(const AxisMap& m, std::size_t n_out, std::size_t n_in) {
  std::vector<LinearTap> taps(n_out);
  const double max_pos = static_cast<double>(n_in - 1);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double pos = std::clamp(m.offset + static_cast<double>(o) * m.ratio, 0.0, max_pos);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, n_in - 1);
    taps[o] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return taps;
}

std::vector<std::size_t> nearest_taps(const AxisMap& m, std::size_t n_out, std::size_t n_in) {
  std::vector<std::size_t> taps(n_out);
  const double max_pos = static_cast<double>(n_in - 1);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double pos = std::clamp(m.offset + static_cast<double>(o) * m.ratio, 0.0, max_pos);
    taps[o] = static_cast<std::size_t>(std::floor(pos + 0.5));
  }
  return taps;
}

template <typename T>
std::vector<T> sample_nearest(const Geometry& src, const std::vector<T>& data, const Geometry& dst) {
  const auto maps = axis_maps(src, dst);
  std::array<std::vector<std::size_t>, 3> taps;
  for (std::size_t a = 0; a < 3; ++a) taps[a] = nearest_taps(maps[a], dst.dims[a], src.dims[a]);
  std::vector<T> out(dst.voxel_count());
  std::size_t n = 0;
  for (std::size_t z = 0; z < dst.dims[2]; ++z)
    for (std::size_t y = 0; y < dst.dims[1]; ++y)
      for (std::size_t x = 0; x < dst.dims[0]; ++x) out[n++] = data[src.index(taps[0][x], taps[1][y], taps[2][z])];
  return out;
}

}  // namespace

Geometry resampled_geometry(const Geometry& g, const Vec3& target_spacing) {
  for (double t : target_spacing) {
    if (!(std::isfinite(t) && t > 0.0)) throw Error(ErrorCode::InvalidSpacing, "target spacing must be positive");
  }
  Geometry out = g;
  for (std::size_t a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(g.dims[a]) * g.spacing[a];
    out.dims[a] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(extent / target_spacing[a])));
    out.spacing[a] = target_spacing[a];
    if (target_spacing[a] != g.spacing[a]) {
      out.origin[a] = g.origin[a] - 0.5 * g.spacing[a] + 0.5 * target_spacing[a];
    }
  }
  return out;
}

ImageVolume resample_to(const ImageVolume& vol, const Geometry& reference, Interpolation interp) {
  validate_geometry(vol.geometry);
  validate_geometry(reference);
  require_canonical(vol.geometry, "resampling needs an RAS source volume");
  require_canonical(reference, "resampling needs an RAS reference grid");
  if (vol.geometry == reference) return vol;

  ImageVolume out(reference, vol.modality, vol.unit);
  if (interp == Interpolation::Nearest) {
    out.voxels = sample_nearest(vol.geometry, vol.voxels, reference);
    return out;
  }

  const auto& src = vol.geometry;
  const auto maps = axis_maps(src, reference);
  const auto tx = linear_taps(maps[0], reference.dims[0], src.dims[0]);
  const auto ty = linear_taps(maps[1], reference.dims[1], src.dims[1]);
  const auto tz = linear_taps(maps[2], reference.dims[2], src.dims[2]);
  const double* v = vol.voxels.data();
  std::size_t n = 0;
  for (std::size_t z = 0; z < reference.dims[2]; ++z) {
    const auto& cz = tz[z];
    for (std::size_t y = 0; y < reference.dims[1]; ++y) {
      const auto& cy = ty[y];
      const double* r00 = v + src.index(0, cy.lo, cz.lo);
      const double* r10 = v + src.index(0, cy.hi, cz.lo);
      const double* r01 = v + src.index(0, cy.lo, cz.hi);
      const double* r11 = v + src.index(0, cy.hi, cz.hi);
      for (std::size_t x = 0; x < reference.dims[0]; ++x) {
        const auto& cx = tx[x];
        const auto lerp = [&](const double* row) { return row[cx.lo] + cx.frac * (row[cx.hi] - row[cx.lo]); };
        const double c0 = lerp(r00) + cy.frac * (lerp(r10) - lerp(r00));
        const double c1 = lerp(r01) + cy.frac * (lerp(r11) - lerp(r01));
        out.voxels[n++] = c0 + cz.frac * (c1 - c0);
      }
    }
  }
  return out;
}

ImageVolume resample(const ImageVolume& vol, const Vec3& target_spacing, Interpolation interp) {
  require_canonical(vol.geometry, "resample needs an RAS volume");
  return resample_to(vol, resampled_geometry(vol.geometry, target_spacing), interp);
}

LabelVolume resample_labels(const LabelVolume& lv, const Geometry& reference) {
  validate_geometry(lv.geometry);
  validate_geometry(reference);
  require_canonical(lv.geometry, "label resampling needs an RAS source volume");
  require_canonical(reference, "label resampling needs an RAS reference grid");
  if (lv.geometry == reference) return lv;
  LabelVolume out(reference, 0, lv.schema_id);
  out.labels = sample_nearest(lv.geometry, lv.labels, reference);
  return out;
}

std::pair<ImageVolume, NormalizationStats> zscore_normalize(const ImageVolume& vol, const LabelVolume* mask) {
  std::vector<double> sample;
  if (mask != nullptr) {
    require_same_geometry(vol.geometry, mask->geometry, "z-score mask geometry differs from the image");
    sample.reserve(vol.voxels.size());
    for (std::size_t n = 0; n < vol.voxels.size(); ++n) {
      if (mask->labels[n] != 0) sample.push_back(vol.voxels[n]);
    }
  } else {
    sample = vol.voxels;
  }

  NormalizationStats stats;
  stats.count = sample.size();
  if (!sample.empty()) {
    const double count = static_cast<double>(sample.size());
    stats.mean = pairwise_sum(sample) / count;
    for (double& s : sample) s = (s - stats.mean) * (s - stats.mean);
    stats.std_dev = std::sqrt(pairwise_sum(sample) / count);
  }
  stats.degenerate = sample.empty() || stats.std_dev < kDegenerateStd;

  ImageVolume out = vol;
  out.unit = IntensityUnit::Normalized;
  if (stats.degenerate) {
    std::fill(out.voxels.begin(), out.voxels.end(), 0.0);
  } else {
    for (double& v : out.voxels) v = (v - stats.mean) / stats.std_dev;
  }
  return {std::move(out), stats};
}

ImageVolume clip_percentiles(const ImageVolume& vol, const ClipPercentiles& clip) {
  std::vector<double> sorted = vol.voxels;
  std::sort(sorted.begin(), sorted.end());
  const double lo = percentile_sorted(sorted, clip.lo);
  const double hi = percentile_sorted(sorted, clip.hi);
  ImageVolume out = vol;
  for (double& v : out.voxels) v = std::clamp(v, lo, hi);
  return out;
}

namespace {

LabelVolume nonzero_mask(const ImageVolume& vol) {
  LabelVolume m(vol.geometry);
  for (std::size_t n = 0; n < vol.voxels.size(); ++n) m.labels[n] = vol.voxels[n] != 0.0 ? 1 : 0;
  return m;
}

std::pair<ImageVolume, NormalizationStats> normalize_channel(const ImageVolume& vol, Normalization mode) {
  switch (mode) {
    case Normalization::None: return {vol, NormalizationStats{}};
    case Normalization::ZScore: return zscore_normalize(vol);
    case Normalization::ZScoreMasked: {
      const auto mask = nonzero_mask(vol);
      return zscore_normalize(vol, &mask);
    }
  }
  return {vol, NormalizationStats{}};
}

}  // namespace

PreprocessedStudy preprocess_study(const ImageVolume& pet, const ImageVolume& ct, const PreprocessParams& params) {
  validate(params);
  require_canonical(pet.geometry, "PET must be reoriented before preprocessing");
  require_canonical(ct.geometry, "CT must be reoriented before preprocessing");

  const Geometry grid = resampled_geometry(pet.geometry, params.target_spacing);
  ImageVolume pet_r = resample_to(pet, grid, params.image_interpolation);
  ImageVolume ct_r = resample_to(ct, grid, params.image_interpolation);
  if (params.ct_clip) ct_r = clip_percentiles(ct_r, *params.ct_clip);

  PreprocessedStudy out;
  std::tie(out.pet, out.pet_stats) = normalize_channel(pet_r, params.normalization);
  std::tie(out.ct, out.ct_stats) = normalize_channel(ct_r, params.normalization);
  return out;
}

}  // namespace mtseg
