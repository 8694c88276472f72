#include "mtseg/volume.hpp"

#include <cmath>

#include "mtseg/error.hpp"

namespace mtseg {

std::string_view to_string(Modality m) { return m == Modality::PET ? "PET" : "CT"; }

std::string_view to_string(IntensityUnit u) {
  switch (u) {
    case IntensityUnit::SUV: return "SUV";
    case IntensityUnit::HU: return "HU";
    case IntensityUnit::Normalized: return "normalized";
  }
  return "unknown";
}

Orientation::Orientation() : axes_{{{0, 1}, {1, 1}, {2, 1}}} {}

Orientation::Orientation(std::array<AxisDirection, 3> axes) : axes_(axes) {
  std::array<bool, 3> seen{};
  for (const auto& a : axes_) {
    if (a.world_axis < 0 || a.world_axis > 2 || (a.sign != 1 && a.sign != -1) || seen[a.world_axis])
      throw Error(ErrorCode::InvalidArgument, "orientation is not a signed axis permutation");
    seen[a.world_axis] = true;
  }
}

Orientation Orientation::from_code(std::string_view code) {
  if (code.size() != 3) throw Error(ErrorCode::InvalidArgument, "orientation code must have 3 letters");
  std::array<AxisDirection, 3> axes;
  for (std::size_t a = 0; a < 3; ++a) {
    switch (code[a]) {
      case 'R': axes[a] = {0, 1}; break;
      case 'L': axes[a] = {0, -1}; break;
      case 'A': axes[a] = {1, 1}; break;
      case 'P': axes[a] = {1, -1}; break;
      case 'S': axes[a] = {2, 1}; break;
      case 'I': axes[a] = {2, -1}; break;
      default: throw Error(ErrorCode::InvalidArgument, "bad orientation letter in " + std::string(code));
    }
  }
  return Orientation(axes);
}

std::string Orientation::code() const {
  static constexpr char pos[] = {'R', 'A', 'S'};
  static constexpr char neg[] = {'L', 'P', 'I'};
  std::string out;
  for (const auto& a : axes_) out.push_back(a.sign > 0 ? pos[a.world_axis] : neg[a.world_axis]);
  return out;
}

bool Orientation::is_canonical() const { return *this == Orientation(); }

Vec3 Geometry::world(double i, double j, double k) const {
  const std::array<double, 3> idx{i, j, k};
  Vec3 w = origin;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto& d = orientation[a];
    w[d.world_axis] += idx[a] * spacing[a] * d.sign;
  }
  return w;
}

void validate_geometry(const Geometry& g) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(std::isfinite(g.spacing[a]) && g.spacing[a] > 0.0))
      throw Error(ErrorCode::InvalidSpacing, "spacing must be positive and finite");
    if (!std::isfinite(g.origin[a])) throw Error(ErrorCode::InvalidArgument, "origin must be finite");
    if (g.dims[a] == 0) throw Error(ErrorCode::InvalidArgument, "dims must be positive");
  }
}

void require_same_geometry(const Geometry& a, const Geometry& b, std::string_view what) {
  if (!(a == b)) throw Error(ErrorCode::GeometryMismatch, std::string(what));
}

ImageVolume::ImageVolume(Geometry g, Modality m, IntensityUnit u, double fill)
    : geometry(g), voxels(g.voxel_count(), fill), modality(m), unit(u) {}

LabelVolume::LabelVolume(Geometry g, Label fill, std::string schema)
    : geometry(g), labels(g.voxel_count(), fill), schema_id(std::move(schema)) {}

namespace {

struct Reorientation {
  Geometry out;
  // For each output axis w: the source axis and whether it is flipped.
  std::array<std::size_t, 3> source_axis{};
  std::array<bool, 3> flipped{};
};

Reorientation plan_reorientation(const Geometry& in) {
  Reorientation r;
  r.out.orientation = Orientation::canonical();
  std::array<double, 3> corner{};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto& d = in.orientation[a];
    const auto w = static_cast<std::size_t>(d.world_axis);
    r.source_axis[w] = a;
    r.flipped[w] = d.sign < 0;
    r.out.dims[w] = in.dims[a];
    r.out.spacing[w] = in.spacing[a];
    corner[a] = d.sign < 0 ? static_cast<double>(in.dims[a] - 1) : 0.0;
  }
  r.out.origin = in.world(corner[0], corner[1], corner[2]);
  return r;
}

template <typename T>
std::vector<T> permute_voxels(const Geometry& in, const Reorientation& r, const std::vector<T>& src) {
  std::vector<T> dst(src.size());
  const auto& od = r.out.dims;
  std::array<std::size_t, 3> src_idx{};
  for (std::size_t z = 0; z < od[2]; ++z) {
    for (std::size_t y = 0; y < od[1]; ++y) {
      for (std::size_t x = 0; x < od[0]; ++x) {
        const std::array<std::size_t, 3> o{x, y, z};
        for (std::size_t w = 0; w < 3; ++w) {
          src_idx[r.source_axis[w]] = r.flipped[w] ? od[w] - 1 - o[w] : o[w];
        }
        dst[r.out.index(x, y, z)] = src[in.index(src_idx[0], src_idx[1], src_idx[2])];
      }
    }
  }
  return dst;
}

}  // namespace

Geometry canonical_geometry(const Geometry& g) { return plan_reorientation(g).out; }

ImageVolume reorient_to_canonical(const ImageVolume& vol) {
  if (vol.geometry.orientation.is_canonical()) return vol;
  const auto plan = plan_reorientation(vol.geometry);
  ImageVolume out = vol;
  out.geometry = plan.out;
  out.voxels = permute_voxels(vol.geometry, plan, vol.voxels);
  return out;
}

LabelVolume reorient_to_canonical(const LabelVolume& vol) {
  if (vol.geometry.orientation.is_canonical()) return vol;
  const auto plan = plan_reorientation(vol.geometry);
  LabelVolume out = vol;
  out.geometry = plan.out;
  out.labels = permute_voxels(vol.geometry, plan, vol.labels);
  return out;
}

double voxel_volume_ml(const Geometry& g) {
  return g.spacing[0] * g.spacing[1] * g.spacing[2] / 1000.0;
}

}  // namespace mtseg
