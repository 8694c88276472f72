#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mtseg {

using Dims = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;
using Label = std::uint16_t;

enum class Modality { PET, CT };
enum class IntensityUnit { SUV, HU, Normalized };

std::string_view to_string(Modality m);
std::string_view to_string(IntensityUnit u);

/// Direction of one voxel axis in RAS+ world space: which world axis it runs
/// along (0 = x/R, 1 = y/A, 2 = z/S) and whether the index increases towards
/// R/A/S (+1) or L/P/I (-1).
struct AxisDirection {
  int world_axis = 0;
  int sign = 1;

  friend bool operator==(const AxisDirection&, const AxisDirection&) = default;
};

/// One of the 48 signed axis permutations, e.g. "RAS", "LPS", "ASL".
class Orientation {
 public:
  Orientation();  // RAS
  explicit Orientation(std::array<AxisDirection, 3> axes);

  static Orientation from_code(std::string_view code);
  static Orientation canonical() { return Orientation(); }

  std::string code() const;
  bool is_canonical() const;
  const AxisDirection& operator[](std::size_t axis) const { return axes_[axis]; }

  friend bool operator==(const Orientation&, const Orientation&) = default;

 private:
  std::array<AxisDirection, 3> axes_;
};

/// Voxel grid placement. Voxel (i,j,k) has its center at
/// origin + sum_a idx_a * spacing_a * sign_a * e_{world_axis_a}.
struct Geometry {
  Dims dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  Orientation orientation;

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  /// x-fastest linear index.
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }
  Vec3 world(double i, double j, double k) const;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Throws InvalidSpacing for non-positive or non-finite spacing and
/// InvalidArgument for zero dims.
void validate_geometry(const Geometry& g);

/// Throws GeometryMismatch unless a == b.
void require_same_geometry(const Geometry& a, const Geometry& b, std::string_view what);

struct ImageVolume {
  Geometry geometry;
  std::vector<double> voxels;
  Modality modality = Modality::PET;
  IntensityUnit unit = IntensityUnit::SUV;

  ImageVolume() = default;
  ImageVolume(Geometry g, Modality m, IntensityUnit u, double fill = 0.0);

  double& at(std::size_t i, std::size_t j, std::size_t k) { return voxels[geometry.index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return voxels[geometry.index(i, j, k)]; }
};

struct LabelVolume {
  Geometry geometry;
  std::vector<Label> labels;
  std::string schema_id = "default";

  LabelVolume() = default;
  explicit LabelVolume(Geometry g, Label fill = 0, std::string schema = "default");

  Label& at(std::size_t i, std::size_t j, std::size_t k) { return labels[geometry.index(i, j, k)]; }
  Label at(std::size_t i, std::size_t j, std::size_t k) const { return labels[geometry.index(i, j, k)]; }
};

/// Permutes/flips the voxel array so the orientation becomes RAS while every
/// voxel center keeps its world coordinate.
ImageVolume reorient_to_canonical(const ImageVolume& vol);
LabelVolume reorient_to_canonical(const LabelVolume& vol);
Geometry canonical_geometry(const Geometry& g);

/// Milliliters occupied by one voxel.
double voxel_volume_ml(const Geometry& g);
inline double voxel_volume_ml(const ImageVolume& v) { return voxel_volume_ml(v.geometry); }
inline double voxel_volume_ml(const LabelVolume& v) { return voxel_volume_ml(v.geometry); }

}  // namespace mtseg
