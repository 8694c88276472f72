#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtseg/tracer.hpp"
#include "mtseg/volume.hpp"

namespace mtseg {

struct LesionSphere {
  Vec3 center_mm{0.0, 0.0, 0.0};  // world coordinates
  double radius_mm = 8.0;
  double intensity = 15.0;        // SUV
};

/// Synthetic whole-body PET/CT study. Organs are axis-aligned ellipsoids placed
/// at fixed fractions of the volume; the tracer profile selects the organ
/// uptake template.
struct PhantomSpec {
  std::string id = "phantom";
  Dims dims{48, 40, 64};
  Vec3 spacing{2.0, 2.0, 2.0};
  Vec3 origin{0.0, 0.0, 0.0};
  TracerClass profile = TracerClass::FDG;
  std::vector<LesionSphere> lesions;
  /// Multiplicative Gaussian noise on PET (relative sigma) and additive noise
  /// on CT (20 HU per unit).
  double noise = 0.0;
  /// Global uptake multiplier applied to the organ template.
  double uptake_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Throws SpecInvalid when a sphere leaves the volume, an intensity is not
/// positive, or geometry/noise values are invalid.
void validate(const PhantomSpec& spec);

struct Phantom {
  ImageVolume pet;
  ImageVolume ct;
  LabelVolume lesion;  // binary
  LabelVolume organs;  // default schema ids 2..11
  LabelVolume bone;    // binary spine + femur mask
  TracerClass tracer;
};

/// Uptake template value (SUV) of an organ label for a tracer profile, before
/// scaling; id 0 gives the soft-tissue background.
double template_uptake(TracerClass profile, Label organ);

Phantom generate_phantom(const PhantomSpec& spec);

struct PhantomSuiteSpec {
  std::size_t fdg = 4;
  std::size_t psma = 4;
  std::uint64_t seed = 0;
  Dims dims{48, 40, 64};
  Vec3 spacing{2.0, 2.0, 2.0};
  std::size_t max_lesions = 2;
  double noise = 0.03;
  double min_radius_mm = 6.0;
  double max_radius_mm = 10.0;
  /// Lesion uptake as a multiple of the study's hottest template organ.
  double min_contrast = 3.0;
  double max_contrast = 3.5;
};

/// Randomised specs: 1..max_lesions spheres with uniform radius and contrast
/// in the given ranges, uptake scale 0.85-1.15. FDG studies come first, ids
/// "fdg_###" then "psma_###".
std::vector<PhantomSpec> phantom_suite(const PhantomSuiteSpec& suite);

}  // namespace mtseg
