#include "mtseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "mtseg/error.hpp"
#include "mtseg/label_schema.hpp"

namespace mtseg {

namespace {

// Fractional ellipsoid in voxel-index space: center and semi-axes as
// fractions of the volume extent.
struct Ellipsoid {
  double cx, cy, cz, rx, ry, rz;
};

struct OrganShape {
  Label label;  // 0 = not part of the organ map
  Ellipsoid shape;
  double ct_hu;
};

constexpr Label kLiver = 2, kKidneys = 3, kBladder = 4, kSpleen = 5, kLung = 6, kBrain = 7, kHeart = 8,
                kFemur = 9, kStomach = 10, kProstate = 11;
constexpr Label kSalivary = 1000;  // PET-only structure, no organ label

// Drawn in order; later entries overwrite earlier ones.
const OrganShape kOrgans[] = {
    {kLung, {0.32, 0.50, 0.66, 0.12, 0.20, 0.10}, -800.0},
    {kLung, {0.68, 0.50, 0.66, 0.12, 0.20, 0.10}, -800.0},
    {kHeart, {0.55, 0.58, 0.62, 0.10, 0.12, 0.06}, 40.0},
    {kLiver, {0.35, 0.50, 0.50, 0.14, 0.18, 0.06}, 60.0},
    {kSpleen, {0.70, 0.42, 0.50, 0.06, 0.08, 0.04}, 45.0},
    {kStomach, {0.60, 0.58, 0.50, 0.07, 0.08, 0.04}, 30.0},
    {kKidneys, {0.35, 0.36, 0.41, 0.05, 0.07, 0.04}, 35.0},
    {kKidneys, {0.65, 0.36, 0.41, 0.05, 0.07, 0.04}, 35.0},
    {kBladder, {0.50, 0.55, 0.17, 0.07, 0.08, 0.03}, 5.0},
    {kProstate, {0.50, 0.50, 0.11, 0.04, 0.05, 0.02}, 40.0},
    {kFemur, {0.35, 0.50, 0.05, 0.05, 0.06, 0.06}, 700.0},
    {kFemur, {0.65, 0.50, 0.05, 0.05, 0.06, 0.06}, 700.0},
    {kBrain, {0.50, 0.50, 0.91, 0.16, 0.20, 0.06}, 35.0},
    {kSalivary, {0.40, 0.62, 0.81, 0.04, 0.05, 0.02}, 40.0},
    {kSalivary, {0.60, 0.62, 0.81, 0.04, 0.05, 0.02}, 40.0},
};

constexpr Ellipsoid kBody{0.50, 0.50, 0.50, 0.46, 0.42, 0.52};
constexpr Ellipsoid kSpine{0.50, 0.25, 0.45, 0.04, 0.05, 0.40};

bool inside(const Ellipsoid& e, const Dims& d, std::size_t i, std::size_t j, std::size_t k) {
  auto term = [](double idx, std::size_t n, double c, double r) {
    const double u = (idx + 0.5) / static_cast<double>(n);
    return (u - c) * (u - c) / (r * r);
  };
  return term(i, d[0], e.cx, e.rx) + term(j, d[1], e.cy, e.ry) + term(k, d[2], e.cz, e.rz) <= 1.0;
}

double hottest_organ(TracerClass t) {
  double hot = 0.0;
  for (Label l : {kLiver, kKidneys, kBladder, kSpleen, kLung, kBrain, kHeart, kFemur, kStomach, kProstate, kSalivary})
    hot = std::max(hot, template_uptake(t, l));
  return hot;
}

}  // namespace

double template_uptake(TracerClass profile, Label organ) {
  const bool fdg = profile == TracerClass::FDG;
  switch (organ) {
    case 0: return fdg ? 0.8 : 0.5;
    case kLiver: return fdg ? 2.0 : 5.0;
    case kKidneys: return fdg ? 2.5 : 11.0;
    case kBladder: return fdg ? 6.0 : 10.0;
    case kSpleen: return fdg ? 1.8 : 4.5;
    case kLung: return fdg ? 0.4 : 0.3;
    case kBrain: return fdg ? 7.0 : 0.3;
    case kHeart: return fdg ? 4.0 : 1.0;
    case kFemur: return fdg ? 0.6 : 0.4;
    case kStomach: return fdg ? 1.5 : 1.2;
    case kProstate: return fdg ? 1.0 : 1.5;
    case kSalivary: return fdg ? 1.5 : 9.0;
    default: throw Error(ErrorCode::UnknownLabel, "no uptake template for label " + std::to_string(organ));
  }
}

void validate(const PhantomSpec& spec) {
  Geometry g{spec.dims, spec.spacing, spec.origin, Orientation::canonical()};
  try {
    validate_geometry(g);
  } catch (const Error& e) {
    throw Error(ErrorCode::SpecInvalid, e.what());
  }
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise))
    throw Error(ErrorCode::SpecInvalid, "noise must be finite and non-negative");
  if (!(spec.uptake_scale > 0.0) || !std::isfinite(spec.uptake_scale))
    throw Error(ErrorCode::SpecInvalid, "uptake_scale must be positive");
  for (std::size_t s = 0; s < spec.lesions.size(); ++s) {
    const auto& l = spec.lesions[s];
    if (!(l.radius_mm > 0.0) || !std::isfinite(l.radius_mm))
      throw Error(ErrorCode::SpecInvalid, "lesion " + std::to_string(s) + ": radius must be positive");
    if (!(l.intensity > 0.0) || !std::isfinite(l.intensity))
      throw Error(ErrorCode::SpecInvalid, "lesion " + std::to_string(s) + ": intensity must be positive");
    for (int a = 0; a < 3; ++a) {
      const double lo = spec.origin[a];
      const double hi = spec.origin[a] + static_cast<double>(spec.dims[a] - 1) * spec.spacing[a];
      if (l.center_mm[a] - l.radius_mm < lo || l.center_mm[a] + l.radius_mm > hi)
        throw Error(ErrorCode::SpecInvalid, "lesion " + std::to_string(s) + " extends outside the volume");
    }
  }
}

Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  const Geometry g{spec.dims, spec.spacing, spec.origin, Orientation::canonical()};
  Phantom out{ImageVolume(g, Modality::PET, IntensityUnit::SUV, 0.0),
              ImageVolume(g, Modality::CT, IntensityUnit::HU, -1000.0),
              LabelVolume(g, kBackground),
              LabelVolume(g, kBackground),
              LabelVolume(g, kBackground),
              spec.profile};
  const Dims& d = spec.dims;
  const double scale = spec.uptake_scale;

  for (std::size_t k = 0; k < d[2]; ++k)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t i = 0; i < d[0]; ++i) {
        if (!inside(kBody, d, i, j, k)) continue;
        const std::size_t n = g.index(i, j, k);
        double suv = template_uptake(spec.profile, 0);
        double hu = 0.0;
        for (const auto& organ : kOrgans) {
          if (!inside(organ.shape, d, i, j, k)) continue;
          suv = template_uptake(spec.profile, organ.label);
          hu = organ.ct_hu;
          if (organ.label != kSalivary) out.organs.labels[n] = organ.label;
          if (organ.label == kFemur) out.bone.labels[n] = 1;
        }
        if (inside(kSpine, d, i, j, k)) {
          hu = 700.0;
          out.bone.labels[n] = 1;
        }
        out.pet.voxels[n] = suv * scale;
        out.ct.voxels[n] = hu;
      }

  // Voxel centers within radius (inclusive) belong to the lesion.
  for (const auto& l : spec.lesions) {
    std::array<std::size_t, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      const double c = (l.center_mm[a] - spec.origin[a]) / spec.spacing[a];
      const double r = l.radius_mm / spec.spacing[a];
      lo[a] = static_cast<std::size_t>(std::max(0.0, std::floor(c - r)));
      hi[a] = std::min(d[a] - 1, static_cast<std::size_t>(std::ceil(c + r)));
    }
    const double r2 = l.radius_mm * l.radius_mm;
    for (std::size_t k = lo[2]; k <= hi[2]; ++k)
      for (std::size_t j = lo[1]; j <= hi[1]; ++j)
        for (std::size_t i = lo[0]; i <= hi[0]; ++i) {
          const Vec3 w = g.world(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
          const double dx = w[0] - l.center_mm[0], dy = w[1] - l.center_mm[1], dz = w[2] - l.center_mm[2];
          if (dx * dx + dy * dy + dz * dz > r2) continue;
          const std::size_t n = g.index(i, j, k);
          out.lesion.labels[n] = kLesion;
          out.pet.voxels[n] = l.intensity;
          out.ct.voxels[n] = 45.0;
        }
  }

  if (spec.noise > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t n = 0; n < g.voxel_count(); ++n) {
      out.pet.voxels[n] = std::max(0.0, out.pet.voxels[n] * (1.0 + spec.noise * normal(rng)));
      out.ct.voxels[n] += 20.0 * spec.noise * normal(rng);
    }
  }
  return out;
}

std::vector<PhantomSpec> phantom_suite(const PhantomSuiteSpec& suite) {
  if (suite.max_lesions == 0) throw Error(ErrorCode::SpecInvalid, "max_lesions must be at least 1");
  if (!(suite.min_radius_mm > 0.0 && suite.min_radius_mm <= suite.max_radius_mm))
    throw Error(ErrorCode::SpecInvalid, "radius range must be positive and ordered");
  if (!(suite.min_contrast > 0.0 && suite.min_contrast <= suite.max_contrast))
    throw Error(ErrorCode::SpecInvalid, "contrast range must be positive and ordered");
  std::mt19937_64 rng(suite.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  std::vector<PhantomSpec> specs;
  auto make = [&](TracerClass tracer, std::size_t idx) {
    PhantomSpec s;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%03zu", tracer == TracerClass::FDG ? "fdg" : "psma", idx);
    s.id = id;
    s.dims = suite.dims;
    s.spacing = suite.spacing;
    s.profile = tracer;
    s.noise = suite.noise;
    s.uptake_scale = uniform(0.85, 1.15);
    s.seed = rng();
    const std::size_t count = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(suite.max_lesions));
    const double hot = hottest_organ(tracer) * s.uptake_scale;
    for (std::size_t n = 0; n < std::min(count, suite.max_lesions); ++n) {
      LesionSphere l;
      l.radius_mm = uniform(suite.min_radius_mm, suite.max_radius_mm);
      l.intensity = hot * uniform(suite.min_contrast, suite.max_contrast);
      // Keep the center inside the inner body region and the sphere inside
      // the volume.
      for (int a = 0; a < 3; ++a) {
        const double extent = static_cast<double>(s.dims[a] - 1) * s.spacing[a];
        const double lo = std::max(l.radius_mm, 0.25 * extent);
        const double hi = std::min(extent - l.radius_mm, 0.75 * extent);
        if (lo > hi) throw Error(ErrorCode::SpecInvalid, "volume too small for a lesion of this radius");
        l.center_mm[a] = s.origin[a] + uniform(lo, hi);
      }
      s.lesions.push_back(l);
    }
    specs.push_back(std::move(s));
  };
  for (std::size_t n = 0; n < suite.fdg; ++n) make(TracerClass::FDG, n);
  for (std::size_t n = 0; n < suite.psma; ++n) make(TracerClass::PSMA, n);
  return specs;
}

}  // namespace mtseg
