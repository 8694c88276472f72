#include <doctest.h>

#include "mtseg/error.hpp"
#include "mtseg/phantom.hpp"
#include "oracles.hpp"

using namespace mtseg;

namespace {

double mean_over(const ImageVolume& v, const LabelVolume& lv, Label l) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.voxels.size(); ++i)
    if (lv.labels[i] == l) {
      s += v.voxels[i];
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST_CASE("lesion sphere matches a distance oracle") {
  PhantomSpec spec;
  const Vec3 c{47.0, 41.0, 63.0};
  spec.lesions = {{c, 8.0, 15.0}};
  const Phantom p = generate_phantom(spec);
  std::size_t expected = 0, got = 0;
  const Geometry& g = p.lesion.geometry;
  for (std::size_t k = 0; k < g.dims[2]; ++k)
    for (std::size_t j = 0; j < g.dims[1]; ++j)
      for (std::size_t i = 0; i < g.dims[0]; ++i) {
        const double dx = static_cast<double>(i) * 2.0 - c[0], dy = static_cast<double>(j) * 2.0 - c[1],
                     dz = static_cast<double>(k) * 2.0 - c[2];
        const bool in = dx * dx + dy * dy + dz * dz <= 64.0;
        expected += in;
        got += p.lesion.at(i, j, k) != 0;
        CHECK((p.lesion.at(i, j, k) != 0) == in);
        if (in) {
          CHECK(p.pet.at(i, j, k) == 15.0);
          CHECK(p.ct.at(i, j, k) == 45.0);
        }
      }
  CHECK(got == expected);
  CHECK(got > 200);
}

TEST_CASE("generation is deterministic and seed-dependent") {
  PhantomSpec spec;
  spec.noise = 0.05;
  spec.seed = 3;
  spec.lesions = {{{40.0, 40.0, 60.0}, 6.0, 10.0}};
  const Phantom a = generate_phantom(spec), b = generate_phantom(spec);
  CHECK(a.pet.voxels == b.pet.voxels);
  CHECK(a.ct.voxels == b.ct.voxels);
  CHECK(a.lesion.labels == b.lesion.labels);
  spec.seed = 4;
  CHECK(generate_phantom(spec).pet.voxels != a.pet.voxels);
  for (double v : a.pet.voxels) CHECK(v >= 0.0);
}

TEST_CASE("tracer profiles differ where the uptake templates differ") {
  PhantomSpec fdg, psma;
  psma.profile = TracerClass::PSMA;
  const Phantom f = generate_phantom(fdg), p = generate_phantom(psma);
  const Label kidneys = 3, brain = 7;
  CHECK(mean_over(p.pet, p.organs, kidneys) > mean_over(f.pet, f.organs, kidneys));
  CHECK(mean_over(f.pet, f.organs, brain) > mean_over(p.pet, p.organs, brain));
  CHECK(mean_over(f.pet, f.organs, kidneys) == template_uptake(TracerClass::FDG, kidneys));
  CHECK(f.ct.voxels == p.ct.voxels);
  CHECK(f.organs.labels == p.organs.labels);
  for (Label l : f.organs.labels) CHECK(l <= 11);
  for (Label l : f.bone.labels) CHECK(l <= 1);
}

TEST_CASE("invalid specs") {
  auto code = [](const PhantomSpec& s) {
    try {
      validate(s);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  PhantomSpec s;
  s.lesions = {{{-1.0, 10.0, 10.0}, 4.0, 5.0}};
  CHECK(code(s) == ErrorCode::SpecInvalid);
  s.lesions = {{{90.0, 40.0, 60.0}, 8.0, 5.0}};  // pokes out at x
  CHECK(code(s) == ErrorCode::SpecInvalid);
  s.lesions = {{{40.0, 40.0, 60.0}, 4.0, 0.0}};
  CHECK(code(s) == ErrorCode::SpecInvalid);
  s.lesions = {};
  s.noise = -0.1;
  CHECK(code(s) == ErrorCode::SpecInvalid);
  s.noise = 0.0;
  s.spacing = {2.0, 0.0, 2.0};
  CHECK(code(s) == ErrorCode::SpecInvalid);
  CHECK_THROWS_AS(generate_phantom(s), Error);
}

TEST_CASE("suites are reproducible, ordered and valid") {
  PhantomSuiteSpec suite;
  suite.fdg = 3;
  suite.psma = 2;
  suite.seed = 7;
  const auto a = phantom_suite(suite), b = phantom_suite(suite);
  REQUIRE(a.size() == 5);
  CHECK(a[0].id == "fdg_000");
  CHECK(a[3].id == "psma_000");
  for (std::size_t n = 0; n < a.size(); ++n) {
    CHECK(a[n].profile == (n < 3 ? TracerClass::FDG : TracerClass::PSMA));
    CHECK(a[n].lesions.size() >= 1);
    CHECK(a[n].lesions.size() <= suite.max_lesions);
    CHECK(a[n].lesions.size() == b[n].lesions.size());
    CHECK(a[n].seed == b[n].seed);
    CHECK_NOTHROW(validate(a[n]));
    for (const auto& l : a[n].lesions) {
      CHECK(l.radius_mm >= suite.min_radius_mm);
      CHECK(l.radius_mm <= suite.max_radius_mm);
    }
  }
}
