#include <doctest.h>

#include <cmath>

#include "mtseg/error.hpp"
#include "mtseg/loss.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace mtseg;

namespace {

using Vec = std::vector<double>;

double dice_oracle(const Vec& p, const Vec& g, double eps) {
  double i = 0, a = 0, b = 0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    i += p[n] * g[n];
    a += p[n] * p[n];
    b += g[n] * g[n];
  }
  return 1.0 - (2.0 * i + eps) / (a + b + eps);
}

double focal_oracle(const Vec& p, const Vec& g, double alpha, double gamma) {
  double s = 0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double q = std::clamp(p[n], 1e-7, 1.0 - 1e-7);
    const double pt = g[n] == 1.0 ? q : 1.0 - q;
    s += -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return s / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("dice worked example") {
  CHECK(dice_loss(Vec{0.5, 0.5}, Vec{1.0, 0.0}, 1e-12) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(std::abs(dice_loss(Vec{0.5, 0.5}, Vec{1.0, 0.0}) - 0.33333) < 1e-5);
}

TEST_CASE("dice degenerate cases") {
  CHECK(dice_loss(Vec{1, 0, 1, 1}, Vec{1, 0, 1, 1}) == 0.0);
  CHECK(dice_loss(Vec(8, 0.0), Vec(8, 0.0)) == 0.0);
  CHECK(dice_loss(Vec{1, 1}, Vec{0, 0}) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("focal worked example and well-classified limit") {
  CHECK(focal_loss(Vec{0.5}, Vec{1.0}, 0.25, 2.0) == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(focal_loss(Vec{0.5}, Vec{0.0}, 0.25, 2.0) - 0.043322) < 1e-6);
  const double confident = focal_loss(Vec{1.0, 0.0, 1.0}, Vec{1.0, 0.0, 1.0}, 0.25, 2.0);
  CHECK(confident >= 0.0);
  CHECK(confident <= 0.25 * 1e-14 * std::abs(std::log(1.0 - 1e-7)) + 1e-30);
}

TEST_CASE("balanced weighting uses 1 - alpha on background") {
  CHECK(focal_loss(Vec{0.5}, Vec{0.0}, 0.25, 2.0, AlphaWeighting::Balanced) ==
        doctest::Approx(0.75 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss(Vec{0.5}, Vec{1.0}, 0.25, 2.0, AlphaWeighting::Balanced) ==
        doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gamma 0, alpha 1 equals binary cross-entropy") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Vec p = oracle::random_probabilities(64, seed, 0.0, 1.0);
    const Vec g = oracle::random_binary(64, seed + 1000);
    CHECK(std::abs(focal_loss(p, g, 1.0, 0.0) - oracle::cross_entropy(p, g)) <= 1e-9);
  }
}

TEST_CASE("compound loss projections and sum") {
  const Vec p{0.5, 0.5}, g{1.0, 0.0};
  LossParams lp;
  lp.lambda_focal = 0.0;
  CHECK(compound_loss(p, g, lp) == dice_loss(p, g, lp.epsilon));
  lp.lambda_focal = 1.0;
  lp.lambda_dice = 0.0;
  CHECK(compound_loss(p, g, lp) == focal_loss(p, g, lp.alpha, lp.gamma));
  lp.lambda_dice = 1.0;
  CHECK(compound_loss(p, g, lp) ==
        doctest::Approx(dice_oracle(p, g, lp.epsilon) + focal_oracle(p, g, 0.25, 2.0)).epsilon(1e-12));
  CHECK(compound_loss(p, g, lp) == doctest::Approx(0.33333 + 0.043322).epsilon(1e-5));
}

TEST_CASE("loss ranges and symmetry on random fields") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Vec p = oracle::random_probabilities(125, seed, 0.0, 1.0);
    const Vec g = oracle::random_binary(125, seed + 7);
    const double d = dice_loss(p, g);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK(d == doctest::Approx(dice_oracle(p, g, 1e-5)).epsilon(1e-12));
    CHECK(focal_loss(p, g, 0.25, 2.0) >= 0.0);
    CHECK(focal_loss(p, g, 0.25, 2.0) == doctest::Approx(focal_oracle(p, g, 0.25, 2.0)).epsilon(1e-12));

    const Vec b = oracle::random_binary(125, seed + 99);
    CHECK(dice_loss(b, g) == dice_loss(g, b));

    // larger gamma down-weights every voxel
    double prev = focal_loss(p, g, 0.25, 0.0);
    for (double gamma : {0.5, 1.0, 2.0, 3.0, 5.0}) {
      const double f = focal_loss(p, g, 0.25, gamma);
      CHECK(f <= prev);
      prev = f;
    }
  }
}

TEST_CASE("analytic gradient matches central differences") { CHECK(oracle::loss_gradient_error() <= 1e-4); }

TEST_CASE("component gradients") {
  const Vec g = oracle::random_binary(27, 3);
  Vec out(27, 0.0);
  add_dice_gradient(g, g, dice_terms(g, g), 1e-5, 1.0, out);
  for (double x : out) CHECK(std::abs(x) < 1e-12);  // perfect overlap is a stationary point

  // gamma 0, alpha 1: d/dp of mean cross-entropy
  const Vec p = oracle::random_probabilities(27, 4);
  Vec ce(27, 0.0);
  add_focal_gradient(p, g, 1.0, 0.0, AlphaWeighting::Uniform, 1.0 / 27.0, ce);
  for (std::size_t n = 0; n < 27; ++n) {
    const double expect = (g[n] == 1.0 ? -1.0 / p[n] : 1.0 / (1.0 - p[n])) / 27.0;
    CHECK(ce[n] == doctest::Approx(expect).epsilon(1e-12));
  }

  Vec clamped(4, 0.0);
  add_focal_gradient(Vec{0.0, 1.0, 0.0, 1.0}, Vec{1.0, 0.0, 0.0, 1.0}, 0.25, 2.0, AlphaWeighting::Uniform, 1.0,
                     clamped);
  for (double x : clamped) CHECK(x == 0.0);
}

TEST_CASE("multi-patch dice terms accumulate") {
  const Vec p = oracle::random_probabilities(40, 1), g = oracle::random_binary(40, 2);
  DiceTerms t = dice_terms(std::span(p).first(15), std::span(g).first(15));
  t += dice_terms(std::span(p).subspan(15), std::span(g).subspan(15));
  CHECK(dice_from_terms(t, 1e-5) == doctest::Approx(dice_loss(p, g)).epsilon(1e-14));
}

TEST_CASE("field overloads check geometry and parameters") {
  ProbabilityField p{oracle::grid({2, 2, 1}), {0.1, 0.2, 0.3, 0.4}};
  GroundTruthField g{oracle::grid({4, 1, 1}), {0, 1, 0, 1}};
  CHECK_THROWS_AS(dice_loss(p, g), Error);
  g.geometry = p.geometry;
  CHECK(dice_loss(p, g) == dice_loss(p.values, g.values));
  CHECK(compound_loss_gradient(p, g, {}).geometry == p.geometry);

  LossParams bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = {};
  bad.lambda_dice = bad.lambda_focal = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = {};
  bad.gamma = -1.0;
  CHECK_THROWS_AS(validate(bad), Error);
}
