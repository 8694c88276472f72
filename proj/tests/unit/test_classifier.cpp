#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>

#include "mtseg/classifier.hpp"
#include "mtseg/error.hpp"
#include "mtseg/phantom.hpp"
#include "oracles.hpp"

using namespace mtseg;

namespace {

MipImage image(std::size_t h, std::size_t w, std::vector<double> px) {
  MipImage m;
  m.height = h;
  m.width = w;
  m.pixels = std::move(px);
  m.normalized = true;
  return m;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

double accuracy(std::span<const LabeledFeatures> data, const LinearClassifierModel& m) {
  std::size_t ok = 0;
  for (const auto& d : data) ok += classify_features(d.features, m).tracer == d.tracer;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("features of degenerate images") {
  const FeatureVector zero = extract_features(image(8, 8, std::vector<double>(64, 0.0)));
  for (std::size_t n = 0; n < 5; ++n) CHECK(zero.percentile(n) == 0.0);
  for (std::size_t n = 0; n < 4; ++n) CHECK(zero.fraction_above(n) == 0.0);

  const FeatureVector one = extract_features(image(8, 8, std::vector<double>(64, 1.0)));
  for (std::size_t n = 0; n < 5; ++n) CHECK(one.percentile(n) == 1.0);
  for (std::size_t n = 0; n < 4; ++n) CHECK(one.fraction_above(n) == 1.0);
  CHECK(one.hot_row_clusters() == 1.0);
  CHECK(one.vertical_center_of_mass() == doctest::Approx(0.5));
}

TEST_CASE("checkerboard has half its pixels above every threshold") {
  std::vector<double> px(64);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) px[r * 8 + c] = (r + c) % 2 == 0 ? 1.0 : 0.0;
  const FeatureVector f = extract_features(image(8, 8, px));
  for (std::size_t n = 0; n < 4; ++n) CHECK(f.fraction_above(n) == 0.5);
}

TEST_CASE("row profile statistics") {
  // hot rows 1 and 2 (one cluster) and row 6 (second cluster) of 8
  std::vector<double> px(8 * 4, 0.0);
  for (std::size_t r : {1, 2, 6}) px[r * 4] = 0.9;
  const FeatureVector f = extract_features(image(8, 4, px));
  CHECK(f.hot_row_clusters() == 2.0);
  CHECK(f.vertical_center_of_mass() < 0.5);
}

TEST_CASE("shuffling pixels leaves percentile and fraction features unchanged") {
  std::vector<double> px = oracle::random_probabilities(30 * 20, 4, 0.0, 1.0);
  const FeatureVector a = extract_features(image(30, 20, px));
  std::shuffle(px.begin(), px.end(), std::mt19937_64(9));
  const FeatureVector b = extract_features(image(30, 20, px));
  for (std::size_t n = 0; n < 9; ++n) CHECK(a.values[n] == b.values[n]);
}

TEST_CASE("feature extraction rejects unnormalized input") {
  CHECK(code_of([] { extract_features(image(1, 2, {0.0, 1.5})); }) == ErrorCode::NotNormalized);
}

TEST_CASE("separable clusters are fitted perfectly with a non-increasing loss") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<LabeledFeatures> data;
  for (int n = 0; n < 200; ++n) {
    LabeledFeatures ex;
    ex.tracer = n < 100 ? TracerClass::FDG : TracerClass::PSMA;
    const double centre = n < 100 ? 0.3 : 0.7;
    for (double& v : ex.features.values) v = centre + noise(rng);
    data.push_back(ex);
  }
  std::vector<double> curve;
  const LinearClassifierModel m = fit_builtin(data, {1.0, 500, 1}, &curve);
  CHECK(accuracy(data, m) == 1.0);
  REQUIRE(curve.size() == 501);
  for (std::size_t e = 1; e < curve.size(); ++e) CHECK(curve[e] <= curve[e - 1]);
  CHECK(m.final_loss == curve.back());
  CHECK(m.weights.size() == FeatureVector::kSize);
}

TEST_CASE("conflicting labels on identical features") {
  std::vector<LabeledFeatures> data(10);
  for (std::size_t n = 0; n < data.size(); ++n) {
    data[n].features.values.fill(0.4);
    data[n].tracer = n % 2 ? TracerClass::PSMA : TracerClass::FDG;
  }
  const LinearClassifierModel m = fit_builtin(data, {});
  CHECK(accuracy(data, m) == 0.5);
  CHECK(std::isfinite(m.final_loss));
}

TEST_CASE("single-class training set") {
  std::vector<LabeledFeatures> data(3);
  CHECK(code_of([&] { fit_builtin(data, {}); }) == ErrorCode::SingleClassTrainingSet);
}

TEST_CASE("fitting is deterministic for a seed") {
  std::vector<LabeledFeatures> data(6);
  for (std::size_t n = 0; n < 6; ++n) {
    data[n].features.values.fill(0.1 * static_cast<double>(n));
    data[n].tracer = n < 3 ? TracerClass::FDG : TracerClass::PSMA;
  }
  const auto a = fit_builtin(data, {0.5, 50, 42}), b = fit_builtin(data, {0.5, 50, 42});
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
}

TEST_CASE("decision rule, tie and saturation") {
  LinearClassifierModel m;
  m.weights.assign(FeatureVector::kSize, 0.0);
  FeatureVector f;
  f.values.fill(0.3);
  ClassificationResult r = classify_features(f, m);
  CHECK(r.psma_score == 0.5);
  CHECK(r.confidence == 0.5);
  CHECK(r.tracer == TracerClass::FDG);
  CHECK(r.source == ClassificationSource::Builtin);

  m.bias = 50.0;
  r = classify_features(f, m);
  CHECK(r.tracer == TracerClass::PSMA);
  CHECK(r.confidence == doctest::Approx(1.0));

  m.bias = -50.0;
  r = classify_features(f, m);
  CHECK(r.tracer == TracerClass::FDG);
  CHECK(r.confidence == doctest::Approx(1.0));
}

TEST_CASE("scaling features and inversely scaling weights keeps the class") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    LinearClassifierModel m;
    m.weights.resize(FeatureVector::kSize);
    for (double& w : m.weights) w = g(rng);
    m.bias = g(rng);
    FeatureVector f;
    for (double& v : f.values) v = std::abs(g(rng));
    const double c = 0.1 + 10.0 * std::abs(g(rng));
    LinearClassifierModel scaled = m;
    for (double& w : scaled.weights) w /= c;
    FeatureVector fs = f;
    for (double& v : fs.values) v *= c;
    CHECK(classify_features(f, m).tracer == classify_features(fs, scaled).tracer);
  }
}

TEST_CASE("model dimension mismatch") {
  LinearClassifierModel m;
  m.weights.assign(3, 0.0);
  CHECK(code_of([&] { classify(image(2, 2, {0, 0, 0, 1}), m); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("model save/load round trip") {
  oracle::TempDir dir;
  LinearClassifierModel m;
  m.weights = {0.1, -0.2, 0.3, 1e-17, 5, 6, 7, 8, 9, 10, 1.0 / 3.0};
  m.bias = -0.125;
  m.epochs = 17;
  m.learning_rate = 0.25;
  m.seed = 99;
  m.final_loss = 0.01;
  save_model(m, dir / "m.json");
  const LinearClassifierModel r = load_model(dir / "m.json");
  CHECK(r.weights == m.weights);
  CHECK(r.bias == m.bias);
  CHECK(r.epochs == 17);
  CHECK(r.seed == 99);
  oracle::write_file(dir / "bad.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(load_model(dir / "bad.json"), Error);
}

TEST_CASE("adapter reply parsing") {
  const ClassificationResult r = parse_adapter_reply("PSMA 0.9\n");
  CHECK(r.tracer == TracerClass::PSMA);
  CHECK(r.confidence == 0.9);
  CHECK(r.source == ClassificationSource::External);
  CHECK(parse_adapter_reply("FDG 0.75").tracer == TracerClass::FDG);
  for (const char* bad : {"", "PSMA", "PSMA x", "CAT 0.5", "PSMA 1.5", "FDG -0.1", "PSMA 0.9 extra"})
    CHECK(code_of([&] { parse_adapter_reply(bad); }) == ErrorCode::AdapterProtocolError);
}

TEST_CASE("external adapter protocol") {
  oracle::TempDir dir;
  const MipImage mip = classification_input(oracle::random_image({6, 5, 8}, 1), 16);

  oracle::write_script(dir / "psma.sh", "echo 'PSMA 0.9'");
  ClassificationResult r = classify_external(mip, {(dir / "psma.sh").string(), std::chrono::milliseconds(10000)});
  CHECK(r.tracer == TracerClass::PSMA);
  CHECK(r.confidence == 0.9);
  CHECK(r.source == ClassificationSource::External);

  // the adapter receives a readable float grid
  oracle::write_script(dir / "check.sh",
                       "[ \"$(head -c 8 \"$1\")\" = MTSGPFG1 ] && echo 'FDG 0.8' || echo 'PSMA 0.1'");
  r = classify_external(mip, {(dir / "check.sh").string(), std::chrono::milliseconds(10000)});
  CHECK(r.tracer == TracerClass::FDG);
  CHECK(r.confidence == 0.8);

  oracle::write_script(dir / "garbage.sh", "echo 'no idea'");
  CHECK(code_of([&] { classify_external(mip, {(dir / "garbage.sh").string(), std::chrono::milliseconds(10000)}); }) ==
        ErrorCode::AdapterProtocolError);

  oracle::write_script(dir / "fail.sh", "exit 3");
  CHECK(code_of([&] { classify_external(mip, {(dir / "fail.sh").string(), std::chrono::milliseconds(10000)}); }) ==
        ErrorCode::AdapterLaunchFailure);

  oracle::write_script(dir / "slow.sh", "sleep 30; echo 'PSMA 0.9'");
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(code_of([&] { classify_external(mip, {(dir / "slow.sh").string(), std::chrono::milliseconds(300)}); }) ==
        ErrorCode::AdapterTimeout);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
}

TEST_CASE("phantom suite tracers are separable by the builtin classifier") {
  auto features_of = [](std::uint64_t seed) {
    PhantomSuiteSpec s;
    s.fdg = s.psma = 6;
    s.seed = seed;
    std::vector<LabeledFeatures> out;
    for (const auto& spec : phantom_suite(s)) {
      const Phantom p = generate_phantom(spec);
      out.push_back({extract_features(classification_input(p.pet)), p.tracer});
    }
    return out;
  };
  const auto train = features_of(100), test = features_of(200);
  const LinearClassifierModel m = fit_builtin(train, {1.0, 2000, 0});
  CHECK(accuracy(train, m) == 1.0);
  CHECK(accuracy(test, m) == 1.0);
}
