#include <doctest.h>

#include "gradcheck.hpp"
#include "mtseg/error.hpp"
#include "mtseg/network.hpp"
#include "mtseg/segmenter.hpp"
#include "oracles.hpp"

using namespace mtseg;

namespace {

Tensor random_tensor(std::size_t c, Dims d, std::uint64_t seed) {
  Tensor t(c, d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : t.data) x = u(rng);
  return t;
}

SegmenterConfig small_config(std::uint64_t seed = 0) {
  SegmenterConfig cfg;
  cfg.patch_size = {8, 8, 8};
  cfg.seed = seed;
  return cfg;
}

bool contains(const std::array<std::size_t, 3>& origin, const Dims& patch, std::size_t i, std::size_t j,
              std::size_t k) {
  const std::size_t v[3] = {i, j, k};
  for (int a = 0; a < 3; ++a)
    if (v[a] < origin[a] || v[a] >= origin[a] + patch[a]) return false;
  return true;
}

std::vector<TrainingCase> tiny_dataset() {
  std::vector<TrainingCase> cases;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const Dims d{12, 12, 12};
    TrainingCase c{oracle::random_image(d, s), oracle::random_image(d, s + 10), oracle::random_mask(d, s + 20, 0.1)};
    cases.push_back(c);
  }
  return cases;
}

}  // namespace

TEST_CASE("zero-initialized network outputs exactly 0.5") {
  const ToyUNet net(small_config(), WeightInit::Zero);
  for (double p : net.forward(random_tensor(2, {8, 8, 8}, 1)).data) CHECK(p == 0.5);
}

TEST_CASE("forward is deterministic and stays in (0, 1)") {
  const ToyUNet a(small_config(3)), b(small_config(3));
  const Tensor in = random_tensor(2, {8, 8, 8}, 4);
  const Tensor pa = a.forward(in), pb = b.forward(in);
  CHECK(pa.data == pb.data);
  for (double p : pa.data) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("output shape equals input spatial shape") {
  struct Case {
    std::size_t levels, in;
    std::vector<std::size_t> widths;
    Dims dims;
  };
  const Case cases[] = {
      {1, 1, {3}, {5, 7, 3}},
      {2, 2, {4, 8}, {8, 12, 16}},
      {3, 2, {2, 3, 4}, {8, 12, 16}},
      {2, 1, {1, 1}, {2, 4, 6}},
      {3, 3, {4, 4, 4}, {4, 8, 4}},
  };
  for (const auto& c : cases) {
    SegmenterConfig cfg;
    cfg.levels = c.levels;
    cfg.widths = c.widths;
    cfg.in_channels = c.in;
    cfg.patch_size = {16, 16, 16};
    const Tensor out = ToyUNet(cfg).forward(random_tensor(c.in, c.dims, 7));
    CHECK(out.channels == 1);
    CHECK(out.dims == c.dims);
  }
}

TEST_CASE("shape and config errors") {
  const ToyUNet net(small_config());
  try {
    net.forward(random_tensor(3, {8, 8, 8}, 0));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  CHECK_THROWS_AS(net.forward(random_tensor(2, {8, 7, 8}, 0)), Error);

  SegmenterConfig bad = small_config();
  bad.patch_size = {8, 6, 8};
  CHECK_THROWS_AS(validate(bad), Error);
  bad = small_config();
  bad.widths = {4};
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("parameter gradients match central differences on an 8^3 patch") {
  for (std::uint64_t seed : {1u, 2u}) CHECK(oracle::network_gradient_error(seed) <= 1e-3);
}

TEST_CASE("foreground fraction 1 keeps the only lesion voxel in every patch") {
  const Dims d{20, 18, 24};
  const std::vector<ImageVolume> ch{oracle::random_image(d, 1), oracle::random_image(d, 2)};
  LabelVolume mask(oracle::grid(d));
  mask.at(3, 15, 11) = 1;
  const PatchBatch b = sample_patches(ch, mask, {{8, 8, 8}, 1.0, 25, 5});
  REQUIRE(b.images.size() == 25);
  for (std::size_t n = 0; n < 25; ++n) {
    CHECK(contains(b.origins[n], b.patch_size, 3, 15, 11));
    double sum = 0.0;
    for (double x : b.labels[n]) sum += x;
    CHECK(sum == 1.0);
    for (std::size_t a = 0; a < 3; ++a) CHECK(b.origins[n][a] + 8 <= d[a]);
  }
}

TEST_CASE("fraction 0.5 of 10 gives at least 5 foreground patches") {
  const Dims d{32, 32, 32};
  const std::vector<ImageVolume> ch{oracle::random_image(d, 1)};
  const LabelVolume mask = oracle::random_mask(d, 9, 0.001);
  const PatchBatch b = sample_patches(ch, mask, {{8, 8, 8}, 0.5, 10, 3});
  std::size_t with_lesion = 0;
  for (const auto& l : b.labels) with_lesion += std::any_of(l.begin(), l.end(), [](double x) { return x != 0.0; });
  CHECK(with_lesion >= 5);
}

TEST_CASE("sampling is deterministic and pads small volumes") {
  const Dims d{6, 10, 5};
  const std::vector<ImageVolume> ch{oracle::random_image(d, 1), oracle::random_image(d, 2)};
  const LabelVolume mask = oracle::random_mask(d, 3, 0.2);
  const PatchSampling s{{8, 8, 8}, 0.5, 6, 77};
  const PatchBatch a = sample_patches(ch, mask, s), b = sample_patches(ch, mask, s);
  CHECK(a.origins == b.origins);
  for (std::size_t n = 0; n < 6; ++n) {
    CHECK(a.images[n].data == b.images[n].data);
    CHECK(a.labels[n] == b.labels[n]);
    CHECK(a.origins[n][0] == 0);  // x and z are padded up to the patch
    CHECK(a.origins[n][2] == 0);
    CHECK(a.images[n].dims == Dims{8, 8, 8});
  }
  CHECK_THROWS_AS(sample_patches({}, mask, s), Error);
}

TEST_CASE("translating the volume by a patch stride translates the patches") {
  const Dims d{128, 16, 16};
  ImageVolume img = oracle::random_image(d, 4);
  LabelVolume mask(oracle::grid(d));
  for (std::size_t x = 40; x < 50; ++x) mask.at(x, 8, 8) = 1;
  ImageVolume img2 = img;
  LabelVolume mask2 = mask;
  for (std::size_t k = 0; k < 16; ++k)
    for (std::size_t j = 0; j < 16; ++j)
      for (std::size_t i = 0; i < 128; ++i) {
        img2.at((i + 32) % 128, j, k) = img.at(i, j, k);
        mask2.at((i + 32) % 128, j, k) = mask.at(i, j, k);
      }
  const PatchSampling s{{32, 16, 16}, 1.0, 8, 12};
  const PatchBatch a = sample_patches(std::vector{img}, mask, s);
  const PatchBatch b = sample_patches(std::vector{img2}, mask2, s);
  for (std::size_t n = 0; n < 8; ++n) {
    CHECK(b.origins[n][0] == a.origins[n][0] + 32);
    CHECK(b.images[n].data == a.images[n].data);
    CHECK(b.labels[n] == a.labels[n]);
  }
}

TEST_CASE("learning rate 0 leaves the loss curve flat") {
  const auto data = tiny_dataset();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 0.0;
  const TrainResult r = train(small_config(), data, tc);
  REQUIRE(r.loss_curve.size() == 4);
  for (double l : r.loss_curve) CHECK(l == r.loss_curve.front());
  CHECK(r.model.parameters()[0].values == ToyUNet(small_config()).parameters()[0].values);
}

TEST_CASE("training is bit-reproducible for a seed, also with parallel patches") {
  const auto data = tiny_dataset();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 0.05;
  tc.seed = 4;
  const TrainResult a = train(small_config(), data, tc);
  tc.workers = 3;
  const TrainResult b = train(small_config(), data, tc);
  CHECK(a.loss_curve == b.loss_curve);
  for (std::size_t t = 0; t < a.model.parameters().size(); ++t)
    CHECK(a.model.parameters()[t].values == b.model.parameters()[t].values);
  CHECK_THROWS_AS(train(small_config(), std::vector<TrainingCase>{}, tc), Error);
}

TEST_CASE("tile starts and coverage") {
  CHECK(tile_starts(48, 32, 0.5) == std::vector<std::size_t>{0, 16});
  CHECK(tile_starts(100, 32, 0.5) == std::vector<std::size_t>{0, 16, 32, 48, 64, 68});
  CHECK(tile_starts(32, 32, 0.5) == std::vector<std::size_t>{0});
  CHECK(tile_starts(20, 32, 0.0) == std::vector<std::size_t>{0});
  CHECK(tile_starts(64, 32, 0.0) == std::vector<std::size_t>{0, 32});

  const Dims d{40, 20, 50};
  const SlidingWindowConfig cfg{{16, 16, 16}, 0.5};
  const auto counts = coverage_counts(d, cfg);
  std::vector<std::uint32_t> oracle_counts(d[0] * d[1] * d[2], 0);
  for (std::size_t z0 : tile_starts(d[2], 16, 0.5))
    for (std::size_t y0 : tile_starts(d[1], 16, 0.5))
      for (std::size_t x0 : tile_starts(d[0], 16, 0.5))
        for (std::size_t k = z0; k < z0 + 16; ++k)
          for (std::size_t j = y0; j < y0 + 16; ++j)
            for (std::size_t i = x0; i < x0 + 16; ++i) ++oracle_counts[i + d[0] * (j + d[1] * k)];
  CHECK(counts == oracle_counts);
  for (auto c : counts) CHECK(c >= 1);
}

TEST_CASE("sliding window averaging") {
  SUBCASE("single tile equals forward") {
    const ToyUNet net(small_config(2));
    const Dims d{8, 8, 8};
    const std::vector<ImageVolume> ch{oracle::random_image(d, 1), oracle::random_image(d, 2)};
    const ProbabilityField p = predict_sliding_window([&](const Tensor& t) { return net.forward(t); }, ch,
                                                      {{8, 8, 8}, 0.0});
    Tensor in(2, d);
    std::copy(ch[0].voxels.begin(), ch[0].voxels.end(), in.channel(0));
    std::copy(ch[1].voxels.begin(), ch[1].voxels.end(), in.channel(1));
    CHECK(p.values == net.forward(in).data);
    CHECK(p.geometry == ch[0].geometry);
  }
  SUBCASE("constant stub gives a constant field for any tiling") {
    const Dims d{21, 13, 30};
    const std::vector<ImageVolume> ch{oracle::random_image(d, 1)};
    for (double overlap : {0.0, 0.25, 0.5, 0.75}) {
      const ProbabilityField p =
          predict_sliding_window([](const Tensor& t) { return Tensor(1, t.dims, 0.3); }, ch, {{8, 8, 8}, overlap});
      for (double x : p.values) CHECK(x == doctest::Approx(0.3).epsilon(1e-15));
    }
  }
  SUBCASE("two overlapping tiles average their contributions") {
    const Dims d{32, 32, 48};
    const std::vector<ImageVolume> ch{oracle::random_image(d, 1), oracle::random_image(d, 2)};
    int calls = 0;
    const ProbabilityField p = predict_sliding_window(
        [&](const Tensor& t) { return Tensor(1, t.dims, 0.2 + 0.4 * calls++); }, ch, {{32, 32, 32}, 0.5});
    CHECK(calls == 2);
    for (std::size_t k = 0; k < 48; ++k) {
      const double expect = k < 16 ? 0.2 : k < 32 ? (0.2 + 0.6) / 2.0 : 0.6;
      for (std::size_t n = 0; n < 32 * 32; ++n) CHECK(p.values[k * 32 * 32 + n] == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("binarize") {
  ProbabilityField half{oracle::grid({3, 3, 3}), std::vector<double>(27, 0.5)};
  for (Label l : binarize(half).labels) CHECK(l == 1);
  ProbabilityField zero{oracle::grid({3, 3, 3}), std::vector<double>(27, 0.0)};
  for (Label l : binarize(zero).labels) CHECK(l == 0);
  ProbabilityField r{oracle::grid({5, 5, 5}), oracle::random_probabilities(125, 3, 0.0, 1.0)};
  for (double t : {0.1, 0.5, 0.9}) {
    const LabelVolume m = binarize(r, t);
    for (std::size_t n = 0; n < 125; ++n) CHECK(m.labels[n] == (r.values[n] >= t ? 1 : 0));
  }
  CHECK_THROWS_AS(binarize(r, 0.0), Error);
  CHECK_THROWS_AS(binarize(r, 1.0), Error);
}

TEST_CASE("checkpoint round trip") {
  oracle::TempDir dir;
  SegmenterConfig cfg = small_config(21);
  cfg.widths = {3, 5};
  const ToyUNet net(cfg);
  save_checkpoint(net, dir / "m.ckpt");
  CHECK(oracle::slurp(dir / "m.ckpt").substr(0, 8) == "MTSGCKPT");
  const ToyUNet back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.config().widths == cfg.widths);
  CHECK(back.config().seed == 21);
  CHECK(back.config().patch_size == cfg.patch_size);
  REQUIRE(back.parameters().size() == net.parameters().size());
  for (std::size_t t = 0; t < net.parameters().size(); ++t) {
    CHECK(back.parameters()[t].name == net.parameters()[t].name);
    CHECK(back.parameters()[t].shape == net.parameters()[t].shape);
    CHECK(back.parameters()[t].values == net.parameters()[t].values);
  }
  const Tensor in = random_tensor(2, {8, 8, 8}, 5);
  CHECK(back.forward(in).data == net.forward(in).data);

  const std::string bytes = oracle::slurp(dir / "m.ckpt");
  oracle::write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), Error);
  oracle::write_file(dir / "magic.ckpt", "NOTACKPT" + bytes.substr(8));
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), Error);
}
