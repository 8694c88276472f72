#include <doctest.h>

#include "mtseg/config.hpp"
#include "mtseg/error.hpp"
#include "mtseg/manifest.hpp"
#include "oracles.hpp"

using namespace mtseg;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

const char* kConfig = R"([run]
manifest = data/manifest.jsonl
output = out
seed = 42
workers = 3

[classifier]
model = models/classifier.json

[segmenter]
checkpoint = /abs/toy.ckpt
threshold = 0.4
overlap = 0.25

[preprocess_psma]
spacing = 1.5 1.5 3
interpolation = nearest
normalization = zscore_masked
ct_clip = 0.5 99.5

[loss]
gamma = 1.5
alpha_weighting = balanced

[evaluation]
mode = voxelwise
connectivity = 26
)";

}  // namespace

TEST_CASE("configuration parsing") {
  const PipelineConfig c = parse_config(kConfig, "/base");
  CHECK(c.manifest == "/base/data/manifest.jsonl");
  CHECK(c.output == "/base/out");
  CHECK(c.seed == 42);
  CHECK(c.workers == 3);
  CHECK(c.classifier.model == "/base/models/classifier.json");
  CHECK(c.segmenter.checkpoint == "/abs/toy.ckpt");
  CHECK(c.segmenter.threshold == 0.4);
  CHECK(c.segmenter.overlap == 0.25);
  const PreprocessParams& psma = c.preprocess.at(TracerClass::PSMA);
  CHECK(psma.target_spacing == Vec3{1.5, 1.5, 3.0});
  CHECK(psma.image_interpolation == Interpolation::Nearest);
  CHECK(psma.normalization == Normalization::ZScoreMasked);
  REQUIRE(psma.ct_clip.has_value());
  CHECK(psma.ct_clip->hi == 99.5);
  CHECK(psma.tracer == TracerClass::PSMA);
  const PreprocessParams& fdg = c.preprocess.at(TracerClass::FDG);
  CHECK(fdg.target_spacing == Vec3{2.0, 2.0, 2.0});
  CHECK_FALSE(fdg.ct_clip.has_value());
  CHECK(c.loss.gamma == 1.5);
  CHECK(c.loss.alpha_weighting == AlphaWeighting::Balanced);
  CHECK(c.eval_mode == FalseVolumeMode::Voxelwise);
  CHECK(c.connectivity == Connectivity::TwentySix);
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("canonical rendering round-trips") {
  const PipelineConfig c = parse_config(kConfig, "/base");
  const std::string text = to_ini(c);
  const PipelineConfig back = parse_config(text);
  CHECK(to_ini(back) == text);
  CHECK(back.workers == 3);
  CHECK(back.preprocess.at(TracerClass::PSMA).ct_clip->lo == 0.5);

  const std::string echo = to_ini(c, false);
  CHECK(echo.find("workers") == std::string::npos);
  CHECK(echo.find("output") == std::string::npos);
  PipelineConfig other = c;
  other.workers = 1;
  other.output = "/elsewhere";
  CHECK(to_ini(other, false) == echo);
}

TEST_CASE("configuration errors") {
  auto bad = [](const std::string& text) { return code_of([&] { parse_config(text); }); };
  CHECK(bad("[run]\nbogus = 1\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[mystery]\nx = 1\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[run]\nseed = -4\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[segmenter]\nthreshold = high\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[preprocess_fdg]\nspacing = 1 2\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[preprocess_fdg]\ninterpolation = cubic\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[evaluation]\nconnectivity = 4\n") == ErrorCode::ConfigInvalid);
  CHECK(bad("[run\nmanifest = x\n") == ErrorCode::ConfigInvalid);

  PipelineConfig c = parse_config(kConfig, "/base");
  auto invalid = [](const PipelineConfig& cfg) { return code_of([&] { validate(cfg); }); };
  PipelineConfig both = c;
  both.classifier.adapter = "stub";
  CHECK(invalid(both) == ErrorCode::ConfigInvalid);
  PipelineConfig none = c;
  none.segmenter.checkpoint.clear();
  CHECK(invalid(none) == ErrorCode::ConfigInvalid);
  PipelineConfig spacing = c;
  spacing.preprocess[TracerClass::FDG].target_spacing = {0.0, 1.0, 1.0};
  CHECK(invalid(spacing) == ErrorCode::ConfigInvalid);
  PipelineConfig branch = c;
  branch.preprocess.erase(TracerClass::PSMA);
  CHECK(invalid(branch) == ErrorCode::ConfigInvalid);
  PipelineConfig workers = c;
  workers.workers = 0;
  CHECK(invalid(workers) == ErrorCode::ConfigInvalid);
  PipelineConfig loss = c;
  loss.loss.alpha = 2.0;
  CHECK(invalid(loss) == ErrorCode::ConfigInvalid);

  CHECK(code_of([] { load_config("/nonexistent/cfg.ini"); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("manifest parsing") {
  const std::string text =
      "{\"id\": \"b\", \"pet\": \"b_pet.nii.gz\", \"ct\": \"/data/b_ct.nii.gz\", \"gt\": \"b_gt.nii.gz\", "
      "\"tracer\": \"PSMA\"}\n"
      "\n"
      "{\"id\": \"a\", \"pet\": \"a_pet.nii\", \"ct\": \"a_ct.nii\", \"organs\": \"o.nii\", \"bone\": \"x.nii\"}\n";
  const auto s = parse_manifest(text, "/m");
  REQUIRE(s.size() == 2);
  CHECK(s[0].id == "b");
  CHECK(s[0].pet == "/m/b_pet.nii.gz");
  CHECK(s[0].ct == "/data/b_ct.nii.gz");
  CHECK(s[0].gt == std::filesystem::path("/m/b_gt.nii.gz"));
  CHECK(s[0].tracer == TracerClass::PSMA);
  CHECK_FALSE(s[1].gt.has_value());
  CHECK_FALSE(s[1].tracer.has_value());
  CHECK(s[1].organs == std::filesystem::path("/m/o.nii"));

  const auto back = parse_manifest(to_jsonl(s));
  REQUIRE(back.size() == 2);
  CHECK(back[0].pet == s[0].pet);
  CHECK(back[1].bone == s[1].bone);
  CHECK(back[0].tracer == s[0].tracer);
}

TEST_CASE("manifest errors") {
  auto bad = [](const std::string& text) { return code_of([&] { parse_manifest(text); }); };
  CHECK(bad("") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{not json}\n") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{\"id\": \"a\", \"pet\": \"p\"}\n") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{\"id\": \"a\", \"pet\": \"p\", \"ct\": \"c\", \"extra\": 1}\n") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{\"id\": \"a\", \"pet\": 3, \"ct\": \"c\"}\n") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{\"id\": \"a/b\", \"pet\": \"p\", \"ct\": \"c\"}\n") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{\"id\": \"a\", \"pet\": \"p\", \"ct\": \"c\", \"tracer\": \"NaF\"}\n") == ErrorCode::ManifestUnreadable);
  CHECK(bad("{\"id\": \"a\", \"pet\": \"p\", \"ct\": \"c\"}\n{\"id\": \"a\", \"pet\": \"q\", \"ct\": \"d\"}\n") ==
        ErrorCode::ManifestUnreadable);
  CHECK(code_of([] { load_manifest("/nonexistent/m.jsonl"); }) == ErrorCode::ManifestUnreadable);
}
