#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "mtseg/loss.hpp"
#include "mtseg/metrics.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/tracer.hpp"

namespace mtseg {

struct ClassifierChoice {
  std::filesystem::path model;  // builtin linear model (JSON)
  std::string adapter;          // external command
  std::chrono::milliseconds timeout{30000};
};

struct SegmenterChoice {
  std::filesystem::path checkpoint;  // toy network
  std::string adapter;               // external command: <cmd> <pet> <ct> <out>
  std::chrono::milliseconds timeout{600000};
  double threshold = 0.5;
  double overlap = 0.5;
};

inline PreprocessParams branch_defaults(TracerClass t) {
  PreprocessParams p;
  p.tracer = t;
  return p;
}

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path output;
  ClassifierChoice classifier;
  SegmenterChoice segmenter;
  std::map<TracerClass, PreprocessParams> preprocess{
      {TracerClass::FDG, branch_defaults(TracerClass::FDG)},
      {TracerClass::PSMA, branch_defaults(TracerClass::PSMA)},
  };
  LossParams loss;
  FalseVolumeMode eval_mode = FalseVolumeMode::Component;
  Connectivity connectivity = Connectivity::Eighteen;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Throws ConfigInvalid unless exactly one classifier and one segmenter are
/// chosen, both tracer branches are present and every parameter is valid.
void validate(const PipelineConfig& cfg);

/// INI layout:
///   [run]            manifest, output, seed, workers
///   [classifier]     model | adapter, timeout_ms
///   [segmenter]      checkpoint | adapter, timeout_ms, threshold, overlap
///   [preprocess_fdg] spacing = "sx sy sz", interpolation, normalization,
///   [preprocess_psma]   ct_clip = "lo hi" | off
///   [loss]           alpha, gamma, epsilon, lambda_dice, lambda_focal, alpha_weighting
///   [evaluation]     mode, connectivity
/// Relative paths resolve against the file's directory. Unknown sections or
/// keys are rejected. Missing keys keep their defaults; validation is left to
/// the caller so command-line overrides can be applied first.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical INI rendering. With include_execution = false the run-only keys
/// (output, workers) are omitted, which is the form echoed into reports so
/// that output location and concurrency do not change report bytes.
std::string to_ini(const PipelineConfig& cfg, bool include_execution = true);

std::string_view to_string(Interpolation i);
std::string_view to_string(Normalization n);
std::string_view to_string(AlphaWeighting w);
Interpolation parse_interpolation(std::string_view text);
Normalization parse_normalization(std::string_view text);
AlphaWeighting parse_alpha_weighting(std::string_view text);

}  // namespace mtseg
