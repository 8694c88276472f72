#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtseg/classifier.hpp"
#include "mtseg/config.hpp"
#include "mtseg/manifest.hpp"
#include "mtseg/metrics.hpp"
#include "mtseg/phantom.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/segmenter.hpp"

namespace mtseg {

struct SegmentationInput {
  const StudyEntry& entry;
  const PreprocessedStudy& study;
  TracerClass tracer;
};

/// Returns a binary lesion mask on the preprocessed grid.
using Segmenter = std::function<LabelVolume(const SegmentationInput&)>;
using TracerClassifier = std::function<ClassificationResult(const MipImage&)>;

/// Build the configured stages. The toy checkpoint or builtin model is loaded
/// once and shared read-only between workers.
TracerClassifier make_classifier(const ClassifierChoice& choice);
Segmenter make_segmenter(const SegmenterChoice& choice);

/// Writes the preprocessed PET and CT to a private temporary directory and
/// runs `<command> <pet> <ct> <out>`; the output volume must have the
/// preprocessed grid's dims and nonzero voxels are lesion.
///
/// Errors: AdapterLaunchFailure, AdapterTimeout, AdapterProtocolError
/// (missing or mis-shaped output).
LabelVolume segment_external(const PreprocessedStudy& study, const std::string& command,
                             std::chrono::milliseconds timeout);

struct StudyRecord {
  std::string id;
  bool ok = false;
  std::string error_code;
  std::string error_message;
  std::optional<ClassificationResult> classification;
  std::optional<TracerClass> known_tracer;
  std::string prediction;  // relative to the output directory
  std::string fused_labels;
  std::size_t predicted_voxels = 0;
  std::optional<EvalReport> evaluation;
};

struct RunReport {
  std::string config_echo;
  std::vector<StudyRecord> studies;  // sorted by id
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::optional<EvalSummary> summary;
  std::size_t classifier_known = 0;
  std::size_t classifier_correct = 0;
};

/// Overrides for the configured stages (tests inject stubs here).
struct PipelineHooks {
  TracerClassifier classifier;
  Segmenter segmenter;
};

/// Per study: read, reorient to canonical, MIP, classify, preprocess with the
/// tracer's branch, segment, resample the mask back onto the canonical PET
/// grid, write predictions/<id>_pred.nii.gz and, with ground truth, evaluate
/// (and fuse organ/bone labels into fused/<id>_labels.nii.gz when given). A
/// failing study is recorded and skipped. Writes report.jsonl and summary.txt.
///
/// Errors: ConfigInvalid, ManifestUnreadable; stage construction errors
/// (e.g. an unreadable model) propagate.
RunReport run_pipeline(const PipelineConfig& cfg, const PipelineHooks& hooks = {});

/// Preprocesses a labelled study the way the pipeline does (PET grid as
/// reference) and carries the lesion mask onto that grid.
TrainingCase prepare_training_case(const ImageVolume& pet, const ImageVolume& ct, const LabelVolume& lesion,
                                   const PreprocessParams& params);

/// Generates the suite into `dir` as <id>_{pet,ct,lesion,organs,bone}.nii.gz
/// plus manifest.jsonl (paths relative to `dir`). Returns the manifest entries.
std::vector<StudyEntry> write_phantom_suite(const PhantomSuiteSpec& suite, const std::filesystem::path& dir);

/// Line-delimited JSON: a config record, one record per study, a summary.
std::string report_jsonl(const RunReport& report);
std::string summary_text(const RunReport& report);

}  // namespace mtseg
