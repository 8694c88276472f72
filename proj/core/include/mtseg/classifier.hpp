#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtseg/mip.hpp"
#include "mtseg/tracer.hpp"

namespace mtseg {

/// Uptake descriptors of a normalized MIP: five intensity percentiles, four
/// above-threshold fractions, then two row-profile statistics.
struct FeatureVector {
  static constexpr std::size_t kSize = 11;
  static constexpr std::array<double, 5> kPercentiles{50.0, 75.0, 90.0, 95.0, 99.0};
  static constexpr std::array<double, 4> kThresholds{0.2, 0.4, 0.6, 0.8};
  /// Pixels above this value count as high-uptake for the row profile.
  static constexpr double kHighIntensity = 0.5;

  std::array<double, kSize> values{};

  static std::array<std::string_view, kSize> names();
  double percentile(std::size_t n) const { return values[n]; }
  double fraction_above(std::size_t n) const { return values[5 + n]; }
  /// Mean row position of high-uptake pixels, 0 = superior edge, 1 = inferior.
  double vertical_center_of_mass() const { return values[9]; }
  /// Number of maximal runs of consecutive rows containing a high pixel.
  double hot_row_clusters() const { return values[10]; }
};

/// Throws NotNormalized when a pixel lies outside [0, 1].
FeatureVector extract_features(const MipImage& mip);

/// Training-time defaults of the detector-style external classifier, kept as
/// provenance metadata.
struct ClassifierConfig {
  double learning_rate = 0.0001;
  std::size_t batch_size = 16;
  std::size_t epochs = 200;
  std::size_t input_size = kDefaultMipSize;
};

struct FitConfig {
  double learning_rate = 1.0;
  std::size_t epochs = 2000;
  std::uint64_t seed = 0;
};

struct LinearClassifierModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
};

struct LabeledFeatures {
  FeatureVector features;
  TracerClass tracer;
};

/// Full-batch gradient descent on the mean logistic loss, PSMA as the positive
/// class. Descent runs on per-feature standardized inputs and the result is
/// expressed back in raw feature space. Weights start from small seeded
/// Gaussian values. The step size is min(learning_rate, 1/L) for the loss
/// smoothness bound L, so the loss never increases between epochs. When `loss_curve` is given it receives the loss
/// before each epoch's update plus the final loss.
///
/// Throws SingleClassTrainingSet unless both classes are present.
LinearClassifierModel fit_builtin(std::span<const LabeledFeatures> training, const FitConfig& cfg,
                                  std::vector<double>* loss_curve = nullptr);

enum class ClassificationSource { Builtin, External };

struct ClassificationResult {
  TracerClass tracer = TracerClass::FDG;
  /// Probability assigned to the predicted class.
  double confidence = 0.5;
  /// Logistic PSMA score (builtin) or the adapter's reported confidence mapped
  /// onto the PSMA axis (external).
  double psma_score = 0.5;
  FeatureVector features;
  ClassificationSource source = ClassificationSource::Builtin;
};

/// PSMA when the logistic score is strictly above 0.5; an exact tie is FDG.
ClassificationResult classify_features(const FeatureVector& features, const LinearClassifierModel& model);
ClassificationResult classify(const MipImage& mip, const LinearClassifierModel& model);

/// Logistic score of the positive (PSMA) class.
double psma_score(const FeatureVector& features, const LinearClassifierModel& model);

struct ExternalModelAdapter {
  std::string command;
  std::chrono::milliseconds timeout{30000};
};

/// Writes the MIP as a float grid (see write_float_grid), runs
/// `<command> <mip-file>` and parses the single reply line "FDG <conf>" or
/// "PSMA <conf>".
///
/// Errors: AdapterLaunchFailure (spawn failure or nonzero exit),
/// AdapterProtocolError, AdapterTimeout.
ClassificationResult classify_external(const MipImage& mip, const ExternalModelAdapter& adapter);

/// Parses an adapter reply; throws AdapterProtocolError on anything else.
ClassificationResult parse_adapter_reply(std::string_view reply);

void save_model(const LinearClassifierModel& model, const std::filesystem::path& path);
LinearClassifierModel load_model(const std::filesystem::path& path);

}  // namespace mtseg
