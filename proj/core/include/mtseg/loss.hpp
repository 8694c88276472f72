#pragma once

#include <span>
#include <vector>

#include "mtseg/volume.hpp"

namespace mtseg {

/// How the focal-loss class weight is applied. Uniform scales every voxel by
/// alpha; Balanced uses alpha on foreground and (1 - alpha) on background.
enum class AlphaWeighting { Uniform, Balanced };

struct LossParams {
  double alpha = 0.25;
  double gamma = 2.0;
  double epsilon = 1e-5;
  double lambda_dice = 1.0;
  double lambda_focal = 1.0;
  AlphaWeighting alpha_weighting = AlphaWeighting::Uniform;
};

/// Throws InvalidArgument when alpha is outside (0, 1], gamma < 0,
/// epsilon <= 0, a lambda is negative, or both lambdas are zero.
void validate(const LossParams& params);

/// Probabilities are clamped to [delta, 1 - delta] before logarithms.
inline constexpr double kProbabilityClamp = 1e-7;

struct ProbabilityField {
  Geometry geometry;
  std::vector<double> values;
};

struct GroundTruthField {
  Geometry geometry;
  std::vector<double> values;

  static GroundTruthField from_mask(const LabelVolume& mask);
};

/// Sums that define the squared-denominator Dice loss.
struct DiceTerms {
  double intersection = 0.0;  // sum p*g
  double pred_sq = 0.0;       // sum p^2
  double truth_sq = 0.0;      // sum g^2

  DiceTerms& operator+=(const DiceTerms& o);
};

DiceTerms dice_terms(std::span<const double> p, std::span<const double> g);
/// 1 - (2*sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps).
double dice_from_terms(const DiceTerms& t, double epsilon);

double dice_loss(std::span<const double> p, std::span<const double> g, double epsilon = 1e-5);
/// Mean over voxels of -w * (1 - p_t)^gamma * log(p_t).
double focal_loss(std::span<const double> p, std::span<const double> g, double alpha, double gamma,
                  AlphaWeighting weighting = AlphaWeighting::Uniform);
/// Unreduced sum of the per-voxel focal terms.
double focal_sum(std::span<const double> p, std::span<const double> g, double alpha, double gamma,
                 AlphaWeighting weighting = AlphaWeighting::Uniform);
double compound_loss(std::span<const double> p, std::span<const double> g, const LossParams& params);

/// d(compound_loss)/dp_i. Voxels whose probability is clamped get a zero
/// focal gradient.
std::vector<double> compound_loss_gradient(std::span<const double> p, std::span<const double> g,
                                           const LossParams& params);

/// out_i += scale * d(dice_from_terms(terms))/dp_i, where `terms` are the sums
/// over the full (possibly multi-patch) domain that p belongs to.
void add_dice_gradient(std::span<const double> p, std::span<const double> g, const DiceTerms& terms, double epsilon,
                       double scale, std::span<double> out);
/// out_i += scale * d(focal term_i)/dp_i.
void add_focal_gradient(std::span<const double> p, std::span<const double> g, double alpha, double gamma,
                        AlphaWeighting weighting, double scale, std::span<double> out);

/// Field overloads check geometry and throw GeometryMismatch.
double dice_loss(const ProbabilityField& p, const GroundTruthField& g, double epsilon = 1e-5);
double focal_loss(const ProbabilityField& p, const GroundTruthField& g, double alpha, double gamma,
                  AlphaWeighting weighting = AlphaWeighting::Uniform);
double compound_loss(const ProbabilityField& p, const GroundTruthField& g, const LossParams& params);
ProbabilityField compound_loss_gradient(const ProbabilityField& p, const GroundTruthField& g, const LossParams& params);

}  // namespace mtseg
