#include "mtseg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "mtseg/error.hpp"
#include "mtseg/numeric.hpp"

namespace mtseg {

void validate(const LossParams& params) {
  if (!(params.alpha > 0.0 && params.alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0, 1]");
  if (!(params.gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be >= 0");
  if (!(params.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  if (!(params.lambda_dice >= 0.0 && params.lambda_focal >= 0.0) || params.lambda_dice + params.lambda_focal <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "loss weights must be >= 0 with a positive sum");
}

GroundTruthField GroundTruthField::from_mask(const LabelVolume& mask) {
  GroundTruthField g;
  g.geometry = mask.geometry;
  g.values.resize(mask.labels.size());
  for (std::size_t n = 0; n < mask.labels.size(); ++n) g.values[n] = mask.labels[n] != 0 ? 1.0 : 0.0;
  return g;
}

DiceTerms& DiceTerms::operator+=(const DiceTerms& o) {
  intersection += o.intersection;
  pred_sq += o.pred_sq;
  truth_sq += o.truth_sq;
  return *this;
}

namespace {

void require_same_size(std::span<const double> p, std::span<const double> g) {
  if (p.size() != g.size()) throw Error(ErrorCode::GeometryMismatch, "prediction and ground truth sizes differ");
}

double focal_weight(double g, double alpha, AlphaWeighting weighting) {
  if (weighting == AlphaWeighting::Uniform) return alpha;
  return g > 0.5 ? alpha : 1.0 - alpha;
}

}  // namespace

DiceTerms dice_terms(std::span<const double> p, std::span<const double> g) {
  require_same_size(p, g);
  std::vector<double> pg(p.size()), pp(p.size()), gg(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    pg[i] = p[i] * g[i];
    pp[i] = p[i] * p[i];
    gg[i] = g[i] * g[i];
  }
  return {pairwise_sum(pg), pairwise_sum(pp), pairwise_sum(gg)};
}

double dice_from_terms(const DiceTerms& t, double epsilon) {
  return 1.0 - (2.0 * t.intersection + epsilon) / (t.pred_sq + t.truth_sq + epsilon);
}

double dice_loss(std::span<const double> p, std::span<const double> g, double epsilon) {
  return dice_from_terms(dice_terms(p, g), epsilon);
}

double focal_sum(std::span<const double> p, std::span<const double> g, double alpha, double gamma,
                 AlphaWeighting weighting) {
  require_same_size(p, g);
  std::vector<double> terms(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double pt = g[i] > 0.5 ? pc : 1.0 - pc;
    terms[i] = -focal_weight(g[i], alpha, weighting) * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return pairwise_sum(terms);
}

double focal_loss(std::span<const double> p, std::span<const double> g, double alpha, double gamma,
                  AlphaWeighting weighting) {
  if (p.empty()) return 0.0;
  return focal_sum(p, g, alpha, gamma, weighting) / static_cast<double>(p.size());
}

double compound_loss(std::span<const double> p, std::span<const double> g, const LossParams& params) {
  validate(params);
  double total = 0.0;
  if (params.lambda_dice != 0.0) total += params.lambda_dice * dice_loss(p, g, params.epsilon);
  if (params.lambda_focal != 0.0)
    total += params.lambda_focal * focal_loss(p, g, params.alpha, params.gamma, params.alpha_weighting);
  return total;
}

void add_dice_gradient(std::span<const double> p, std::span<const double> g, const DiceTerms& terms, double epsilon,
                       double scale, std::span<double> out) {
  require_same_size(p, g);
  const double num = 2.0 * terms.intersection + epsilon;
  const double den = terms.pred_sq + terms.truth_sq + epsilon;
  const double a = scale * 2.0 * num / (den * den);
  const double b = scale * 2.0 / den;
  for (std::size_t i = 0; i < p.size(); ++i) out[i] += a * p[i] - b * g[i];
}

void add_focal_gradient(std::span<const double> p, std::span<const double> g, double alpha, double gamma,
                        AlphaWeighting weighting, double scale, std::span<double> out) {
  require_same_size(p, g);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < kProbabilityClamp || p[i] > 1.0 - kProbabilityClamp) continue;
    const bool fg = g[i] > 0.5;
    const double pt = fg ? p[i] : 1.0 - p[i];
    const double q = 1.0 - pt;
    const double w = focal_weight(g[i], alpha, weighting);
    double d_pt = -std::pow(q, gamma) / pt;
    if (gamma != 0.0) d_pt += gamma * std::pow(q, gamma - 1.0) * std::log(pt);
    d_pt *= w;
    out[i] += scale * (fg ? d_pt : -d_pt);
  }
}

std::vector<double> compound_loss_gradient(std::span<const double> p, std::span<const double> g,
                                           const LossParams& params) {
  validate(params);
  require_same_size(p, g);
  std::vector<double> grad(p.size(), 0.0);
  if (params.lambda_dice != 0.0)
    add_dice_gradient(p, g, dice_terms(p, g), params.epsilon, params.lambda_dice, grad);
  if (params.lambda_focal != 0.0 && !p.empty())
    add_focal_gradient(p, g, params.alpha, params.gamma, params.alpha_weighting,
                       params.lambda_focal / static_cast<double>(p.size()), grad);
  return grad;
}

double dice_loss(const ProbabilityField& p, const GroundTruthField& g, double epsilon) {
  require_same_geometry(p.geometry, g.geometry, "probability and ground-truth geometry differ");
  return dice_loss(p.values, g.values, epsilon);
}

double focal_loss(const ProbabilityField& p, const GroundTruthField& g, double alpha, double gamma,
                  AlphaWeighting weighting) {
  require_same_geometry(p.geometry, g.geometry, "probability and ground-truth geometry differ");
  return focal_loss(p.values, g.values, alpha, gamma, weighting);
}

double compound_loss(const ProbabilityField& p, const GroundTruthField& g, const LossParams& params) {
  require_same_geometry(p.geometry, g.geometry, "probability and ground-truth geometry differ");
  return compound_loss(p.values, g.values, params);
}

ProbabilityField compound_loss_gradient(const ProbabilityField& p, const GroundTruthField& g,
                                        const LossParams& params) {
  require_same_geometry(p.geometry, g.geometry, "probability and ground-truth geometry differ");
  return {p.geometry, compound_loss_gradient(p.values, g.values, params)};
}

}  // namespace mtseg
