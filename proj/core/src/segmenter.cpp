#include "mtseg/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "mtseg/error.hpp"

namespace mtseg {

namespace {

void check_channels(std::span<const ImageVolume> channels) {
  if (channels.empty()) throw Error(ErrorCode::EmptyVolume, "no image channels");
  if (channels.front().geometry.voxel_count() == 0) throw Error(ErrorCode::EmptyVolume, "volume has no voxels");
  for (const auto& c : channels) {
    require_same_geometry(channels.front().geometry, c.geometry, "image channels do not share geometry");
    if (c.voxels.size() != c.geometry.voxel_count()) throw Error(ErrorCode::ShapeMismatch, "voxel count differs from dims");
  }
}

Tensor extract_patch(std::span<const ImageVolume> channels, const std::array<std::size_t, 3>& origin, const Dims& p) {
  Tensor t(channels.size(), p);
  const auto& g = channels.front().geometry;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    double* dst = t.channel(c);
    const auto& v = channels[c].voxels;
    for (std::size_t z = 0; z < p[2]; ++z) {
      const std::size_t sz = origin[2] + z;
      if (sz >= g.dims[2]) continue;
      for (std::size_t y = 0; y < p[1]; ++y) {
        const std::size_t sy = origin[1] + y;
        if (sy >= g.dims[1]) continue;
        const std::size_t xs = std::min(p[0], g.dims[0] > origin[0] ? g.dims[0] - origin[0] : 0);
        if (xs == 0) continue;
        const double* src = v.data() + g.index(origin[0], sy, sz);
        std::copy(src, src + xs, dst + (z * p[1] + y) * p[0]);
      }
    }
  }
  return t;
}

std::vector<double> extract_label_patch(const LabelVolume& mask, const std::array<std::size_t, 3>& origin, const Dims& p) {
  std::vector<double> out(p[0] * p[1] * p[2], 0.0);
  const auto& g = mask.geometry;
  for (std::size_t z = 0; z < p[2]; ++z) {
    const std::size_t sz = origin[2] + z;
    if (sz >= g.dims[2]) continue;
    for (std::size_t y = 0; y < p[1]; ++y) {
      const std::size_t sy = origin[1] + y;
      if (sy >= g.dims[1]) continue;
      for (std::size_t x = 0; x < p[0]; ++x) {
        const std::size_t sx = origin[0] + x;
        if (sx >= g.dims[0]) break;
        out[(z * p[1] + y) * p[0] + x] = mask.labels[g.index(sx, sy, sz)] != 0 ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

std::size_t required_foreground(double fraction, std::size_t count) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(count) - 1e-12));
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

}  // namespace

PatchBatch sample_patches(std::span<const ImageVolume> channels, const LabelVolume& lesion_mask,
                          const PatchSampling& sampling) {
  check_channels(channels);
  require_same_geometry(channels.front().geometry, lesion_mask.geometry, "lesion mask geometry differs from images");
  if (!(sampling.foreground_fraction >= 0.0 && sampling.foreground_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "foreground fraction must be in [0,1]");
  for (std::size_t p : sampling.patch_size) {
    if (p == 0) throw Error(ErrorCode::InvalidArgument, "patch size must be positive");
  }

  const auto& g = lesion_mask.geometry;
  const Dims& p = sampling.patch_size;
  Dims padded;
  for (std::size_t a = 0; a < 3; ++a) padded[a] = std::max(g.dims[a], p[a]);

  std::vector<std::size_t> lesion;
  for (std::size_t n = 0; n < lesion_mask.labels.size(); ++n) {
    if (lesion_mask.labels[n] != 0) lesion.push_back(n);
  }
  const std::size_t forced = lesion.empty() ? 0 : required_foreground(sampling.foreground_fraction, sampling.count);

  PatchBatch batch;
  batch.patch_size = p;
  batch.seed = sampling.seed;
  std::mt19937_64 rng(sampling.seed);
  for (std::size_t j = 0; j < sampling.count; ++j) {
    std::array<std::size_t, 3> origin{};
    const bool fg = j < forced;
    if (fg) {
      const std::size_t v = lesion[std::uniform_int_distribution<std::size_t>(0, lesion.size() - 1)(rng)];
      const std::array<std::size_t, 3> vi{v % g.dims[0], (v / g.dims[0]) % g.dims[1], v / (g.dims[0] * g.dims[1])};
      for (std::size_t a = 0; a < 3; ++a) {
        const auto off = static_cast<long>(std::uniform_int_distribution<std::size_t>(0, p[a] - 1)(rng));
        const long hi = static_cast<long>(padded[a] - p[a]);
        origin[a] = static_cast<std::size_t>(std::clamp(static_cast<long>(vi[a]) - off, 0L, hi));
      }
    } else {
      for (std::size_t a = 0; a < 3; ++a)
        origin[a] = std::uniform_int_distribution<std::size_t>(0, padded[a] - p[a])(rng);
    }
    batch.images.push_back(extract_patch(channels, origin, p));
    batch.labels.push_back(extract_label_patch(lesion_mask, origin, p));
    batch.origins.push_back(origin);
    batch.foreground.push_back(fg);
  }
  return batch;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "epochs and batch size must be positive");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw Error(ErrorCode::InvalidArgument, "learning rate must be finite and >= 0");
  if (!(cfg.foreground_fraction >= 0.0 && cfg.foreground_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "foreground fraction must be in [0,1]");
  validate(cfg.loss);
}

double batch_loss_and_gradient(const ToyUNet& model, const PatchBatch& batch, const LossParams& loss,
                               std::vector<std::vector<double>>* grads, std::size_t workers) {
  validate(loss);
  const std::size_t n = batch.images.size();
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "empty patch batch");
  std::vector<ToyUNet::Activations> acts(n);
  parallel_for(n, workers, [&](std::size_t i) { model.forward(batch.images[i], acts[i]); });

  DiceTerms terms;
  double focal = 0.0;
  std::size_t voxels = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = acts[i].prob.data;
    if (loss.lambda_dice != 0.0) terms += dice_terms(p, batch.labels[i]);
    if (loss.lambda_focal != 0.0) focal += focal_sum(p, batch.labels[i], loss.alpha, loss.gamma, loss.alpha_weighting);
    voxels += p.size();
  }
  const double focal_scale = loss.lambda_focal / static_cast<double>(voxels);
  double value = loss.lambda_focal * focal / static_cast<double>(voxels);
  if (loss.lambda_dice != 0.0) value += loss.lambda_dice * dice_from_terms(terms, loss.epsilon);
  if (grads == nullptr) return value;

  std::vector<std::vector<std::vector<double>>> per_patch(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& p = acts[i].prob.data;
    Tensor d_prob(1, acts[i].prob.dims);
    if (loss.lambda_dice != 0.0) add_dice_gradient(p, batch.labels[i], terms, loss.epsilon, loss.lambda_dice, d_prob.data);
    if (loss.lambda_focal != 0.0)
      add_focal_gradient(p, batch.labels[i], loss.alpha, loss.gamma, loss.alpha_weighting, focal_scale, d_prob.data);
    per_patch[i] = model.backward(acts[i], d_prob);
  });
  *grads = std::move(per_patch[0]);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t t = 0; t < grads->size(); ++t) {
      auto& dst = (*grads)[t];
      const auto& src = per_patch[i][t];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return value;
}

namespace {

PatchBatch sample_case_patches(std::span<const TrainingCase> dataset, const std::vector<std::size_t>& cases,
                               std::size_t forced, const Dims& patch, std::mt19937_64& rng) {
  PatchBatch batch;
  batch.patch_size = patch;
  for (std::size_t j = 0; j < cases.size(); ++j) {
    const auto& c = dataset[cases[j]];
    const std::array<ImageVolume, 2> channels{c.pet, c.ct};
    const auto one = sample_patches(channels, c.lesion, {patch, j < forced ? 1.0 : 0.0, 1, rng()});
    batch.images.push_back(one.images[0]);
    batch.labels.push_back(one.labels[0]);
    batch.origins.push_back(one.origins[0]);
    batch.foreground.push_back(one.foreground[0]);
  }
  return batch;
}

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss))
    throw Error(ErrorCode::DivergenceDetected, "loss became non-finite at epoch " + std::to_string(epoch));
}

}  // namespace

TrainResult train(const SegmenterConfig& model_cfg, std::span<const TrainingCase> dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "training needs at least one case");
  if (model_cfg.in_channels != 2) throw Error(ErrorCode::ShapeMismatch, "training cases carry PET and CT channels");
  for (const auto& c : dataset) {
    require_same_geometry(c.pet.geometry, c.ct.geometry, "PET/CT geometry differs in a training case");
    require_same_geometry(c.pet.geometry, c.lesion.geometry, "lesion geometry differs in a training case");
  }

  TrainResult result{ToyUNet(model_cfg), {}};
  ToyUNet& model = result.model;
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const PatchBatch monitor = sample_case_patches(
      dataset, all, required_foreground(cfg.foreground_fraction, all.size()), model_cfg.patch_size, rng);
  result.loss_curve.push_back(batch_loss_and_gradient(model, monitor, cfg.loss, nullptr, cfg.workers));
  check_finite(result.loss_curve.back(), 0);

  const std::size_t steps = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t forced = required_foreground(cfg.foreground_fraction, cfg.batch_size);
  std::vector<std::size_t> order = all;
  std::vector<std::vector<double>> grads;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<std::size_t> cases(cfg.batch_size);
      for (std::size_t j = 0; j < cfg.batch_size; ++j) cases[j] = order[(s * cfg.batch_size + j) % order.size()];
      const auto batch = sample_case_patches(dataset, cases, forced, model_cfg.patch_size, rng);
      const double loss = batch_loss_and_gradient(model, batch, cfg.loss, &grads, cfg.workers);
      check_finite(loss, epoch);
      if (cfg.learning_rate == 0.0) continue;
      auto& params = model.parameters();
      for (std::size_t t = 0; t < params.size(); ++t) {
        auto& v = params[t].values;
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= cfg.learning_rate * grads[t][k];
      }
    }
    result.loss_curve.push_back(batch_loss_and_gradient(model, monitor, cfg.loss, nullptr, cfg.workers));
    check_finite(result.loss_curve.back(), epoch);
  }
  return result;
}

std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t patch, double overlap) {
  if (patch == 0) throw Error(ErrorCode::InvalidArgument, "patch size must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error(ErrorCode::InvalidArgument, "overlap must be in [0, 1)");
  if (extent <= patch) return {0};
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(patch) * (1.0 - overlap))));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + patch < extent; s += step) starts.push_back(s);
  if (starts.back() != extent - patch) starts.push_back(extent - patch);
  return starts;
}

std::vector<std::uint32_t> coverage_counts(const Dims& dims, const SlidingWindowConfig& cfg) {
  std::array<std::vector<std::uint32_t>, 3> per_axis;
  for (std::size_t a = 0; a < 3; ++a) {
    per_axis[a].assign(dims[a], 0);
    for (std::size_t s : tile_starts(dims[a], cfg.patch_size[a], cfg.overlap)) {
      for (std::size_t i = s; i < std::min(dims[a], s + cfg.patch_size[a]); ++i) ++per_axis[a][i];
    }
  }
  std::vector<std::uint32_t> counts(dims[0] * dims[1] * dims[2]);
  std::size_t n = 0;
  for (std::size_t z = 0; z < dims[2]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[0]; ++x) counts[n++] = per_axis[0][x] * per_axis[1][y] * per_axis[2][z];
  return counts;
}

ProbabilityField predict_sliding_window(const PatchPredictor& predictor, std::span<const ImageVolume> channels,
                                        const SlidingWindowConfig& cfg) {
  check_channels(channels);
  const auto& g = channels.front().geometry;
  const Dims& p = cfg.patch_size;
  std::array<std::vector<std::size_t>, 3> starts;
  for (std::size_t a = 0; a < 3; ++a) starts[a] = tile_starts(g.dims[a], p[a], cfg.overlap);

  std::vector<double> sum(g.voxel_count(), 0.0);
  std::vector<std::uint32_t> count(g.voxel_count(), 0);
  for (std::size_t sz : starts[2]) {
    for (std::size_t sy : starts[1]) {
      for (std::size_t sx : starts[0]) {
        const std::array<std::size_t, 3> origin{sx, sy, sz};
        const Tensor out = predictor(extract_patch(channels, origin, p));
        if (out.channels != 1 || out.dims != p) throw Error(ErrorCode::ShapeMismatch, "predictor returned a wrong-shaped tile");
        for (std::size_t z = 0; z < p[2] && sz + z < g.dims[2]; ++z) {
          for (std::size_t y = 0; y < p[1] && sy + y < g.dims[1]; ++y) {
            const double* src = out.data.data() + (z * p[1] + y) * p[0];
            const std::size_t base = g.index(sx, sy + y, sz + z);
            for (std::size_t x = 0; x < p[0] && sx + x < g.dims[0]; ++x) {
              sum[base + x] += src[x];
              ++count[base + x];
            }
          }
        }
      }
    }
  }
  ProbabilityField field{g, std::move(sum)};
  for (std::size_t n = 0; n < field.values.size(); ++n) field.values[n] /= static_cast<double>(count[n]);
  return field;
}

ProbabilityField predict_sliding_window(const ToyUNet& model, std::span<const ImageVolume> channels, double overlap) {
  if (channels.size() != model.config().in_channels)
    throw Error(ErrorCode::ShapeMismatch, "study channel count differs from the model's");
  return predict_sliding_window([&](const Tensor& t) { return model.forward(t); }, channels,
                                {model.config().patch_size, overlap});
}

LabelVolume binarize(const ProbabilityField& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0,1)");
  LabelVolume out(p.geometry, 0, "binary");
  for (std::size_t n = 0; n < p.values.size(); ++n) out.labels[n] = p.values[n] >= threshold ? 1 : 0;
  return out;
}

}  // namespace mtseg
