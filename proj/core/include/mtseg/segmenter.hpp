#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mtseg/loss.hpp"
#include "mtseg/network.hpp"
#include "mtseg/volume.hpp"

namespace mtseg {

struct PatchBatch {
  std::vector<Tensor> images;                 // one tensor per patch, channels = image channels
  std::vector<std::vector<double>> labels;    // binary lesion values per patch, x fastest
  std::vector<std::array<std::size_t, 3>> origins;  // low corner in the (padded) volume
  std::vector<bool> foreground;               // true when the patch was forced onto a lesion voxel
  Dims patch_size{0, 0, 0};
  std::uint64_t seed = 0;
};

struct PatchSampling {
  Dims patch_size{32, 32, 32};
  double foreground_fraction = 0.5;
  std::size_t count = 1;
  std::uint64_t seed = 0;
};

/// Draws `count` patches. The first ceil(foreground_fraction * count) patches
/// are centred near a uniformly chosen lesion voxel (a uniform offset keeps
/// the voxel inside the patch); the rest are uniform over valid origins.
/// Volumes smaller than the patch are zero-padded at the high end.
///
/// Errors: EmptyVolume, GeometryMismatch.
PatchBatch sample_patches(std::span<const ImageVolume> channels, const LabelVolume& lesion_mask,
                          const PatchSampling& sampling);

struct TrainingCase {
  ImageVolume pet;  // preprocessed, same geometry as ct and lesion
  ImageVolume ct;
  LabelVolume lesion;
};

struct TrainConfig {
  static constexpr std::size_t kFullScaleEpochs = 1000;

  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  double learning_rate = 0.01;
  double foreground_fraction = 0.5;
  std::uint64_t seed = 0;
  LossParams loss;
  /// Patches of one batch evaluated concurrently; does not affect results.
  std::size_t workers = 1;
};

void validate(const TrainConfig& cfg);

struct TrainResult {
  ToyUNet model;
  /// Compound loss of the model on a fixed monitoring batch (one patch per
  /// case, drawn once from the seed): entry 0 before training, entry e after
  /// epoch e.
  std::vector<double> loss_curve;
};

/// Plain SGD on the compound loss. Every step draws batch_size fresh patches,
/// one per case in a seeded shuffled order; Dice terms are pooled over the
/// whole batch and the focal term is averaged over all batch voxels.
///
/// Errors: EmptyDataset, DivergenceDetected (non-finite loss).
TrainResult train(const SegmenterConfig& model_cfg, std::span<const TrainingCase> dataset, const TrainConfig& cfg);

/// Batch loss and its parameter gradient for one set of patches; exposed for
/// gradient checks.
double batch_loss_and_gradient(const ToyUNet& model, const PatchBatch& batch, const LossParams& loss,
                               std::vector<std::vector<double>>* grads, std::size_t workers = 1);

using PatchPredictor = std::function<Tensor(const Tensor& patch)>;

struct SlidingWindowConfig {
  Dims patch_size{32, 32, 32};
  double overlap = 0.5;
};

/// Tile origins along one axis: 0, step, 2*step, ... with the last tile
/// flush against the far edge; step = max(1, floor(patch * (1 - overlap))).
std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t patch, double overlap);

/// Number of tiles covering each voxel (x fastest).
std::vector<std::uint32_t> coverage_counts(const Dims& dims, const SlidingWindowConfig& cfg);

/// Tiles the (zero-padded if needed) volume, runs `predictor` on each tile in
/// z-, y-, x-major order and averages overlapping outputs with uniform weights.
ProbabilityField predict_sliding_window(const PatchPredictor& predictor, std::span<const ImageVolume> channels,
                                        const SlidingWindowConfig& cfg);
ProbabilityField predict_sliding_window(const ToyUNet& model, std::span<const ImageVolume> channels,
                                        double overlap = 0.5);

/// 1 where p >= threshold, else 0. Throws InvalidArgument unless threshold is
/// in (0, 1).
LabelVolume binarize(const ProbabilityField& p, double threshold = 0.5);

/// Versioned little-endian container:
///   "MTSGCKPT" | u32 version=1 | u32 in_channels | u32 levels | u32 widths[levels]
///   | u32 patch[3] | u64 seed | u32 tensor_count
///   | per tensor: u32 name_len, name bytes, u32 ndim, u32 shape[ndim], f64 values (row-major)
void save_checkpoint(const ToyUNet& model, const std::filesystem::path& path);
ToyUNet load_checkpoint(const std::filesystem::path& path);

}  // namespace mtseg
