#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mtseg/volume.hpp"

namespace mtseg {

enum class ProjectionAxis { AnteriorPosterior };

/// Row-major 2D image. Row 0 is the most superior row, column 0 the most
/// right-ward column of the canonical volume.
struct MipImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  ProjectionAxis projection_axis = ProjectionAxis::AnteriorPosterior;
  std::string source_id;
  bool normalized = false;
  /// Set by normalize_mip when the input was constant.
  bool degenerate = false;

  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  /// Pixel addressed by the volume's (x, z) voxel coordinates.
  double at_xz(std::size_t x, std::size_t z) const { return at(height - 1 - z, x); }
};

inline constexpr std::size_t kDefaultMipSize = 640;

/// Coronal maximum-intensity projection: pixel (x, z) = max_y vol(x, y, z).
/// Throws NotCanonical unless the volume is RAS.
MipImage coronal_mip(const ImageVolume& vol, std::string source_id = {});

/// Bilinear resampling with pixel-center alignment and clamp-to-edge.
MipImage resize_mip(const MipImage& mip, std::size_t out_h, std::size_t out_w);

/// Per-image min-max scaling to [0, 1]. A constant image maps to zeros and
/// sets the degenerate flag.
MipImage normalize_mip(const MipImage& mip);

/// coronal_mip -> resize_mip -> normalize_mip.
MipImage classification_input(const ImageVolume& canonical_pet, std::size_t size = kDefaultMipSize,
                              std::string source_id = {});

/// 8-bit grayscale PNG with linear scaling from [min, max] to [0, 255].
void write_mip_png(const MipImage& mip, const std::filesystem::path& path);

/// Portable float grid used by external classifier adapters:
/// ASCII line "MTSGPFG1 <height> <width>\n" followed by height*width
/// little-endian float32 values in row-major order.
void write_float_grid(const MipImage& mip, const std::filesystem::path& path);
MipImage read_float_grid(const std::filesystem::path& path);

}  // namespace mtseg
