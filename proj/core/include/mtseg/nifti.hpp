#pragma once

#include <filesystem>

#include "mtseg/volume.hpp"

namespace mtseg {

enum class ImageStorage { Float32, Float64 };

/// Reads a 3D NIfTI-1 volume (.nii or .nii.gz). Geometry comes from the sform
/// when present, then the qform, then pixdim. Intensities are converted to
/// double after applying scl_slope/scl_inter.
///
/// Errors: FileNotFound, MalformedHeader, NonFiniteVoxels.
ImageVolume read_volume(const std::filesystem::path& path);

/// Reads an integer-valued NIfTI-1 volume as labels. Non-integer, negative or
/// out-of-range values are MalformedHeader.
LabelVolume read_label_volume(const std::filesystem::path& path);

/// Images are stored as float32 by default, labels as uint8 (or uint16 when a
/// label exceeds 255). A ".gz" suffix selects gzip compression. Spacing and
/// origin are also written at full double precision in a comment extension so
/// they survive a round trip bit-exactly.
///
/// Errors: IoFailure.
void write_volume(const ImageVolume& vol, const std::filesystem::path& path,
                  ImageStorage storage = ImageStorage::Float32);
void write_volume(const LabelVolume& vol, const std::filesystem::path& path);

}  // namespace mtseg
