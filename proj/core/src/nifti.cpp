#include "mtseg/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mtseg/error.hpp"

namespace mtseg {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kCommentCode = 6;
constexpr std::string_view kGeometryTag = "mtseg-geometry v1";

enum DataType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
  kInt64 = 1024,
  kUInt64 = 1280,
};

// Field offsets inside the 348-byte header.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace off

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    if (offset + sizeof(T) > bytes_.size()) throw Error(ErrorCode::MalformedHeader, "truncated file");
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  bool swap_;
};

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(ErrorCode::FileNotFound, path.string());
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw Error(ErrorCode::FileNotFound, path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  for (;;) {
    const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(f);
      throw Error(ErrorCode::MalformedHeader, "corrupt compressed stream: " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(f);
  return out;
}

bool is_gz(const std::filesystem::path& path) { return path.extension() == ".gz"; }

void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  const auto parent = path.parent_path();
  std::error_code ec;
  if (!parent.empty() && !std::filesystem::is_directory(parent, ec))
    throw Error(ErrorCode::IoFailure, "parent directory missing: " + parent.string());
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (f == nullptr) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int rc = gzclose(f);
    if (n != static_cast<int>(bytes.size()) || rc != Z_OK)
      throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
    return;
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const auto n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  const int rc = std::fclose(f);
  if (n != bytes.size() || rc != 0) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

struct Affine {
  std::array<std::array<double, 4>, 3> m{};
};

Affine qform_affine(const ByteReader& r) {
  const double b = r.get<float>(off::quatern_b);
  const double c = r.get<float>(off::quatern_b + 4);
  const double d = r.get<float>(off::quatern_b + 8);
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  double qfac = r.get<float>(off::pixdim);
  if (qfac == 0.0) qfac = 1.0;
  const std::array<double, 3> px{r.get<float>(off::pixdim + 4), r.get<float>(off::pixdim + 8),
                                 r.get<float>(off::pixdim + 12) * qfac};
  const double rot[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
  Affine aff;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) aff.m[row][col] = rot[row][col] * px[col];
    aff.m[row][3] = r.get<float>(off::qoffset_x + 4 * row);
  }
  return aff;
}

Geometry geometry_from_affine(const Affine& aff, const Dims& dims) {
  Geometry g;
  g.dims = dims;
  std::array<AxisDirection, 3> axes;
  for (int col = 0; col < 3; ++col) {
    double norm2 = 0.0;
    int best = 0;
    for (int row = 0; row < 3; ++row) {
      norm2 += aff.m[row][col] * aff.m[row][col];
      if (std::abs(aff.m[row][col]) > std::abs(aff.m[best][col])) best = row;
    }
    g.spacing[col] = std::sqrt(norm2);
    axes[col] = {best, aff.m[best][col] >= 0.0 ? 1 : -1};
  }
  try {
    g.orientation = Orientation(axes);
  } catch (const Error&) {
    throw Error(ErrorCode::MalformedHeader, "affine columns do not span distinct axes");
  }
  for (int row = 0; row < 3; ++row) g.origin[row] = aff.m[row][3];
  return g;
}

// Replaces float-rounded spacing/origin with the exact values stored in our
// comment extension, provided they agree with the header at float precision.
void apply_geometry_extension(const std::vector<std::uint8_t>& bytes, const ByteReader& r,
                              std::size_t vox_offset, Geometry& g) {
  if (bytes.size() < 352 || bytes[348] == 0) return;
  std::size_t pos = 352;
  while (pos + 8 <= vox_offset) {
    const auto esize = r.get<std::int32_t>(pos);
    const auto ecode = r.get<std::int32_t>(pos + 4);
    if (esize < 8 || pos + static_cast<std::size_t>(esize) > vox_offset) return;
    if (ecode == kCommentCode) {
      std::string text(reinterpret_cast<const char*>(bytes.data() + pos + 8),
                       static_cast<std::size_t>(esize - 8));
      text = text.c_str();
      if (text.rfind(kGeometryTag, 0) == 0) {
        std::istringstream in(text.substr(kGeometryTag.size()));
        Vec3 sp{}, org{};
        in >> sp[0] >> sp[1] >> sp[2] >> org[0] >> org[1] >> org[2];
        if (!in) return;
        for (std::size_t a = 0; a < 3; ++a) {
          if (static_cast<float>(sp[a]) != static_cast<float>(g.spacing[a])) return;
          if (static_cast<float>(org[a]) != static_cast<float>(g.origin[a])) return;
        }
        g.spacing = sp;
        g.origin = org;
        return;
      }
    }
    pos += static_cast<std::size_t>(esize);
  }
}

struct RawVolume {
  Geometry geometry;
  std::vector<double> values;
  std::string descrip;
};

RawVolume read_raw(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::MalformedHeader, "file shorter than header");
  bool swap = false;
  {
    ByteReader probe(bytes, false);
    const auto sz = probe.get<std::int32_t>(off::sizeof_hdr);
    if (sz != kHeaderSize) {
      const auto u = static_cast<std::uint32_t>(sz);
      const auto swapped = static_cast<std::int32_t>((u >> 24) | ((u >> 8) & 0xff00u) |
                                                     ((u << 8) & 0xff0000u) | (u << 24));
      if (swapped != kHeaderSize) throw Error(ErrorCode::MalformedHeader, "sizeof_hdr != 348");
      swap = true;
    }
  }
  ByteReader r(bytes, swap);
  if (std::memcmp(bytes.data() + off::magic, "n+1", 4) != 0)
    throw Error(ErrorCode::MalformedHeader, "not a single-file NIfTI-1 image");

  const auto ndim = r.get<std::int16_t>(off::dim);
  if (ndim < 2 || ndim > 7) throw Error(ErrorCode::MalformedHeader, "dim[0] out of range");
  Dims dims{1, 1, 1};
  for (int a = 0; a < ndim; ++a) {
    const auto n = r.get<std::int16_t>(off::dim + 2 * (a + 1));
    if (n < 1) throw Error(ErrorCode::MalformedHeader, "non-positive dimension");
    if (a < 3) {
      dims[static_cast<std::size_t>(a)] = static_cast<std::size_t>(n);
    } else if (n != 1) {
      throw Error(ErrorCode::MalformedHeader, "only 3D volumes are supported");
    }
  }

  Geometry g;
  if (r.get<std::int16_t>(off::sform_code) > 0) {
    Affine aff;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 4; ++col) aff.m[row][col] = r.get<float>(off::srow_x + 16 * row + 4 * col);
    g = geometry_from_affine(aff, dims);
  } else if (r.get<std::int16_t>(off::qform_code) > 0) {
    g = geometry_from_affine(qform_affine(r), dims);
  } else {
    g.dims = dims;
    for (std::size_t a = 0; a < 3; ++a) g.spacing[a] = r.get<float>(off::pixdim + 4 * (a + 1));
  }
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(std::isfinite(g.spacing[a]) && g.spacing[a] > 0.0))
      throw Error(ErrorCode::MalformedHeader, "invalid voxel spacing");
  }

  const double vox_offset_f = r.get<float>(off::vox_offset);
  if (!(vox_offset_f >= kHeaderSize)) throw Error(ErrorCode::MalformedHeader, "bad vox_offset");
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
  apply_geometry_extension(bytes, r, vox_offset, g);

  const auto dtype = r.get<std::int16_t>(off::datatype);
  const std::size_t count = g.voxel_count();
  std::size_t width = 0;
  switch (dtype) {
    case kUInt8: case kInt8: width = 1; break;
    case kInt16: case kUInt16: width = 2; break;
    case kInt32: case kUInt32: case kFloat32: width = 4; break;
    case kFloat64: case kInt64: case kUInt64: width = 8; break;
    default: throw Error(ErrorCode::MalformedHeader, "unsupported datatype " + std::to_string(dtype));
  }
  if (bytes.size() < vox_offset + count * width)
    throw Error(ErrorCode::MalformedHeader, "voxel data truncated");

  double slope = r.get<float>(off::scl_slope);
  double inter = r.get<float>(off::scl_inter);
  const bool scaled = std::isfinite(slope) && slope != 0.0 && !(slope == 1.0 && inter == 0.0);
  if (!scaled) {
    slope = 1.0;
    inter = 0.0;
  }

  RawVolume out;
  out.values.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t p = vox_offset + n * width;
    double v = 0.0;
    switch (dtype) {
      case kUInt8: v = r.get<std::uint8_t>(p); break;
      case kInt8: v = r.get<std::int8_t>(p); break;
      case kInt16: v = r.get<std::int16_t>(p); break;
      case kUInt16: v = r.get<std::uint16_t>(p); break;
      case kInt32: v = r.get<std::int32_t>(p); break;
      case kUInt32: v = r.get<std::uint32_t>(p); break;
      case kFloat32: v = r.get<float>(p); break;
      case kFloat64: v = r.get<double>(p); break;
      case kInt64: v = static_cast<double>(r.get<std::int64_t>(p)); break;
      case kUInt64: v = static_cast<double>(r.get<std::uint64_t>(p)); break;
    }
    v = v * slope + inter;
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteVoxels, path.string());
    out.values[n] = v;
  }
  out.geometry = g;
  const char* d = reinterpret_cast<const char*>(bytes.data() + off::descrip);
  out.descrip.assign(d, strnlen(d, 80));
  return out;
}

std::vector<std::uint8_t> make_header(const Geometry& g, std::int16_t dtype, std::int16_t bitpix,
                                      const std::string& descrip) {
  std::ostringstream text;
  text.precision(17);
  text << kGeometryTag;
  for (double s : g.spacing) text << ' ' << s;
  for (double o : g.origin) text << ' ' << o;
  std::string payload = text.str();
  const std::size_t esize = ((payload.size() + 1 + 8 + 15) / 16) * 16;
  const std::size_t vox_offset = 352 + esize;

  std::vector<std::uint8_t> buf(vox_offset, 0);
  put<std::int32_t>(buf, off::sizeof_hdr, kHeaderSize);
  put<std::int16_t>(buf, off::dim, 3);
  for (std::size_t a = 0; a < 3; ++a) {
    if (g.dims[a] > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max()))
      throw Error(ErrorCode::IoFailure, "dimension too large for NIfTI-1");
    put<std::int16_t>(buf, off::dim + 2 * (a + 1), static_cast<std::int16_t>(g.dims[a]));
  }
  for (std::size_t a = 3; a < 7; ++a) put<std::int16_t>(buf, off::dim + 2 * (a + 1), 1);
  put<std::int16_t>(buf, off::datatype, dtype);
  put<std::int16_t>(buf, off::bitpix, bitpix);
  put<float>(buf, off::pixdim, 1.0f);
  for (std::size_t a = 0; a < 3; ++a) put<float>(buf, off::pixdim + 4 * (a + 1), static_cast<float>(g.spacing[a]));
  put<float>(buf, off::vox_offset, static_cast<float>(vox_offset));
  put<float>(buf, off::scl_slope, 1.0f);
  put<float>(buf, off::scl_inter, 0.0f);
  buf[off::xyzt_units] = 2;  // millimeters
  std::memcpy(buf.data() + off::descrip, descrip.data(), std::min<std::size_t>(descrip.size(), 79));
  put<std::int16_t>(buf, off::qform_code, 0);
  put<std::int16_t>(buf, off::sform_code, 1);
  for (std::size_t a = 0; a < 3; ++a) {
    const auto& d = g.orientation[a];
    const auto row = static_cast<std::size_t>(d.world_axis);
    put<float>(buf, off::srow_x + 16 * row + 4 * a, static_cast<float>(g.spacing[a] * d.sign));
  }
  for (std::size_t row = 0; row < 3; ++row) put<float>(buf, off::srow_x + 16 * row + 12, static_cast<float>(g.origin[row]));
  std::memcpy(buf.data() + off::magic, "n+1", 4);

  buf[348] = 1;
  put<std::int32_t>(buf, 352, static_cast<std::int32_t>(esize));
  put<std::int32_t>(buf, 356, kCommentCode);
  std::memcpy(buf.data() + 360, payload.data(), payload.size());
  return buf;
}

template <typename T>
void append_values(std::vector<std::uint8_t>& buf, const auto& values) {
  const std::size_t start = buf.size();
  buf.resize(start + values.size() * sizeof(T));
  for (std::size_t n = 0; n < values.size(); ++n) {
    const T v = static_cast<T>(values[n]);
    std::memcpy(buf.data() + start + n * sizeof(T), &v, sizeof(T));
  }
}

void parse_descrip(const std::string& descrip, ImageVolume& vol) {
  std::istringstream in(descrip);
  std::string tag, modality, unit;
  in >> tag >> modality >> unit;
  if (tag != "mtseg") return;
  if (modality == "CT") vol.modality = Modality::CT;
  if (unit == "HU") vol.unit = IntensityUnit::HU;
  if (unit == "normalized") vol.unit = IntensityUnit::Normalized;
}

}  // namespace

ImageVolume read_volume(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  ImageVolume vol;
  vol.geometry = raw.geometry;
  vol.voxels = std::move(raw.values);
  parse_descrip(raw.descrip, vol);
  return vol;
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  LabelVolume vol;
  vol.geometry = raw.geometry;
  vol.labels.resize(raw.values.size());
  for (std::size_t n = 0; n < raw.values.size(); ++n) {
    const double v = raw.values[n];
    if (v < 0.0 || v > std::numeric_limits<Label>::max() || v != std::floor(v))
      throw Error(ErrorCode::MalformedHeader, "label volume holds non-label value: " + path.string());
    vol.labels[n] = static_cast<Label>(v);
  }
  std::istringstream in(raw.descrip);
  std::string tag, kind, schema;
  in >> tag >> kind >> schema;
  if (tag == "mtseg" && kind == "labels" && !schema.empty()) vol.schema_id = schema;
  return vol;
}

void write_volume(const ImageVolume& vol, const std::filesystem::path& path, ImageStorage storage) {
  const std::string descrip =
      "mtseg " + std::string(to_string(vol.modality)) + " " + std::string(to_string(vol.unit));
  if (storage == ImageStorage::Float64) {
    auto buf = make_header(vol.geometry, kFloat64, 64, descrip);
    append_values<double>(buf, vol.voxels);
    spill(path, buf);
  } else {
    auto buf = make_header(vol.geometry, kFloat32, 32, descrip);
    append_values<float>(buf, vol.voxels);
    spill(path, buf);
  }
}

void write_volume(const LabelVolume& vol, const std::filesystem::path& path) {
  const Label max = vol.labels.empty() ? 0 : *std::max_element(vol.labels.begin(), vol.labels.end());
  const std::string descrip = "mtseg labels " + vol.schema_id;
  if (max <= 255) {
    auto buf = make_header(vol.geometry, kUInt8, 8, descrip);
    append_values<std::uint8_t>(buf, vol.labels);
    spill(path, buf);
  } else {
    auto buf = make_header(vol.geometry, kUInt16, 16, descrip);
    append_values<std::uint16_t>(buf, vol.labels);
    spill(path, buf);
  }
}

}  // namespace mtseg
