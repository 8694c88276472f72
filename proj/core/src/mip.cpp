#include "mtseg/mip.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mtseg/error.hpp"

namespace mtseg {

MipImage coronal_mip(const ImageVolume& vol, std::string source_id) {
  if (!vol.geometry.orientation.is_canonical())
    throw Error(ErrorCode::NotCanonical, "coronal_mip needs an RAS volume");
  const auto [nx, ny, nz] = vol.geometry.dims;
  MipImage mip;
  mip.height = nz;
  mip.width = nx;
  mip.pixels.assign(nx * nz, 0.0);
  mip.source_id = std::move(source_id);
  for (std::size_t z = 0; z < nz; ++z) {
    double* row = &mip.pixels[(nz - 1 - z) * nx];
    for (std::size_t x = 0; x < nx; ++x) row[x] = vol.at(x, 0, z);
    for (std::size_t y = 1; y < ny; ++y) {
      const double* line = &vol.voxels[vol.geometry.index(0, y, z)];
      for (std::size_t x = 0; x < nx; ++x) row[x] = std::max(row[x], line[x]);
    }
  }
  return mip;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_pos = static_cast<double>(in - 1);
  for (std::size_t o = 0; o < out; ++o) {
    double pos = (static_cast<double>(o) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, max_pos);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

MipImage resize_mip(const MipImage& mip, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw Error(ErrorCode::InvalidArgument, "resize target must be >= 1");
  if (mip.height == 0 || mip.width == 0) throw Error(ErrorCode::InvalidArgument, "empty MIP");
  if (out_h == mip.height && out_w == mip.width) return mip;
  const auto rows = bilinear_taps(mip.height, out_h);
  const auto cols = bilinear_taps(mip.width, out_w);
  MipImage out = mip;
  out.height = out_h;
  out.width = out_w;
  out.pixels.assign(out_h * out_w, 0.0);
  for (std::size_t r = 0; r < out_h; ++r) {
    const auto& tr = rows[r];
    for (std::size_t c = 0; c < out_w; ++c) {
      const auto& tc = cols[c];
      const double top = mip.at(tr.lo, tc.lo) * (1.0 - tc.frac) + mip.at(tr.lo, tc.hi) * tc.frac;
      const double bottom = mip.at(tr.hi, tc.lo) * (1.0 - tc.frac) + mip.at(tr.hi, tc.hi) * tc.frac;
      out.at(r, c) = top * (1.0 - tr.frac) + bottom * tr.frac;
    }
  }
  return out;
}

MipImage normalize_mip(const MipImage& mip) {
  MipImage out = mip;
  out.normalized = true;
  out.degenerate = false;
  if (mip.pixels.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(mip.pixels.begin(), mip.pixels.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw Error(ErrorCode::NonFiniteVoxels, "MIP has non-finite pixels");
  if (hi - lo <= 0.0) {
    std::fill(out.pixels.begin(), out.pixels.end(), 0.0);
    out.degenerate = true;
    return out;
  }
  const double range = hi - lo;
  for (double& p : out.pixels) p = std::clamp((p - lo) / range, 0.0, 1.0);
  return out;
}

MipImage classification_input(const ImageVolume& canonical_pet, std::size_t size, std::string source_id) {
  return normalize_mip(resize_mip(coronal_mip(canonical_pet, std::move(source_id)), size, size));
}

void write_float_grid(const MipImage& mip, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << "MTSGPFG1 " << mip.height << ' ' << mip.width << '\n';
  for (double p : mip.pixels) {
    const auto f = static_cast<float>(p);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    const char le[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                        static_cast<char>((bits >> 16) & 0xff), static_cast<char>(bits >> 24)};
    out.write(le, 4);
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

MipImage read_float_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string magic;
  MipImage mip;
  header >> magic >> mip.height >> mip.width;
  if (!header || magic != "MTSGPFG1") throw Error(ErrorCode::MalformedHeader, "not a float grid: " + path.string());
  mip.pixels.resize(mip.height * mip.width);
  for (double& p : mip.pixels) {
    unsigned char le[4];
    if (!in.read(reinterpret_cast<char*>(le), 4)) throw Error(ErrorCode::MalformedHeader, "float grid truncated");
    const std::uint32_t bits = le[0] | (le[1] << 8) | (le[2] << 16) | (static_cast<std::uint32_t>(le[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    p = f;
  }
  return mip;
}

}  // namespace mtseg
