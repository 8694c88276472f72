#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "mtseg/error.hpp"
#include "mtseg/mip.hpp"

namespace mtseg {

void write_mip_png(const MipImage& mip, const std::filesystem::path& path) {
  if (mip.pixels.empty()) throw Error(ErrorCode::InvalidArgument, "empty MIP");
  const auto [lo_it, hi_it] = std::minmax_element(mip.pixels.begin(), mip.pixels.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<png_byte> rows(mip.pixels.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const double t = range > 0.0 ? (mip.pixels[n] - lo) / range : 0.0;
    rows[n] = static_cast<png_byte>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }

  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(mip.width), static_cast<png_uint_32>(mip.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < mip.height; ++r) png_write_row(png, &rows[r * mip.width]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mtseg
