#include <algorithm>

#include "mtseg/classifier.hpp"
#include "mtseg/error.hpp"
#include "mtseg/numeric.hpp"

namespace mtseg {

std::array<std::string_view, FeatureVector::kSize> FeatureVector::names() {
  return {"p50", "p75", "p90", "p95", "p99", "frac_above_0.2", "frac_above_0.4", "frac_above_0.6",
          "frac_above_0.8", "high_row_com", "high_row_clusters"};
}

FeatureVector extract_features(const MipImage& mip) {
  if (mip.pixels.empty() || mip.pixels.size() != mip.height * mip.width)
    throw Error(ErrorCode::InvalidArgument, "MIP shape does not match its pixel count");
  for (double p : mip.pixels) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::NotNormalized, "pixel outside [0,1]");
  }

  FeatureVector f;
  std::vector<double> sorted = mip.pixels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t n = 0; n < FeatureVector::kPercentiles.size(); ++n)
    f.values[n] = percentile_sorted(sorted, FeatureVector::kPercentiles[n]);

  const auto total = static_cast<double>(sorted.size());
  for (std::size_t n = 0; n < FeatureVector::kThresholds.size(); ++n) {
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), FeatureVector::kThresholds[n]);
    f.values[5 + n] = static_cast<double>(above) / total;
  }

  double row_sum = 0.0;
  std::size_t hot = 0;
  std::size_t clusters = 0;
  bool in_cluster = false;
  for (std::size_t r = 0; r < mip.height; ++r) {
    std::size_t hot_in_row = 0;
    for (std::size_t c = 0; c < mip.width; ++c) {
      if (mip.at(r, c) > FeatureVector::kHighIntensity) ++hot_in_row;
    }
    if (hot_in_row > 0 && !in_cluster) ++clusters;
    in_cluster = hot_in_row > 0;
    hot += hot_in_row;
    row_sum += static_cast<double>(hot_in_row) * (static_cast<double>(r) + 0.5);
  }
  f.values[9] = hot > 0 ? row_sum / (static_cast<double>(hot) * static_cast<double>(mip.height)) : 0.5;
  f.values[10] = static_cast<double>(clusters);
  return f;
}

}  // namespace mtseg
