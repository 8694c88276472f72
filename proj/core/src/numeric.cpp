#include "mtseg/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtseg/error.hpp"

namespace mtseg {

namespace {
constexpr std::size_t kLeaf = 256;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= kLeaf) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  // Split at a multiple of the leaf size so leaves stay aligned.
  std::size_t half = values.size() / 2;
  half = ((half + kLeaf - 1) / kLeaf) * kLeaf;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidArgument, "percentile outside [0,100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, q);
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidArgument, "percentile outside [0,100]");
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace mtseg
