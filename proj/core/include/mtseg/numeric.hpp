#pragma once

#include <cstddef>
#include <span>

namespace mtseg {

/// Pairwise summation over fixed 256-element leaf blocks. The split points
/// depend only on the length, so results are bit-reproducible regardless of
/// how callers partition work.
double pairwise_sum(std::span<const double> values);

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::span<const double> values, double q);

/// Same as percentile() for a sample already sorted ascending.
double percentile_sorted(std::span<const double> sorted, double q);

}  // namespace mtseg
