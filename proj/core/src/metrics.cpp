#include "mtseg/metrics.hpp"

#include <algorithm>
#include <cstdlib>

#include "mtseg/error.hpp"

namespace mtseg {

std::string_view to_string(FalseVolumeMode m) { return m == FalseVolumeMode::Component ? "component" : "voxelwise"; }

FalseVolumeMode parse_false_volume_mode(std::string_view text) {
  if (text == "component") return FalseVolumeMode::Component;
  if (text == "voxelwise") return FalseVolumeMode::Voxelwise;
  throw Error(ErrorCode::InvalidArgument, "mode must be 'component' or 'voxelwise'");
}

Connectivity parse_connectivity(int value) {
  switch (value) {
    case 6: return Connectivity::Six;
    case 18: return Connectivity::Eighteen;
    case 26: return Connectivity::TwentySix;
    default: throw Error(ErrorCode::InvalidArgument, "connectivity must be 6, 18 or 26");
  }
}

std::vector<std::array<int, 3>> neighbour_offsets(Connectivity c) {
  const int limit = c == Connectivity::Six ? 1 : c == Connectivity::Eighteen ? 2 : 3;
  std::vector<std::array<int, 3>> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan > 0 && manhattan <= limit) out.push_back({dx, dy, dz});
      }
  return out;
}

ComponentSet connected_components(const LabelVolume& mask, Connectivity connectivity) {
  const auto& g = mask.geometry;
  const auto offsets = neighbour_offsets(connectivity);
  const auto nx = static_cast<long>(g.dims[0]);
  const auto ny = static_cast<long>(g.dims[1]);
  const auto nz = static_cast<long>(g.dims[2]);
  std::vector<bool> visited(mask.labels.size(), false);
  ComponentSet set;
  set.connectivity = connectivity;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.labels.size(); ++seed) {
    if (mask.labels[seed] == 0 || visited[seed]) continue;
    std::vector<std::size_t> comp;
    visited[seed] = true;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      const long x = static_cast<long>(v % g.dims[0]);
      const long y = static_cast<long>((v / g.dims[0]) % g.dims[1]);
      const long z = static_cast<long>(v / (g.dims[0] * g.dims[1]));
      for (const auto& o : offsets) {
        const long xx = x + o[0], yy = y + o[1], zz = z + o[2];
        if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
        const auto w = static_cast<std::size_t>(xx + nx * (yy + ny * zz));
        if (mask.labels[w] == 0 || visited[w]) continue;
        visited[w] = true;
        stack.push_back(w);
      }
    }
    std::sort(comp.begin(), comp.end());
    set.components.push_back(std::move(comp));
  }
  return set;
}

double dice_score(const LabelVolume& pred, const LabelVolume& gt) {
  require_same_geometry(pred.geometry, gt.geometry, "prediction and ground truth geometry differ");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t n = 0; n < pred.labels.size(); ++n) {
    const bool a = pred.labels[n] != 0;
    const bool b = gt.labels[n] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

namespace {

// Volume of `a` not explained by `b`.
double false_volume(const LabelVolume& a, const LabelVolume& b, FalseVolumeMode mode, Connectivity connectivity) {
  require_same_geometry(a.geometry, b.geometry, "prediction and ground truth geometry differ");
  std::size_t voxels = 0;
  if (mode == FalseVolumeMode::Voxelwise) {
    for (std::size_t n = 0; n < a.labels.size(); ++n) voxels += a.labels[n] != 0 && b.labels[n] == 0;
  } else {
    for (const auto& comp : connected_components(a, connectivity).components) {
      const bool touches = std::any_of(comp.begin(), comp.end(), [&](std::size_t v) { return b.labels[v] != 0; });
      if (!touches) voxels += comp.size();
    }
  }
  return static_cast<double>(voxels) * voxel_volume_ml(a.geometry);
}

}  // namespace

double fp_volume(const LabelVolume& pred, const LabelVolume& gt, FalseVolumeMode mode, Connectivity connectivity) {
  return false_volume(pred, gt, mode, connectivity);
}

double fn_volume(const LabelVolume& pred, const LabelVolume& gt, FalseVolumeMode mode, Connectivity connectivity) {
  return false_volume(gt, pred, mode, connectivity);
}

EvalReport evaluate_study(const LabelVolume& pred, const LabelVolume& gt, FalseVolumeMode mode, std::string study_id,
                          Connectivity connectivity) {
  EvalReport r;
  r.study_id = std::move(study_id);
  r.mode = mode;
  r.dice = dice_score(pred, gt);
  r.fpvol_ml = fp_volume(pred, gt, mode, connectivity);
  r.fnvol_ml = fn_volume(pred, gt, mode, connectivity);
  return r;
}

EvalSummary aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyReportList, "nothing to aggregate");
  EvalSummary s;
  s.studies = reports.size();
  for (const auto& r : reports) {
    s.mean_dice += r.dice;
    s.mean_fpvol_ml += r.fpvol_ml;
    s.mean_fnvol_ml += r.fnvol_ml;
  }
  const auto n = static_cast<double>(reports.size());
  s.mean_dice /= n;
  s.mean_fpvol_ml /= n;
  s.mean_fnvol_ml /= n;
  return s;
}

}  // namespace mtseg
