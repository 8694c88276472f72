#pragma once

// Brute-force reference implementations and fixtures shared by the test
// suites. Everything here is written independently of the library code it
// checks: no shared helpers, the simplest possible loops.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtseg/volume.hpp"

namespace oracle {

using mtseg::Dims;
using mtseg::Geometry;
using mtseg::ImageVolume;
using mtseg::Label;
using mtseg::LabelVolume;

inline Geometry grid(Dims d, mtseg::Vec3 spacing = {1.0, 1.0, 1.0}, mtseg::Vec3 origin = {0.0, 0.0, 0.0}) {
  Geometry g;
  g.dims = d;
  g.spacing = spacing;
  g.origin = origin;
  return g;
}

inline ImageVolume random_image(Dims d, std::uint64_t seed, double lo = 0.0, double hi = 1.0,
                                mtseg::Vec3 spacing = {1.0, 1.0, 1.0}) {
  ImageVolume v(grid(d, spacing), mtseg::Modality::PET, mtseg::IntensityUnit::SUV);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : v.voxels) x = u(rng);
  return v;
}

inline LabelVolume random_mask(Dims d, std::uint64_t seed, double density, mtseg::Vec3 spacing = {1.0, 1.0, 1.0}) {
  LabelVolume v(grid(d, spacing));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(density);
  for (auto& x : v.labels) x = b(rng) ? 1 : 0;
  return v;
}

inline std::vector<double> random_probabilities(std::size_t n, std::uint64_t seed, double lo = 0.02,
                                                double hi = 0.98) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> p(n);
  for (auto& x : p) x = u(rng);
  return p;
}

inline std::vector<double> random_binary(std::size_t n, std::uint64_t seed, double density = 0.3) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(density);
  std::vector<double> g(n);
  for (auto& x : g) x = b(rng) ? 1.0 : 0.0;
  return g;
}

/// Two voxels are neighbours when every coordinate differs by at most one and
/// the number of differing coordinates is at most 1 (6), 2 (18) or 3 (26).
inline bool adjacent(const Dims& d, std::size_t a, std::size_t b, int connectivity) {
  auto coords = [&](std::size_t n) {
    return std::array<long, 3>{static_cast<long>(n % d[0]), static_cast<long>((n / d[0]) % d[1]),
                               static_cast<long>(n / (d[0] * d[1]))};
  };
  const auto ca = coords(a), cb = coords(b);
  int differing = 0;
  for (int k = 0; k < 3; ++k) {
    const long diff = std::labs(ca[k] - cb[k]);
    if (diff > 1) return false;
    differing += diff == 1;
  }
  const int limit = connectivity == 6 ? 1 : connectivity == 18 ? 2 : 3;
  return differing >= 1 && differing <= limit;
}

/// Partition of foreground voxels by repeated O(n^2) flood fill.
inline std::set<std::set<std::size_t>> flood_fill_partition(const LabelVolume& m, int connectivity) {
  std::vector<std::size_t> fg;
  for (std::size_t n = 0; n < m.labels.size(); ++n)
    if (m.labels[n] != 0) fg.push_back(n);
  std::vector<int> comp(fg.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < fg.size(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t a = 0; a < fg.size(); ++a) {
        if (comp[a] != next) continue;
        for (std::size_t b = 0; b < fg.size(); ++b)
          if (comp[b] < 0 && adjacent(m.geometry.dims, fg[a], fg[b], connectivity)) {
            comp[b] = next;
            grew = true;
          }
      }
    }
    ++next;
  }
  std::map<int, std::set<std::size_t>> groups;
  for (std::size_t s = 0; s < fg.size(); ++s) groups[comp[s]].insert(fg[s]);
  std::set<std::set<std::size_t>> out;
  for (auto& [k, v] : groups) out.insert(v);
  return out;
}

/// Set-arithmetic Dice: 2|P & G| / (|P| + |G|), 1 for two empty masks.
inline double dice(const LabelVolume& p, const LabelVolume& g) {
  std::set<std::size_t> P, G, I;
  for (std::size_t n = 0; n < p.labels.size(); ++n) {
    if (p.labels[n]) P.insert(n);
    if (g.labels[n]) G.insert(n);
  }
  std::set_intersection(P.begin(), P.end(), G.begin(), G.end(), std::inserter(I, I.begin()));
  if (P.empty() && G.empty()) return 1.0;
  return 2.0 * static_cast<double>(I.size()) / static_cast<double>(P.size() + G.size());
}

/// Voxel count of predicted components that touch no ground-truth voxel
/// (component mode) or of pred minus gt (voxelwise), in mL.
inline double false_volume(const LabelVolume& p, const LabelVolume& g, bool component, int connectivity) {
  const double ml = p.geometry.spacing[0] * p.geometry.spacing[1] * p.geometry.spacing[2] / 1000.0;
  std::size_t count = 0;
  if (component) {
    for (const auto& c : flood_fill_partition(p, connectivity)) {
      bool hit = false;
      for (auto n : c) hit = hit || g.labels[n] != 0;
      if (!hit) count += c.size();
    }
  } else {
    for (std::size_t n = 0; n < p.labels.size(); ++n) count += p.labels[n] && !g.labels[n];
  }
  return static_cast<double>(count) * ml;
}

/// Coronal MIP by direct max over y, indexed [x][z].
inline std::vector<std::vector<double>> mip_xz(const ImageVolume& v) {
  const auto& d = v.geometry.dims;
  std::vector<std::vector<double>> out(d[0], std::vector<double>(d[2], -INFINITY));
  for (std::size_t x = 0; x < d[0]; ++x)
    for (std::size_t z = 0; z < d[2]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y) out[x][z] = std::max(out[x][z], v.voxels[x + d[0] * (y + d[1] * z)]);
  return out;
}

/// Mean binary cross-entropy with clamping to [delta, 1 - delta].
inline double cross_entropy(const std::vector<double>& p, const std::vector<double>& g, double delta = 1e-7) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::min(std::max(p[i], delta), 1.0 - delta);
    s += -(g[i] * std::log(q) + (1.0 - g[i]) * std::log(1.0 - q));
  }
  return s / static_cast<double>(p.size());
}

template <class F>
std::vector<double> central_differences(F&& f, std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  return worst;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "mtseg-test-XXXXXX").string();
    path_ = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline void write_script(const std::filesystem::path& p, const std::string& body) {
  write_file(p, "#!/bin/sh\n" + body + "\n");
  std::filesystem::permissions(p, std::filesystem::perms::owner_all);
}

}  // namespace oracle
