// Grayscale SLIC superpixels in (intensity, x, y) space with a connectivity
// post-pass.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cgn/errors.hpp"
#include "cgn/image.hpp"

namespace cgn {

struct SegmentStats {
  std::size_t area = 0;
  double cx = 0.0;  // pixel coordinates, pixel centres at integers
  double cy = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // population variance of intensities
};

struct SuperpixelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> labels;  // row-major, 0..K-1
  std::vector<SegmentStats> stats;

  std::size_t num_segments() const noexcept { return stats.size(); }
  int at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }

  /// Pixel indices of one segment in raster order.
  std::vector<std::size_t> pixels_of(int segment) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == segment) out.push_back(i);
    return out;
  }
};

struct SlicConfig {
  std::size_t k = 100;
  double compactness = 20.0;
  std::size_t iterations = 10;
};

/// Recomputes per-segment stats from the label grid. Labels must be 0..K-1.
inline std::vector<SegmentStats> segment_stats(const GrayImage& img, const std::vector<int>& labels,
                                               std::size_t k) {
  std::vector<SegmentStats> st(k);
  std::vector<double> sx(k, 0.0), sy(k, 0.0), si(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    ++st[l].area;
    sx[l] += static_cast<double>(i % img.width);
    sy[l] += static_cast<double>(i / img.width);
    si[l] += img.pixels[i];
  }
  for (std::size_t l = 0; l < k; ++l) {
    if (st[l].area == 0) continue;
    const double a = static_cast<double>(st[l].area);
    st[l].cx = sx[l] / a;
    st[l].cy = sy[l] / a;
    st[l].mean = si[l] / a;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    const double d = img.pixels[i] - st[l].mean;
    st[l].variance += d * d;
  }
  for (auto& s : st)
    if (s.area) s.variance /= static_cast<double>(s.area);
  return st;
}

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
};

// 4-connected components of the label grid; returns component id per pixel.
inline std::vector<std::size_t> components(const std::vector<int>& labels, std::size_t w, std::size_t h,
                                           std::size_t& count) {
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> comp(labels.size(), kUnset);
  std::vector<std::size_t> stack;
  count = 0;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (comp[start] != kUnset) continue;
    comp[start] = count;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t x = p % w, y = p / w;
      auto visit = [&](std::size_t q) {
        if (comp[q] == kUnset && labels[q] == labels[p]) {
          comp[q] = count;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    ++count;
  }
  return comp;
}

}  // namespace detail

/// Every label keeps its largest 4-connected component; the other pieces are
/// merged, smallest first, into their largest adjacent region. Labels are then
/// renumbered 0..K'-1 in raster order of first appearance.
inline std::vector<int> enforce_connectivity(const std::vector<int>& labels, std::size_t w, std::size_t h) {
  std::size_t ncomp = 0;
  const auto comp = detail::components(labels, w, h, ncomp);
  std::vector<std::size_t> area(ncomp, 0);
  std::vector<int> comp_label(ncomp, 0);
  std::vector<std::set<std::size_t>> adj(ncomp);
  for (std::size_t p = 0; p < comp.size(); ++p) {
    ++area[comp[p]];
    comp_label[comp[p]] = labels[p];
    const std::size_t x = p % w, y = p / w;
    if (x + 1 < w && comp[p + 1] != comp[p]) {
      adj[comp[p]].insert(comp[p + 1]);
      adj[comp[p + 1]].insert(comp[p]);
    }
    if (y + 1 < h && comp[p + w] != comp[p]) {
      adj[comp[p]].insert(comp[p + w]);
      adj[comp[p + w]].insert(comp[p]);
    }
  }
  // the largest component of each label (lowest id on ties) survives
  std::vector<std::size_t> keeper;
  for (std::size_t c = 0; c < ncomp; ++c) {
    const auto l = static_cast<std::size_t>(comp_label[c]);
    if (l >= keeper.size()) keeper.resize(l + 1, ncomp);
    if (keeper[l] == ncomp || area[c] > area[keeper[l]]) keeper[l] = c;
  }
  std::vector<std::size_t> orphans;
  for (std::size_t c = 0; c < ncomp; ++c)
    if (keeper[static_cast<std::size_t>(comp_label[c])] != c) orphans.push_back(c);
  std::stable_sort(orphans.begin(), orphans.end(),
                   [&](std::size_t a, std::size_t b) { return area[a] < area[b]; });

  detail::UnionFind uf(ncomp);
  std::vector<std::size_t> size = area;
  for (std::size_t c : orphans) {
    const std::size_t root = uf.find(c);
    std::size_t best = ncomp;
    for (std::size_t n : adj[root]) {
      const std::size_t r = uf.find(n);
      if (r == root) continue;
      if (best == ncomp || size[r] > size[best] || (size[r] == size[best] && r < best)) best = r;
    }
    if (best == ncomp) continue;
    uf.parent[root] = best;
    size[best] += size[root];
    for (std::size_t n : adj[root]) adj[best].insert(n);
    adj[root].clear();
  }

  std::vector<int> remap(ncomp, -1);
  std::vector<int> out(labels.size());
  int next = 0;
  for (std::size_t p = 0; p < comp.size(); ++p) {
    const std::size_t r = uf.find(comp[p]);
    if (remap[r] < 0) remap[r] = next++;
    out[p] = remap[r];
  }
  return out;
}

/// Grid-seeded local k-means with D^2 = dI^2 + (compactness/S)^2 dxy^2 and
/// S = sqrt(N/K), followed by enforce_connectivity.
inline SuperpixelMap slic_segment(const GrayImage& img, std::size_t k, double compactness,
                                  std::size_t iterations = 10) {
  const std::size_t w = img.width, h = img.height, n = w * h;
  if (n == 0 || img.pixels.size() != n) throw InputError("slic: image is empty or malformed");
  if (k < 1) throw ContractError("slic: K must be >= 1");
  if (k > n) throw ContractError("slic: K=" + std::to_string(k) + " exceeds pixel count " + std::to_string(n));
  if (!(compactness > 0.0) || !std::isfinite(compactness)) throw ContractError("slic: compactness must be > 0");
  if (iterations < 1) throw ContractError("slic: iterations must be >= 1");

  const double s = std::sqrt(static_cast<double>(n) / static_cast<double>(k));
  const auto nx = std::min<std::size_t>(
      std::min(w, k),
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(double(k) * w / h) - 1e-9))));
  const auto ny = std::min<std::size_t>(h, std::max<std::size_t>(1, static_cast<std::size_t>(
                                                                        std::lround(double(k) / nx))));

  struct Center {
    double x, y, i;
  };
  auto intensity = [&](long x, long y) {
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    return static_cast<double>(img.pixels[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)]);
  };
  std::vector<Center> centers;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double x0 = (i + 0.5) * static_cast<double>(w) / nx - 0.5;
      const double y0 = (j + 0.5) * static_cast<double>(h) / ny - 0.5;
      long bx = std::lround(x0), by = std::lround(y0);
      // move the seed to the lowest-gradient pixel of its 3x3 neighbourhood
      auto grad = [&](long x, long y) {
        const double gx = intensity(x + 1, y) - intensity(x - 1, y);
        const double gy = intensity(x, y + 1) - intensity(x, y - 1);
        return gx * gx + gy * gy;
      };
      double best = grad(bx, by);
      const long cx = bx, cy = by;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= long(w) || y >= long(h)) continue;
          if (const double g = grad(x, y); g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      const bool moved = bx != cx || by != cy;
      centers.push_back({moved ? double(bx) : x0, moved ? double(by) : y0, intensity(bx, by)});
    }

  const double spatial = (compactness / s) * (compactness / s);
  const long radius = static_cast<long>(std::ceil(s));
  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.begin(), labels.end(), -1);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const auto& ct = centers[c];
      const long x0 = std::max<long>(0, std::lround(ct.x) - radius);
      const long x1 = std::min<long>(long(w) - 1, std::lround(ct.x) + radius);
      const long y0 = std::max<long>(0, std::lround(ct.y) - radius);
      const long y1 = std::min<long>(long(h) - 1, std::lround(ct.y) + radius);
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          const double di = img.pixels[p] - ct.i;
          const double dx = x - ct.x, dy = y - ct.y;
          const double d = di * di + spatial * (dx * dx + dy * dy);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(c);
          }
        }
    }
    // pixels outside every window fall back to the globally nearest centre
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] >= 0) continue;
      const double x = double(p % w), y = double(p / w);
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double di = img.pixels[p] - centers[c].i;
        const double d = di * di + spatial * ((x - centers[c].x) * (x - centers[c].x) +
                                              (y - centers[c].y) * (y - centers[c].y));
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = static_cast<int>(c);
        }
      }
    }
    std::vector<double> sx(centers.size(), 0.0), sy(centers.size(), 0.0), si(centers.size(), 0.0);
    std::vector<std::size_t> cnt(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto c = static_cast<std::size_t>(labels[p]);
      sx[c] += double(p % w);
      sy[c] += double(p / w);
      si[c] += img.pixels[p];
      ++cnt[c];
    }
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (cnt[c]) centers[c] = {sx[c] / cnt[c], sy[c] / cnt[c], si[c] / cnt[c]};
  }

  SuperpixelMap map;
  map.width = w;
  map.height = h;
  map.labels = enforce_connectivity(labels, w, h);
  const auto kk = static_cast<std::size_t>(*std::max_element(map.labels.begin(), map.labels.end()) + 1);
  map.stats = segment_stats(img, map.labels, kk);
  return map;
}

inline SuperpixelMap slic_segment(const GrayImage& img, const SlicConfig& cfg) {
  return slic_segment(img, cfg.k, cfg.compactness, cfg.iterations);
}

/// True when every segment of the map is a single 4-connected region.
inline bool is_four_connected(const SuperpixelMap& map) {
  std::size_t ncomp = 0;
  detail::components(map.labels, map.width, map.height, ncomp);
  return ncomp == map.num_segments();
}

}  // namespace cgn
