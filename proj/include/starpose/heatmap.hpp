#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "starpose/geometry.hpp"

namespace starpose {

/// Dense row-major scalar grid.
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int width_, int height_, double fill = 0.0)
      : width(width_), height(height_), data(static_cast<std::size_t>(width_) * height_, fill) {}

  double operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Grid& o) const { return width == o.width && height == o.height; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// The 5-channel output grid: one multi-peak keypoint heatmap, three
/// canonical-view coordinate channels, one depth channel.
struct HybridMaps {
  int width = 0;
  int height = 0;
  Grid star;
  std::array<Grid, 3> canview;
  Grid depth;

  static HybridMaps zeros(int width, int height) {
    HybridMaps m;
    m.width = width;
    m.height = height;
    m.star = Grid(width, height);
    m.canview = {Grid(width, height), Grid(width, height), Grid(width, height)};
    m.depth = Grid(width, height);
    return m;
  }
};

/// Keypoint as written into the maps: image location plus the per-keypoint
/// feature payload.
struct MapKeypoint {
  double u = 0.0;
  double v = 0.0;
  Vec3 canview;
  double depth = 0.0;
};

/// Peak decoded from the maps. (u, v) is the peak pixel (fractional only with
/// sub-pixel refinement); features are read at the integer peak pixel.
struct DetectedKeypoint {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
  Vec3 canview;
  double depth = 0.0;
};

struct OutOfBoundsKeypoint : std::invalid_argument {
  std::size_t index;
  OutOfBoundsKeypoint(std::size_t index_, const std::string& msg)
      : std::invalid_argument(msg), index(index_) {}
};

namespace detail {

inline int rounded_pixel(double coord, int extent) {
  // Domain is the half-open [0, extent); values in (extent - 0.5, extent)
  // would round up to the edge and are clamped onto it.
  return std::min(static_cast<int>(std::lround(coord)), extent - 1);
}

}  // namespace detail

/// Renders keypoints into fresh maps. The heatmap channel gets an isotropic
/// Gaussian exp(-((x-px)^2+(y-py)^2)/(2 sigma^2)) centered on each keypoint's
/// rounded pixel (peak value exactly 1), combined across keypoints by
/// per-pixel max. Feature channels carry each keypoint's canview/depth as a
/// constant over the rounded pixel and its 8-neighborhood; where footprints
/// overlap the keypoint with the larger heatmap contribution wins.
inline HybridMaps encode_maps(std::span<const MapKeypoint> keypoints, int height, int width,
                              double sigma) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("encode_maps: empty grid");
  if (!(sigma > 0.0)) throw std::invalid_argument("encode_maps: sigma must be > 0");
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const auto& kp = keypoints[i];
    if (!(kp.u >= 0.0 && kp.u < width && kp.v >= 0.0 && kp.v < height)) {
      throw OutOfBoundsKeypoint(
          i, "encode_maps: keypoint " + std::to_string(i) + " outside " +
                 std::to_string(width) + "x" + std::to_string(height) + " grid");
    }
  }

  HybridMaps maps = HybridMaps::zeros(width, height);
  Grid owner(width, height);  // winning heatmap contribution per feature pixel
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

  for (const auto& kp : keypoints) {
    const int px = detail::rounded_pixel(kp.u, width);
    const int py = detail::rounded_pixel(kp.v, height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dx = x - px, dy = y - py;
        const double g = std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq);
        if (g > maps.star(x, y)) maps.star(x, y) = g;
      }
    }
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = px + dx, y = py + dy;
        if (!maps.star.in_bounds(x, y)) continue;
        const double g = std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq);
        if (g > owner(x, y)) {
          owner(x, y) = g;
          maps.canview[0](x, y) = kp.canview.x;
          maps.canview[1](x, y) = kp.canview.y;
          maps.canview[2](x, y) = kp.canview.z;
          maps.depth(x, y) = kp.depth;
        }
      }
    }
  }
  return maps;
}

/// Binary mask covering each keypoint's rounded pixel and 8-neighborhood,
/// i.e. the footprint the encoder writes feature values to.
inline Grid peak_mask(std::span<const MapKeypoint> keypoints, int height, int width) {
  Grid mask(width, height);
  for (const auto& kp : keypoints) {
    const int px = detail::rounded_pixel(kp.u, width);
    const int py = detail::rounded_pixel(kp.v, height);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (mask.in_bounds(px + dx, py + dy)) mask(px + dx, py + dy) = 1.0;
  }
  return mask;
}

struct PeakOptions {
  double threshold = 0.05;
  /// Per-axis quadratic vertex refinement of the peak location (clamped to
  /// half a pixel); feature reads stay at the integer peak.
  bool subpixel = false;
};

namespace detail {

// Peak rule: value > threshold, >= all in-bounds 8-neighbors, and strictly
// greater than at least one of them.
inline bool is_peak_candidate(const Grid& g, int x, int y, double threshold) {
  const double val = g(x, y);
  if (!(val > threshold)) return false;
  bool greater_than_one = false;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      if (!g.in_bounds(x + dx, y + dy)) continue;
      const double n = g(x + dx, y + dy);
      if (val < n) return false;
      if (val > n) greater_than_one = true;
    }
  }
  return greater_than_one;
}

inline double quadratic_offset(double lo, double mid, double hi) {
  const double denom = 2.0 * (hi + lo - 2.0 * mid);
  if (!(denom < 0.0)) return 0.0;
  return std::clamp((lo - hi) / denom, -0.5, 0.5);
}

}  // namespace detail

/// Extracts all heatmap peaks in row-major order. Equal-valued 8-connected
/// candidate plateaus report only their row-major-first pixel. Confidence is
/// the heatmap value; canview/depth are read at the peak pixel.
inline std::vector<DetectedKeypoint> extract_peaks(const HybridMaps& maps,
                                                   const PeakOptions& opts = {}) {
  const Grid& star = maps.star;
  std::vector<DetectedKeypoint> out;
  std::vector<char> suppressed(star.data.size(), 0);

  for (int y = 0; y < star.height; ++y) {
    for (int x = 0; x < star.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * star.width + x;
      if (suppressed[idx] || !detail::is_peak_candidate(star, x, y, opts.threshold)) continue;

      // Flood the whole equal-valued connected component so any other
      // candidate on the same plateau is skipped.
      const double val = star(x, y);
      std::vector<std::pair<int, int>> stack{{x, y}};
      suppressed[idx] = 1;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (!star.in_bounds(nx, ny) || star(nx, ny) != val) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * star.width + nx;
            if (suppressed[nidx]) continue;
            suppressed[nidx] = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }

      DetectedKeypoint det;
      det.u = x;
      det.v = y;
      det.confidence = val;
      det.canview = {maps.canview[0](x, y), maps.canview[1](x, y), maps.canview[2](x, y)};
      det.depth = maps.depth(x, y);
      if (opts.subpixel) {
        if (x > 0 && x < star.width - 1)
          det.u += detail::quadratic_offset(star(x - 1, y), val, star(x + 1, y));
        if (y > 0 && y < star.height - 1)
          det.v += detail::quadratic_offset(star(x, y - 1), val, star(x, y + 1));
      }
      out.push_back(det);
    }
  }
  return out;
}

/// L2 loss with the supervision footprint applied: the heatmap channel is
/// compared everywhere, feature channels only where mask is nonzero.
/// Returns sum over channels of sum_px mask_px * (pred - gt)^2.
inline double masked_l2_loss(const HybridMaps& pred, const HybridMaps& gt, const Grid& mask) {
  if (pred.width != gt.width || pred.height != gt.height || !mask.same_shape(pred.star)) {
    throw std::invalid_argument("masked_l2_loss: dimension mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.star.data.size(); ++i) {
    const double d = pred.star.data[i] - gt.star.data[i];
    loss += d * d;
  }
  auto masked = [&](const Grid& a, const Grid& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      if (mask.data[i] != 0.0) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
      }
    }
    return s;
  };
  for (int c = 0; c < 3; ++c) loss += masked(pred.canview[c], gt.canview[c]);
  loss += masked(pred.depth, gt.depth);
  return loss;
}

}  // namespace starpose
