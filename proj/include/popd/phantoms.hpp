#pragma once

// Analytic test images: the modified Shepp-Logan phantom, a synthetic brain
// phantom and a textured scene for the stabilisation study.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "popd/core.hpp"

namespace popd {

/// Ellipse with additive intensity, in the normalised [-1, 1]^2 frame
/// (y pointing up), rotated by phi_deg counter-clockwise.
struct Ellipse {
  double intensity, a, b, x0, y0, phi_deg;

  bool contains(double x, double y) const {
    const double phi = phi_deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    const double dx = x - x0, dy = y - y0;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

/// Modified (high-contrast) Shepp-Logan table of Toft.
inline constexpr std::array<Ellipse, 10> kSheppLoganEllipses{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

/// Point value of the phantom at normalised coordinates, clamped to [0, 1].
inline double shepp_logan_value(double x, double y) {
  double v = 0.0;
  for (const auto& e : kSheppLoganEllipses)
    if (e.contains(x, y)) v += e.intensity;
  return std::clamp(v, 0.0, 1.0);
}

/// Pixel (i, j) of an n x n grid in normalised coordinates.
inline Vec2 normalised_coords(double i, double j, std::size_t n) {
  const double nn = static_cast<double>(n);
  return {(2.0 * i + 1.0) / nn - 1.0, 1.0 - (2.0 * j + 1.0) / nn};
}

/// Evaluate an analytic image f(x, y) on [-1, 1]^2 at pixel centres, after
/// mapping each pixel position through `map` (pixel coordinates).
template <class F, class Map>
ScalarImage rasterise(std::size_t n, F&& f, Map&& map) {
  ScalarImage out(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = map(Vec2{static_cast<double>(i), static_cast<double>(j)});
      const Vec2 q = normalised_coords(p.x, p.y, n);
      out(i, j) = f(q.x, q.y);
    }
  return out;
}

inline ScalarImage shepp_logan(std::size_t size) {
  if (size < 16) throw std::invalid_argument("shepp_logan: size must be >= 16");
  return rasterise(size, shepp_logan_value, [](Vec2 p) { return p; });
}

/// Smooth-plus-edges brain-like phantom: skull ring, grey matter with folded
/// boundary and low-frequency texture, white matter, ventricles and two small
/// lesions. Deterministic in `seed`, values in [0, 1].
class SyntheticBrain {
 public:
  explicit SyntheticBrain(std::uint64_t seed) {
    SeededRng rng(seed);
    for (auto& p : phases_) p = 2.0 * std::numbers::pi * rng.uniform();
    fold_count_ = 7 + static_cast<int>(rng.uniform() * 4.0);
  }

  double operator()(double x, double y) const {
    const double r_head = std::hypot(x / 0.72, y / 0.9);
    if (r_head > 1.0) return 0.0;
    if (r_head > 0.9) return 0.35;  // skull
    const double ang = std::atan2(y, x);
    const double fold = 0.05 * std::sin(fold_count_ * ang + phases_[0]);
    const double r_wm = std::hypot(x / 0.5, y / 0.66);
    double v = 0.0;
    if (r_wm > 0.85 + fold) {
      v = 0.8 + 0.08 * std::sin(9.0 * x + phases_[1]) * std::cos(7.0 * y + phases_[2]);  // grey matter
    } else {
      v = 0.55 + 0.04 * std::sin(5.0 * x + 4.0 * y + phases_[3]);  // white matter
    }
    const Ellipse ventricles[2] = {{1.0, 0.08, 0.22, -0.1, 0.05, 12.0}, {1.0, 0.08, 0.22, 0.1, 0.05, -12.0}};
    if (ventricles[0].contains(x, y) || ventricles[1].contains(x, y)) v = 0.15;
    if (std::hypot(x - 0.25, y + 0.35) < 0.06) v = 1.0;
    if (std::hypot(x + 0.3, y - 0.3) < 0.04) v = 0.95;
    return std::clamp(v, 0.0, 1.0);
  }

 private:
  std::array<double, 4> phases_{};
  int fold_count_ = 8;
};

inline ScalarImage synthetic_brain(std::size_t size, std::uint64_t seed) {
  if (size < 16) throw std::invalid_argument("synthetic_brain: size must be >= 16");
  return rasterise(size, SyntheticBrain(seed), [](Vec2 p) { return p; });
}

/// Piecewise-smooth coastal scene on a width x height raster: graded sky with
/// flat clouds, a banded tower with a dark lantern, a house with roof and
/// windows, a grass band, rocks and a sea with faint swell. Feature sizes are
/// fractions of the raster, so the scene scales with it. Values in [0, 1].
inline ScalarImage synthetic_scene(std::size_t width, std::size_t height, std::uint64_t seed = 0) {
  if (width < 16 || height < 16) throw std::invalid_argument("synthetic_scene: size must be >= 16");
  SeededRng rng(seed);
  std::array<double, 2> ph{};
  for (auto& p : ph) p = 2.0 * std::numbers::pi * rng.uniform();
  const Ellipse clouds[3] = {{0.95, 0.14, 0.05, 0.25, 0.12, 0.0},
                             {0.92, 0.10, 0.04, 0.72, 0.2, 0.0},
                             {0.97, 0.08, 0.035, 0.55, 0.08, 0.0}};
  ScalarImage img(width, height, 0.0);
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  for (std::size_t j = 0; j < height; ++j) {
    for (std::size_t i = 0; i < width; ++i) {
      const double u = (static_cast<double>(i) + 0.5) / W;
      const double v = (static_cast<double>(j) + 0.5) / H;
      const double horizon = 0.6 + 0.02 * std::sin(5.0 * u + ph[0]);
      double val;
      if (v < horizon) {
        val = 0.62 + 0.2 * v;
        for (const auto& c : clouds)
          if (c.contains(u, v)) val = c.intensity;
      } else if (v < horizon + 0.12) {
        val = 0.4;  // grass
      } else {
        val = 0.22 + 0.03 * std::sin(25.0 * v + ph[1]);  // sea
        if (u > 0.62 && v > 0.9 - 0.4 * (u - 0.62)) val = 0.55;  // rocks
      }
      // Banded tower, tapering towards the top, with a dark lantern.
      const double top = 0.2, base = horizon + 0.06;
      const double half = 0.045 + 0.015 * (v - top) / (base - top);
      if (v > top && v < base && std::abs(u - 0.32) < half) {
        const int band = static_cast<int>(std::floor((v - top) / (base - top) * 5.0));
        val = band % 2 == 0 ? 0.95 : 0.2;
      }
      if (v > top - 0.07 && v <= top && std::abs(u - 0.32) < 0.035) val = 0.1;
      // House with a roof and two windows.
      const double hx0 = 0.45, hx1 = 0.62, hy0 = horizon - 0.1, hy1 = horizon + 0.05;
      if (u > hx0 && u < hx1 && v > hy0 && v < hy1) val = 0.85;
      if (v <= hy0 && v > hy0 - 0.08 && std::abs(u - 0.5 * (hx0 + hx1)) < 0.5 * (hx1 - hx0) * (v - (hy0 - 0.08)) / 0.08)
        val = 0.3;
      if (v > hy0 + 0.03 && v < hy0 + 0.07 && ((u > 0.48 && u < 0.51) || (u > 0.56 && u < 0.59))) val = 0.15;
      img(i, j) = std::clamp(val, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace popd
