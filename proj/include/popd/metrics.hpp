#pragma once

// Image-quality metrics and summary statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>

#include "popd/core.hpp"

namespace popd {

/// PSNR values written to CSV are capped here; identical images give +inf.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE), +inf when MSE = 0.
inline double psnr(const ScalarImage& x, const ScalarImage& ref, double peak = 1.0) {
  require_same_shape(x, ref, "psnr");
  double mse = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) mse += (x[k] - ref[k]) * (x[k] - ref[k]);
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

inline double capped_psnr(double v) { return std::min(v, kPsnrCap); }

struct SsimOptions {
  std::size_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all fully contained window positions of a uniform window,
/// with unbiased (n - 1) local variances and covariance.
inline double ssim(const ScalarImage& x, const ScalarImage& ref, const SsimOptions& o = {}) {
  require_same_shape(x, ref, "ssim");
  const std::size_t w = x.width(), h = x.height(), win = o.window;
  if (w < win || h < win) throw std::invalid_argument("ssim: image smaller than the window");
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const double n = static_cast<double>(win * win);
  const double unbias = n / (n - 1.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j0 = 0; j0 + win <= h; ++j0) {
    for (std::size_t i0 = 0; i0 + win <= w; ++i0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t j = j0; j < j0 + win; ++j)
        for (std::size_t i = i0; i < i0 + win; ++i) {
          const double a = x(i, j), b = ref(i, j);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      const double mx = sx / n, my = sy / n;
      const double vx = unbias * (sxx / n - mx * mx);
      const double vy = unbias * (syy / n - my * my);
      const double cxy = unbias * (sxy / n - mx * my);
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

/// Sample mean and normal-approximation 95% interval mean +- 1.96 sd / sqrt(n).
inline MeanCi mean_ci95(std::span<const double> v) {
  MeanCi out;
  out.n = v.size();
  if (v.empty()) throw std::invalid_argument("mean_ci95: empty sample");
  double s = 0.0;
  for (double e : v) s += e;
  out.mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double e : v) ss += (e - out.mean) * (e - out.mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(v.size()));
  out.lo = out.mean - half;
  out.hi = out.mean + half;
  return out;
}

}  // namespace popd
