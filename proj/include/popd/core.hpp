#pragma once

// Grid-based field types, norms, inner products and the project-wide seeded RNG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace popd {

/// 2-vector attached to one pixel. Component `x` is the difference along the
/// image width (column index), `y` along the height (row index).
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
/// z-component of the planar cross product.
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

/// 2x2 real matrix, row-major.
struct Mat2 {
  double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;

  static constexpr Mat2 identity() { return {}; }
  static Mat2 rotation(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c, -s, s, c};
  }
  constexpr Vec2 operator*(const Vec2& v) const {
    return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y};
  }
  constexpr Mat2 operator*(const Mat2& m) const {
    return {a11 * m.a11 + a12 * m.a21, a11 * m.a12 + a12 * m.a22,
            a21 * m.a11 + a22 * m.a21, a21 * m.a12 + a22 * m.a22};
  }
  constexpr Mat2 transpose() const { return {a11, a21, a12, a22}; }
  constexpr double det() const { return a11 * a22 - a12 * a21; }
  Mat2 inverse() const {
    const double d = det();
    if (d == 0.0) throw std::domain_error("Mat2::inverse: singular matrix");
    return {a22 / d, -a12 / d, -a21 / d, a11 / d};
  }
  /// Spectral norm.
  double op_norm() const {
    const double f = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22;
    const double d = std::abs(det());
    return std::sqrt(0.5 * (f + std::sqrt(std::max(0.0, f * f - 4.0 * d * d))));
  }
};

/// Dense row-major field on a width x height pixel grid.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), values_(width * height, fill) {
    if (width == 0 || height == 0) throw std::invalid_argument("Grid: width and height must be >= 1");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return values_[j * width_ + i]; }
  const T& operator()(std::size_t i, std::size_t j) const { return values_[j * width_ + i]; }
  T& operator[](std::size_t idx) { return values_[idx]; }
  const T& operator[](std::size_t idx) const { return values_[idx]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  template <class U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  void fill(const T& v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> values_;
};

using ScalarImage = Grid<double>;
using VectorField2 = Grid<Vec2>;
using CountImage = Grid<std::int64_t>;
/// Sinograms share the scalar grid type: width = detector bins, height = angles.
using Sinogram = Grid<double>;

template <class T, class U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + ")");
  }
}

// Elementwise arithmetic on fields. All of these require matching shapes.

template <class T>
Grid<T>& operator+=(Grid<T>& a, const Grid<T>& b) {
  require_same_shape(a, b, "operator+=");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  return a;
}
template <class T>
Grid<T>& operator-=(Grid<T>& a, const Grid<T>& b) {
  require_same_shape(a, b, "operator-=");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] -= b[k];
  return a;
}
template <class T>
Grid<T>& operator*=(Grid<T>& a, double s) {
  for (auto& v : a) v *= s;
  return a;
}
template <class T>
Grid<T> operator+(Grid<T> a, const Grid<T>& b) { return a += b; }
template <class T>
Grid<T> operator-(Grid<T> a, const Grid<T>& b) { return a -= b; }
template <class T>
Grid<T> operator*(double s, Grid<T> a) { return a *= s; }

/// a + s * b
template <class T>
Grid<T> axpy(const Grid<T>& a, double s, const Grid<T>& b) {
  require_same_shape(a, b, "axpy");
  Grid<T> out = a;
  for (std::size_t k = 0; k < a.size(); ++k) out[k] += s * b[k];
  return out;
}

inline double inner(const ScalarImage& f, const ScalarImage& g) {
  require_same_shape(f, g, "inner");
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * g[k];
  return s;
}

inline double inner(const VectorField2& f, const VectorField2& g) {
  require_same_shape(f, g, "inner");
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += dot(f[k], g[k]);
  return s;
}

template <class T>
double l2_norm(const Grid<T>& f) {
  return std::sqrt(inner(f, f));
}

/// Sum of pointwise Euclidean norms.
inline double norm_21(const VectorField2& f) {
  double s = 0.0;
  for (const auto& v : f) s += norm(v);
  return s;
}

/// Largest pointwise Euclidean norm.
inline double norm_2inf(const VectorField2& f) {
  double m = 0.0;
  for (const auto& v : f) m = std::max(m, norm(v));
  return m;
}

inline double max_abs(const ScalarImage& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const ScalarImage& f) {
  return std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); });
}
inline bool all_finite(const VectorField2& f) {
  return std::all_of(f.begin(), f.end(), [](const Vec2& v) { return std::isfinite(v.x) && std::isfinite(v.y); });
}

/// Seeded random stream used by every stochastic part of the project.
///
/// The bit source is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Uniforms take the top 53 bits; normals use the Marsaglia
/// polar method; Poisson draws use Knuth's product method below mean 10 and
/// Hoermann's PTRS transformed rejection above. None of the std::*_distribution
/// classes are used, since their algorithms differ between standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::int64_t poisson(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::domain_error("poisson: mean must be finite and >= 0");
    if (lambda == 0.0) return 0;
    if (lambda < 10.0) {
      const double limit = std::exp(-lambda);
      std::int64_t k = 0;
      double prod = uniform();
      while (prod > limit) {
        ++k;
        prod *= uniform();
      }
      return k;
    }
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::abs(u);
      const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + lambda + 0.43));
      if (us >= 0.07 && v <= vr) return k;
      if (k < 0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          -lambda + static_cast<double>(k) * loglam - std::lgamma(static_cast<double>(k) + 1.0)) {
        return k;
      }
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// i.i.d. N(0, sigma^2) image.
inline ScalarImage gaussian_noise(SeededRng& rng, std::size_t width, std::size_t height, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
  ScalarImage out(width, height, 0.0);
  if (sigma == 0.0) return out;
  for (auto& v : out) v = sigma * rng.normal();
  return out;
}

/// Independent Poisson draws with the given per-entry means.
inline CountImage poisson_sample(SeededRng& rng, const ScalarImage& mean_field) {
  CountImage out(mean_field.width(), mean_field.height(), 0);
  for (std::size_t k = 0; k < mean_field.size(); ++k) {
    if (mean_field[k] < 0.0) throw std::domain_error("poisson_sample: negative mean");
    out[k] = rng.poisson(mean_field[k]);
  }
  return out;
}

}  // namespace popd
