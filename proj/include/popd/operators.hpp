#pragma once

// Linear operators with matched adjoints: forward-difference gradients,
// bilinear warps along rigid displacements, and a parallel-beam Radon projector.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "popd/core.hpp"

namespace popd {

enum class Boundary { neumann, dirichlet };

/// Forward-difference discrete gradient.
///
/// Neumann: the difference leaving the last row/column is zero.
/// Dirichlet: the difference leaving the last row/column is taken against an
/// implicit zero exterior, which makes the operator injective.
struct GradOp {
  Boundary boundary = Boundary::neumann;
  double h = 1.0;

  /// Analytic bound sqrt(8)/h on the operator norm.
  double norm_bound() const { return std::sqrt(8.0) / h; }

  VectorField2 apply(const ScalarImage& x) const {
    const std::size_t w = x.width(), ht = x.height();
    const bool dir = boundary == Boundary::dirichlet;
    VectorField2 out(w, ht);
    for (std::size_t j = 0; j < ht; ++j) {
      for (std::size_t i = 0; i < w; ++i) {
        const double c = x(i, j);
        Vec2 g;
        if (i + 1 < w) g.x = (x(i + 1, j) - c) / h;
        else if (dir) g.x = -c / h;
        if (j + 1 < ht) g.y = (x(i, j + 1) - c) / h;
        else if (dir) g.y = -c / h;
        out(i, j) = g;
      }
    }
    return out;
  }

  /// Negative divergence, the exact transpose of apply().
  ScalarImage adjoint(const VectorField2& y) const {
    const std::size_t w = y.width(), ht = y.height();
    const bool dir = boundary == Boundary::dirichlet;
    ScalarImage out(w, ht, 0.0);
    for (std::size_t j = 0; j < ht; ++j) {
      for (std::size_t i = 0; i < w; ++i) {
        double s = 0.0;
        if (i > 0) s += y(i - 1, j).x;
        if (i + 1 < w || dir) s -= y(i, j).x;
        if (j > 0) s += y(i, j - 1).y;
        if (j + 1 < ht || dir) s -= y(i, j).y;
        out(i, j) = s / h;
      }
    }
    return out;
  }
};

/// Rigid per-frame motion v: a translation xi -> xi + d or a rotation
/// xi -> c + R(angle) (xi - c). Pixel coordinates are (column, row).
struct Displacement {
  enum class Kind { translation, rotation };

  Kind kind = Kind::translation;
  Vec2 shift{};
  double angle = 0.0;
  Vec2 center{};

  static Displacement identity() { return {}; }
  static Displacement translation(Vec2 d) { return {Kind::translation, d, 0.0, {}}; }
  static Displacement rotation(double angle, Vec2 center) { return {Kind::rotation, {}, angle, center}; }

  Vec2 map(const Vec2& xi) const {
    if (kind == Kind::translation) return xi + shift;
    return center + Mat2::rotation(angle) * (xi - center);
  }

  /// Inverse motion, so that map(inverse().map(p)) == p up to rounding.
  Displacement inverse() const {
    if (kind == Kind::translation) return translation(-shift);
    return rotation(-angle, center);
  }

  bool is_identity() const {
    return kind == Kind::translation ? (shift.x == 0.0 && shift.y == 0.0) : angle == 0.0;
  }
};

/// Spatial Jacobian of v; constant for both supported kinds.
inline Mat2 jacobian_of_displacement(const Displacement& d, const Vec2& /*xi*/ = {}) {
  if (d.kind == Displacement::Kind::translation) return Mat2::identity();
  return Mat2::rotation(d.angle);
}

/// True and measured motion for one frame transition.
struct DisplacementPair {
  Displacement truth;
  Displacement measured;
};

namespace detail {

/// Bilinear stencil at a position clamped into the pixel-centre rectangle.
struct BilinearStencil {
  std::size_t i0, i1, j0, j1;
  double fx, fy;
};

inline BilinearStencil clamped_stencil(Vec2 p, std::size_t w, std::size_t h) {
  const double px = std::clamp(p.x, 0.0, static_cast<double>(w - 1));
  const double py = std::clamp(p.y, 0.0, static_cast<double>(h - 1));
  BilinearStencil s{};
  s.i0 = w >= 2 ? std::min(static_cast<std::size_t>(px), w - 2) : 0;
  s.j0 = h >= 2 ? std::min(static_cast<std::size_t>(py), h - 2) : 0;
  s.i1 = w >= 2 ? s.i0 + 1 : 0;
  s.j1 = h >= 2 ? s.j0 + 1 : 0;
  s.fx = w >= 2 ? px - static_cast<double>(s.i0) : 0.0;
  s.fy = h >= 2 ? py - static_cast<double>(s.j0) : 0.0;
  return s;
}

}  // namespace detail

/// Bilinear sample of a field at a continuous position, clamped to the grid.
template <class T>
T sample_bilinear(const Grid<T>& f, Vec2 p) {
  const auto s = detail::clamped_stencil(p, f.width(), f.height());
  const T top = (1.0 - s.fx) * f(s.i0, s.j0) + s.fx * f(s.i1, s.j0);
  const T bottom = (1.0 - s.fx) * f(s.i0, s.j1) + s.fx * f(s.i1, s.j1);
  return (1.0 - s.fy) * top + s.fy * bottom;
}

/// Composition with a displacement: (W x)(xi) = x(v(xi)), bilinear and clamped.
struct WarpOp {
  Displacement displacement;

  template <class T>
  Grid<T> apply(const Grid<T>& x) const {
    Grid<T> out(x.width(), x.height());
    for (std::size_t j = 0; j < x.height(); ++j)
      for (std::size_t i = 0; i < x.width(); ++i)
        out(i, j) = sample_bilinear(x, displacement.map({static_cast<double>(i), static_cast<double>(j)}));
    return out;
  }

  /// Transpose of apply(): scatters each output pixel back through the stencil.
  ScalarImage adjoint(const ScalarImage& y) const {
    const std::size_t w = y.width(), h = y.height();
    ScalarImage out(w, h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
      for (std::size_t i = 0; i < w; ++i) {
        const auto s = detail::clamped_stencil(displacement.map({static_cast<double>(i), static_cast<double>(j)}), w, h);
        const double v = y(i, j);
        out(s.i0, s.j0) += (1.0 - s.fx) * (1.0 - s.fy) * v;
        out(s.i1, s.j0) += s.fx * (1.0 - s.fy) * v;
        out(s.i0, s.j1) += (1.0 - s.fx) * s.fy * v;
        out(s.i1, s.j1) += s.fx * s.fy * v;
      }
    }
    return out;
  }
};

/// Precomputed sparse ray-driven parallel-beam projection matrix.
///
/// Angles are uniform on [0, pi); bins span the image diagonal. Each ray is
/// sampled every half pixel with bilinear interpolation (zero outside the
/// pixel-centre rectangle) and the samples are accumulated into one sparse row.
/// Row index = angle * n_bins + bin.
class RadonGeometry {
 public:
  RadonGeometry(std::size_t image_width, std::size_t image_height, std::size_t n_angles, std::size_t n_bins,
                double ray_step = 0.5)
      : width_(image_width), height_(image_height), n_angles_(n_angles), n_bins_(n_bins) {
    if (image_width < 2 || image_height < 2 || n_angles == 0 || n_bins == 0)
      throw std::invalid_argument("RadonGeometry: degenerate dimensions");
    const double cx = 0.5 * static_cast<double>(width_ - 1);
    const double cy = 0.5 * static_cast<double>(height_ - 1);
    const double span = std::hypot(static_cast<double>(width_), static_cast<double>(height_));
    const double bin_width = span / static_cast<double>(n_bins_);
    const auto n_steps = static_cast<std::size_t>(std::ceil(span / ray_step));
    const double xmax = static_cast<double>(width_ - 1), ymax = static_cast<double>(height_ - 1);

    std::vector<double> scratch(width_ * height_, 0.0);
    std::vector<std::size_t> touched;
    row_ptr_.reserve(n_angles_ * n_bins_ + 1);
    row_ptr_.push_back(0);
    for (std::size_t a = 0; a < n_angles_; ++a) {
      const double theta = std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles_);
      const Vec2 normal{std::cos(theta), std::sin(theta)};
      const Vec2 along{-std::sin(theta), std::cos(theta)};
      for (std::size_t b = 0; b < n_bins_; ++b) {
        const double s = (static_cast<double>(b) + 0.5) * bin_width - 0.5 * span;
        for (std::size_t t = 0; t <= n_steps; ++t) {
          const double tt = -0.5 * span + static_cast<double>(t) * ray_step;
          const double px = cx + s * normal.x + tt * along.x;
          const double py = cy + s * normal.y + tt * along.y;
          if (px < 0.0 || py < 0.0 || px > xmax || py > ymax) continue;
          const auto st = detail::clamped_stencil({px, py}, width_, height_);
          const double wts[4] = {(1 - st.fx) * (1 - st.fy), st.fx * (1 - st.fy), (1 - st.fx) * st.fy, st.fx * st.fy};
          const std::size_t idx[4] = {st.j0 * width_ + st.i0, st.j0 * width_ + st.i1, st.j1 * width_ + st.i0,
                                      st.j1 * width_ + st.i1};
          for (int q = 0; q < 4; ++q) {
            if (wts[q] == 0.0) continue;
            if (scratch[idx[q]] == 0.0) touched.push_back(idx[q]);
            scratch[idx[q]] += ray_step * wts[q];
          }
        }
        std::sort(touched.begin(), touched.end());
        for (std::size_t p : touched) {
          col_.push_back(static_cast<std::uint32_t>(p));
          val_.push_back(scratch[p]);
          scratch[p] = 0.0;
        }
        touched.clear();
        row_ptr_.push_back(col_.size());
      }
    }
  }

  std::size_t image_width() const { return width_; }
  std::size_t image_height() const { return height_; }
  std::size_t n_angles() const { return n_angles_; }
  std::size_t n_bins() const { return n_bins_; }
  std::size_t n_rows() const { return n_angles_ * n_bins_; }

  double row_dot(std::size_t row, const ScalarImage& x) const {
    double s = 0.0;
    for (std::size_t k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k) s += val_[k] * x[col_[k]];
    return s;
  }
  void row_scatter(std::size_t row, double v, ScalarImage& out) const {
    for (std::size_t k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k) out[col_[k]] += val_[k] * v;
  }

 private:
  std::size_t width_, height_, n_angles_, n_bins_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
};

/// Partial Radon transform: the shared geometry restricted to an active mask.
/// Sinogram layout: width = n_bins, height = n_angles.
class RadonOp {
 public:
  RadonOp() = default;
  explicit RadonOp(std::shared_ptr<const RadonGeometry> geometry)
      : geometry_(std::move(geometry)), mask_(geometry_->n_rows(), 1) {}
  RadonOp(std::shared_ptr<const RadonGeometry> geometry, std::vector<std::uint8_t> active_mask)
      : geometry_(std::move(geometry)), mask_(std::move(active_mask)) {
    if (mask_.size() != geometry_->n_rows()) throw std::invalid_argument("RadonOp: mask size mismatch");
  }

  const RadonGeometry& geometry() const { return *geometry_; }
  const std::shared_ptr<const RadonGeometry>& geometry_ptr() const { return geometry_; }
  const std::vector<std::uint8_t>& active_mask() const { return mask_; }
  bool active(std::size_t row) const { return mask_[row] != 0; }
  std::size_t n_active() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }

  Sinogram make_sinogram(double fill = 0.0) const { return Sinogram(geometry_->n_bins(), geometry_->n_angles(), fill); }
  ScalarImage make_image(double fill = 0.0) const {
    return ScalarImage(geometry_->image_width(), geometry_->image_height(), fill);
  }

  Sinogram apply(const ScalarImage& x) const {
    if (x.width() != geometry_->image_width() || x.height() != geometry_->image_height())
      throw std::invalid_argument("RadonOp::apply: image dimension mismatch");
    Sinogram out = make_sinogram();
    for (std::size_t r = 0; r < geometry_->n_rows(); ++r)
      if (mask_[r]) out[r] = geometry_->row_dot(r, x);
    return out;
  }

  ScalarImage adjoint(const Sinogram& s) const {
    if (s.width() != geometry_->n_bins() || s.height() != geometry_->n_angles())
      throw std::invalid_argument("RadonOp::adjoint: sinogram dimension mismatch");
    ScalarImage out = make_image();
    for (std::size_t r = 0; r < geometry_->n_rows(); ++r)
      if (mask_[r] && s[r] != 0.0) geometry_->row_scatter(r, s[r], out);
    return out;
  }

 private:
  std::shared_ptr<const RadonGeometry> geometry_;
  std::vector<std::uint8_t> mask_;
};

/// Power iteration on A*A from a seeded random start. Returns the square root
/// of the largest Rayleigh quotient seen, a lower bound on ||A|| that is
/// nondecreasing in `iters`.
template <class Apply, class Adjoint>
double op_norm_estimate(Apply&& apply, Adjoint&& adjoint, const ScalarImage& shape, int iters, std::uint64_t seed = 7) {
  if (iters < 1) throw std::invalid_argument("op_norm_estimate: iters must be >= 1");
  SeededRng rng(seed);
  ScalarImage v = shape;
  for (auto& e : v) e = rng.normal();
  double nv = l2_norm(v);
  if (nv == 0.0) return 0.0;
  v *= 1.0 / nv;
  double best = 0.0;
  for (int it = 0; it < iters; ++it) {
    ScalarImage w = adjoint(apply(v));
    const double rayleigh = inner(w, v);
    best = std::max(best, rayleigh);
    const double nw = l2_norm(w);
    if (nw == 0.0) break;
    v = std::move(w);
    v *= 1.0 / nw;
  }
  return std::sqrt(std::max(0.0, best));
}

}  // namespace popd
