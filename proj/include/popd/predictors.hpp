#pragma once

// Primal-dual predictors. Each maps (x^k, y^k) and the frame-transition
// context to the predicted pair (x^{k+1}, y^{k+1}) fed to the next step.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include "popd/core.hpp"
#include "popd/operators.hpp"
#include "popd/proxops.hpp"

namespace popd {

struct Prediction {
  ScalarImage x;
  VectorField2 y;
};

/// Frame-transition context shared by all predictors.
struct PredictContext {
  Displacement measured;  // v^k, as available to the algorithm
  GradOp grad;            // D
  double alpha = 0.25;
  double sigma = 1.0;     // current dual step, used by the proximal baseline
};

/// D x^k and D x^{k+1}_pred, computed once per prediction.
struct GradientCaches {
  VectorField2 Dx;
  VectorField2 Dx_pred;
};

inline GradientCaches make_caches(const PredictContext& ctx, const ScalarImage& x, const ScalarImage& x_pred) {
  return {ctx.grad.apply(x), ctx.grad.apply(x_pred)};
}

enum class PreserveMode { tv, inner_product };
enum class Activation { sigmoid, power };

namespace predictor {
struct NoPrediction {};
struct PrimalOnly {};
struct ZeroDual {};
struct ProximalOld {
  double rho_tilde = 100.0;
};
struct PointwiseL2 {
  PreserveMode mode = PreserveMode::tv;
};
struct Rotation {
  PreserveMode mode = PreserveMode::tv;
};
struct Greedy {
  double eps_tol = 1e-12;
};
struct StrictGreedy {};
struct GlobalTV {
  PreserveMode mode = PreserveMode::tv;
  double tol = 1e-12;
  int max_iters = 10000;
};
struct DualScaling {
  double chi = 0.75;
  Activation activation = Activation::power;
};
}  // namespace predictor

using PredictorKind =
    std::variant<predictor::NoPrediction, predictor::PrimalOnly, predictor::ZeroDual, predictor::ProximalOld,
                 predictor::PointwiseL2, predictor::Rotation, predictor::Greedy, predictor::StrictGreedy,
                 predictor::GlobalTV, predictor::DualScaling>;

// ---------------------------------------------------------------------------
// Primal prediction and the trivial baselines.

/// x^k o v^k with the measured displacement.
inline ScalarImage predict_primal_warp(const PredictContext& ctx, const ScalarImage& x) {
  if (ctx.measured.is_identity()) return x;
  return WarpOp{ctx.measured}.apply(x);
}

inline Prediction predict_identity(const PredictContext&, const ScalarImage& x, const VectorField2& y) {
  return {x, y};
}

inline Prediction predict_primal_only(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y) {
  return {predict_primal_warp(ctx, x), y};
}

inline Prediction predict_zero_dual(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y) {
  return {predict_primal_warp(ctx, x), VectorField2(y.width(), y.height())};
}

/// Proximal re-fit of the dual against the predicted primal:
/// y_pred = prox_{sigma (G* + rho_tilde/2 ||.||^2)}(y + sigma D x_pred - sigma D x).
inline Prediction predict_proximal_old(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y,
                                       double rho_tilde) {
  ScalarImage xp = predict_primal_warp(ctx, x);
  VectorField2 arg = y;
  const VectorField2 dxp = ctx.grad.apply(xp);
  const VectorField2 dx = ctx.grad.apply(x);
  for (std::size_t k = 0; k < arg.size(); ++k) arg[k] += ctx.sigma * (dxp[k] - dx[k]);
  return {std::move(xp), prox_tv_conjugate_strong(TVRegulariser{ctx.alpha}, rho_tilde, ctx.sigma, arg)};
}

// ---------------------------------------------------------------------------
// Pointwise transport with a Jacobian correction.

/// y_pred(xi) = t(xi) y(v(xi)).
///
/// tv mode: t = (|grad v^T Dx(v(xi))| / |Dx(v(xi))|) (grad v)^{-1} where
/// Dx(v(xi)) != 0, else the identity. inner_product mode:
/// t = |det grad v| (grad v)^{-1}.
inline Prediction predict_pointwise_l2(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y,
                                       PreserveMode mode) {
  ScalarImage xp = predict_primal_warp(ctx, x);
  const VectorField2 dx = ctx.grad.apply(x);
  const Mat2 jac = jacobian_of_displacement(ctx.measured);
  const Mat2 jac_inv = jac.inverse();
  const Mat2 jac_t = jac.transpose();
  const double det_abs = std::abs(jac.det());
  VectorField2 yp(y.width(), y.height());
  for (std::size_t j = 0; j < y.height(); ++j) {
    for (std::size_t i = 0; i < y.width(); ++i) {
      const Vec2 pos = ctx.measured.map({static_cast<double>(i), static_cast<double>(j)});
      const Vec2 yv = sample_bilinear(y, pos);
      if (mode == PreserveMode::inner_product) {
        yp(i, j) = det_abs * (jac_inv * yv);
        continue;
      }
      const Vec2 g = sample_bilinear(dx, pos);
      const double ng = norm(g);
      yp(i, j) = ng > 0.0 ? (norm(jac_t * g) / ng) * (jac_inv * yv) : yv;
    }
  }
  return {std::move(xp), std::move(yp)};
}

// ---------------------------------------------------------------------------
// In-place rotation of the dual.

/// One pixel of the rotation predictor.
///
/// With dx = D x(xi) and dxp = D x_pred(xi): if dx != 0 rotate y by the oriented
/// angle from dx to dxp (inner_product mode also divides by c = |dxp| / |dx|
/// when c > 0). If dx == 0 and dxp != 0 the tv mode returns alpha dxp / |dxp|;
/// inner_product mode returns 0 there, which keeps the pointwise products equal.
inline Vec2 rotation_dual_update(const Vec2& dx, const Vec2& dxp, const Vec2& y, double alpha, PreserveMode mode) {
  const double ndx = norm(dx);
  const double ndxp = norm(dxp);
  if (ndx == 0.0) {
    if (ndxp == 0.0 || mode == PreserveMode::inner_product) return {};
    return (alpha / ndxp) * dxp;
  }
  if (ndxp == 0.0) return y;  // c = 0, any angle works; take theta = 0
  const double theta = std::atan2(cross(dx, dxp), dot(dx, dxp));
  const Vec2 rotated = Mat2::rotation(theta) * y;
  if (mode == PreserveMode::tv) return rotated;
  return (ndx / ndxp) * rotated;
}

inline Prediction predict_rotation(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y,
                                   PreserveMode mode) {
  ScalarImage xp = predict_primal_warp(ctx, x);
  const GradientCaches caches = make_caches(ctx, x, xp);
  VectorField2 yp(y.width(), y.height());
  for (std::size_t k = 0; k < y.size(); ++k)
    yp[k] = rotation_dual_update(caches.Dx[k], caches.Dx_pred[k], y[k], ctx.alpha, mode);
  return {std::move(xp), std::move(yp)};
}

// ---------------------------------------------------------------------------
// Component-wise inner-product preservation.

/// (Dx)_i / (Dx_pred)_i * y_i when |(Dx_pred)_i| > eps, else y_i. The ratio is
/// deliberately not clamped.
inline double greedy_component_update(double dx, double dxp, double y, double eps_tol) {
  return std::abs(dxp) > eps_tol ? dx / dxp * y : y;
}

inline Prediction predict_greedy(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y,
                                 double eps_tol) {
  if (!(eps_tol > 0.0)) throw std::invalid_argument("predict_greedy: eps_tol must be > 0");
  ScalarImage xp = predict_primal_warp(ctx, x);
  const GradientCaches caches = make_caches(ctx, x, xp);
  VectorField2 yp(y.width(), y.height());
  for (std::size_t k = 0; k < y.size(); ++k) {
    yp[k].x = greedy_component_update(caches.Dx[k].x, caches.Dx_pred[k].x, y[k].x, eps_tol);
    yp[k].y = greedy_component_update(caches.Dx[k].y, caches.Dx_pred[k].y, y[k].y, eps_tol);
  }
  return {std::move(xp), std::move(yp)};
}

// ---------------------------------------------------------------------------
// Strict greedy: align the transported dual with the predicted gradient.

/// s d with s = <g, yv> / |g| (0 when g = 0) and d = dxp / |dxp| ((1, 0) when dxp = 0).
inline Vec2 strict_greedy_update(const Vec2& g, const Vec2& yv, const Vec2& dxp) {
  const double ng = norm(g);
  const double s = ng > 0.0 ? dot(g, yv) / ng : 0.0;
  const double nd = norm(dxp);
  const Vec2 dir = nd > 0.0 ? (1.0 / nd) * dxp : Vec2{1.0, 0.0};
  return s * dir;
}

inline Prediction predict_strict_greedy(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y) {
  ScalarImage xp = predict_primal_warp(ctx, x);
  const GradientCaches caches = make_caches(ctx, x, xp);
  VectorField2 yp(y.width(), y.height());
  for (std::size_t j = 0; j < y.height(); ++j) {
    for (std::size_t i = 0; i < y.width(); ++i) {
      const Vec2 pos = ctx.measured.map({static_cast<double>(i), static_cast<double>(j)});
      yp(i, j) = strict_greedy_update(sample_bilinear(caches.Dx, pos), sample_bilinear(y, pos), caches.Dx_pred(i, j));
    }
  }
  return {std::move(xp), std::move(yp)};
}

// ---------------------------------------------------------------------------
// Global preservation through a linear solve.

namespace detail {

/// Integer translation of a measured displacement, or throws.
inline std::pair<long, long> integer_shift(const Displacement& d) {
  if (d.kind != Displacement::Kind::translation)
    throw std::invalid_argument("predict_global_tv: only identity or integer translations are supported");
  const double rx = std::round(d.shift.x), ry = std::round(d.shift.y);
  if (std::abs(d.shift.x - rx) > 1e-9 || std::abs(d.shift.y - ry) > 1e-9)
    throw std::invalid_argument("predict_global_tv: non-integer translation; bilinear warps are not invertible");
  return {static_cast<long>(rx), static_cast<long>(ry)};
}

/// Periodic shift (W f)(xi) = f(xi + d), an orthogonal operator on the grid.
inline ScalarImage circular_shift(const ScalarImage& f, long dx, long dy) {
  const long w = static_cast<long>(f.width()), h = static_cast<long>(f.height());
  ScalarImage out(f.width(), f.height());
  for (long j = 0; j < h; ++j)
    for (long i = 0; i < w; ++i)
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          f(static_cast<std::size_t>(((i + dx) % w + w) % w), static_cast<std::size_t>(((j + dy) % h + h) % h));
  return out;
}

}  // namespace detail

struct CgReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Conjugate gradients for the SPD system D_dir^* D_dir z = rhs.
inline ScalarImage solve_dirichlet_normal_equations(const GradOp& dirichlet, const ScalarImage& rhs, double tol,
                                                    int max_iters, CgReport* report = nullptr) {
  ScalarImage z(rhs.width(), rhs.height(), 0.0);
  ScalarImage r = rhs;
  ScalarImage p = r;
  double rr = inner(r, r);
  const double rhs_norm = std::sqrt(rr);
  int it = 0;
  if (rhs_norm > 0.0) {
    for (; it < max_iters && std::sqrt(rr) > tol * rhs_norm; ++it) {
      const ScalarImage ap = dirichlet.adjoint(dirichlet.apply(p));
      const double step = rr / inner(p, ap);
      for (std::size_t k = 0; k < z.size(); ++k) {
        z[k] += step * p[k];
        r[k] -= step * ap[k];
      }
      const double rr_new = inner(r, r);
      const double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t k = 0; k < p.size(); ++k) p[k] = r[k] + beta * p[k];
    }
    if (std::sqrt(rr) > tol * rhs_norm)
      throw std::runtime_error("predict_global_tv: conjugate gradients did not converge within the iteration cap");
  }
  if (report) *report = {it, rhs_norm > 0.0 ? std::sqrt(rr) / rhs_norm : 0.0};
  return z;
}

/// x_pred = W x with W an orthogonal (periodic) integer shift; the dual is
/// D_dir z where W^* D_dir^* D_dir z = D^* Q y, Q = ||D_dir x_pred||_{2,1} / ||D x||_{2,1}
/// in tv mode and Q = 1 in inner_product mode.
inline Prediction predict_global_tv(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y,
                                    PreserveMode mode, double tol = 1e-12, int max_iters = 10000) {
  const auto [sx, sy] = detail::integer_shift(ctx.measured);
  const GradOp dirichlet{Boundary::dirichlet, ctx.grad.h};
  ScalarImage xp = detail::circular_shift(x, sx, sy);
  double q = 1.0;
  if (mode == PreserveMode::tv) {
    const double tv_now = norm_21(ctx.grad.apply(x));
    if (tv_now == 0.0) throw std::domain_error("predict_global_tv: ||D x||_{2,1} = 0, scale undefined");
    q = norm_21(dirichlet.apply(xp)) / tv_now;
  }
  ScalarImage rhs = ctx.grad.adjoint(y);
  rhs *= q;
  // (W^*)^{-1} = W for an orthogonal shift.
  rhs = detail::circular_shift(rhs, sx, sy);
  const ScalarImage z = solve_dirichlet_normal_equations(dirichlet, rhs, tol, max_iters);
  return {std::move(xp), dirichlet.apply(z)};
}

// ---------------------------------------------------------------------------
// Dual scaling.

inline double dual_scaling_activation(Activation a, double t) {
  if (a == Activation::sigmoid) return 1.0 / (1.0 + std::exp(-1000.0 * (t - 0.05)));
  return 1.0 - std::pow(std::abs(t - 1.0), 0.2);
}

/// y_pred(xi) = (1 - chi nu(x_delta(xi))) y(xi), x_delta the primal change
/// normalised by its maximum over the frame (floored at 1e-12).
inline Prediction predict_dual_scaling(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y,
                                       double chi, Activation activation) {
  if (chi < 0.0 || chi > 1.0) throw std::invalid_argument("predict_dual_scaling: chi must lie in [0, 1]");
  ScalarImage xp = predict_primal_warp(ctx, x);
  double max_change = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) max_change = std::max(max_change, std::abs(xp[k] - x[k]));
  const double normaliser = std::max(1e-12, max_change);
  VectorField2 yp(y.width(), y.height());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double delta = std::abs(xp[k] - x[k]) / normaliser;
    yp[k] = (1.0 - chi * dual_scaling_activation(activation, delta)) * y[k];
  }
  return {std::move(xp), std::move(yp)};
}

// ---------------------------------------------------------------------------

template <class P>
concept PredictorLike = requires(const P& p, const PredictContext& ctx, const ScalarImage& x, const VectorField2& y) {
  { p.predict(ctx, x, y) } -> std::convertible_to<Prediction>;
};

/// Runtime-selected predictor.
class Predictor {
 public:
  Predictor() = default;
  explicit Predictor(PredictorKind kind) : kind_(kind) {}

  const PredictorKind& kind() const { return kind_; }

  Prediction predict(const PredictContext& ctx, const ScalarImage& x, const VectorField2& y) const {
    using namespace predictor;
    return std::visit(
        [&](const auto& k) -> Prediction {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, NoPrediction>) return predict_identity(ctx, x, y);
          else if constexpr (std::is_same_v<K, PrimalOnly>) return predict_primal_only(ctx, x, y);
          else if constexpr (std::is_same_v<K, ZeroDual>) return predict_zero_dual(ctx, x, y);
          else if constexpr (std::is_same_v<K, ProximalOld>) return predict_proximal_old(ctx, x, y, k.rho_tilde);
          else if constexpr (std::is_same_v<K, PointwiseL2>) return predict_pointwise_l2(ctx, x, y, k.mode);
          else if constexpr (std::is_same_v<K, Rotation>) return predict_rotation(ctx, x, y, k.mode);
          else if constexpr (std::is_same_v<K, Greedy>) return predict_greedy(ctx, x, y, k.eps_tol);
          else if constexpr (std::is_same_v<K, StrictGreedy>) return predict_strict_greedy(ctx, x, y);
          else if constexpr (std::is_same_v<K, GlobalTV>) return predict_global_tv(ctx, x, y, k.mode, k.tol, k.max_iters);
          else return predict_dual_scaling(ctx, x, y, k.chi, k.activation);
        },
        kind_);
  }

 private:
  PredictorKind kind_ = predictor::NoPrediction{};
};

/// Canonical snake_case name used in configs and CSV files.
inline std::string predictor_name(const PredictorKind& kind) {
  static constexpr const char* names[] = {"no_prediction", "primal_only",   "zero_dual", "proximal_old",
                                          "pointwise_l2",  "rotation",      "greedy",    "strict_greedy",
                                          "global_tv",     "dual_scaling"};
  return names[kind.index()];
}

}  // namespace popd
