#pragma once

// Proximal maps and smooth-term gradients for TV denoising and Poisson PET.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "popd/core.hpp"
#include "popd/operators.hpp"

namespace popd {

/// F(x) = 1/2 ||x - z||^2, strongly convex with factor 1.
struct DataTermL2 {
  ScalarImage z;

  static constexpr double strong_convexity = 1.0;

  double value(const ScalarImage& x) const {
    require_same_shape(x, z, "DataTermL2::value");
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - z[k]) * (x[k] - z[k]);
    return 0.5 * s;
  }
};

/// E(x) = sum over active i of [Ax]_i - z_i log([Ax + c]_i), with F the
/// indicator of the nonnegative orthant.
struct DataTermPoisson {
  RadonOp A;
  CountImage z;
  Sinogram c;
  double L = 300.0;

  /// Returns +inf when a log argument with positive count is nonpositive.
  double energy(const ScalarImage& x) const {
    const Sinogram ax = A.apply(x);
    double s = 0.0;
    for (std::size_t r = 0; r < ax.size(); ++r) {
      if (!A.active(r)) continue;
      s += ax[r];
      if (z[r] != 0) {
        const double arg = ax[r] + c[r];
        if (arg <= 0.0) return std::numeric_limits<double>::infinity();
        s -= static_cast<double>(z[r]) * std::log(arg);
      }
    }
    return s;
  }

  /// A*(1 - z / (Ax + c)) over active entries.
  ScalarImage gradient(const ScalarImage& x) const {
    const Sinogram ax = A.apply(x);
    Sinogram r = A.make_sinogram();
    for (std::size_t k = 0; k < ax.size(); ++k) {
      if (!A.active(k)) continue;
      const double denom = ax[k] + c[k];
      if (denom <= 0.0) throw std::domain_error("grad_poisson: nonpositive A x + c on an active entry");
      r[k] = 1.0 - static_cast<double>(z[k]) / denom;
    }
    return A.adjoint(r);
  }
};

/// G = alpha ||.||_{2,1}; its conjugate is the indicator of the pointwise alpha-ball.
struct TVRegulariser {
  double alpha = 0.25;

  double conjugate(const VectorField2& y, double slack = 1e-12) const {
    return norm_2inf(y) <= alpha + slack ? 0.0 : std::numeric_limits<double>::infinity();
  }
};

inline ScalarImage prox_l2_data(const DataTermL2& t, double tau, const ScalarImage& x) {
  if (!(tau > 0.0)) throw std::invalid_argument("prox_l2_data: tau must be > 0");
  require_same_shape(x, t.z, "prox_l2_data");
  ScalarImage out(x.width(), x.height());
  const double inv = 1.0 / (1.0 + tau);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] + tau * t.z[k]) * inv;
  return out;
}

inline ScalarImage prox_nonneg(double /*tau*/, const ScalarImage& x) {
  ScalarImage out = x;
  for (auto& v : out) v = std::max(v, 0.0);
  return out;
}

inline ScalarImage grad_poisson(const DataTermPoisson& t, const ScalarImage& x) { return t.gradient(x); }

/// Running Lipschitz estimate max{L_prev, 0.9 ||grad(x) - grad(x_pred)|| / ||x - x_pred||}.
/// Diagnostic only; the stepping value of L stays fixed.
inline double update_lipschitz_estimate(double L_prev, const ScalarImage& grad_x, const ScalarImage& grad_pred,
                                        const ScalarImage& x, const ScalarImage& x_pred) {
  const double dx = l2_norm(x - x_pred);
  if (dx == 0.0) return L_prev;
  return std::max(L_prev, 0.9 * l2_norm(grad_x - grad_pred) / dx);
}

namespace detail {
inline Vec2 project_ball(const Vec2& v, double radius) {
  const double n = norm(v);
  return n > radius ? (radius / n) * v : v;
}
}  // namespace detail

/// Pointwise radial projection onto the alpha-ball; sigma plays no role.
inline VectorField2 prox_tv_conjugate(const TVRegulariser& r, double sigma, const VectorField2& y) {
  if (!(sigma > 0.0)) throw std::invalid_argument("prox_tv_conjugate: sigma must be > 0");
  VectorField2 out(y.width(), y.height());
  for (std::size_t k = 0; k < y.size(); ++k) out[k] = detail::project_ball(y[k], r.alpha);
  return out;
}

/// Prox of G* + (rho_tilde/2)||.||^2: shrink by 1/(1 + sigma rho_tilde), then project.
inline VectorField2 prox_tv_conjugate_strong(const TVRegulariser& r, double rho_tilde, double sigma,
                                             const VectorField2& y) {
  if (sigma < 0.0 || rho_tilde < 0.0) throw std::invalid_argument("prox_tv_conjugate_strong: negative parameter");
  const double shrink = 1.0 / (1.0 + sigma * rho_tilde);
  VectorField2 out(y.width(), y.height());
  for (std::size_t k = 0; k < y.size(); ++k) out[k] = detail::project_ball(shrink * y[k], r.alpha);
  return out;
}

}  // namespace popd
