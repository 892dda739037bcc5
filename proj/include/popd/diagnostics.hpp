#pragma once

// Computable theory checks: static saddle oracles, Lagrangian duality gaps,
// TV-preservation residuals and the prediction-penalty bound.

#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

#include "popd/core.hpp"
#include "popd/engine.hpp"
#include "popd/operators.hpp"
#include "popd/params.hpp"
#include "popd/problem.hpp"

namespace popd {

struct StaticSaddle {
  ScalarImage x_opt;
  VectorField2 y_opt;
  double gap_achieved = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
};

/// alpha ||Dx||_{2,1} - <Dx, y> and max(0, ||y||_{2,inf} - alpha).
inline std::pair<double, double> tv_preservation_residual(const GradOp& D, double alpha, const ScalarImage& x,
                                                          const VectorField2& y) {
  const VectorField2 dx = D.apply(x);
  return {alpha * norm_21(dx) - inner(dx, y), std::max(0.0, norm_2inf(y) - alpha)};
}

/// eta ( [F+E](x) + <Kx, y_ref> - G^*(y_ref) - [F+E](x_ref) - <K^*y, x_ref> + G^*(y) ).
///
/// G^* is the indicator of the alpha-ball, so an infeasible y gives +inf and
/// an infeasible reference dual gives -inf.
inline double duality_gap(const FrameProblem& problem, const ScalarImage& x, const VectorField2& y,
                          const ScalarImage& x_ref, const VectorField2& y_ref, double eta) {
  const double g_y = problem.regulariser.conjugate(y);
  if (std::isinf(g_y)) return std::numeric_limits<double>::infinity();
  const double g_ref = problem.regulariser.conjugate(y_ref);
  if (std::isinf(g_ref)) return -std::numeric_limits<double>::infinity();
  const double fx = problem.smooth_plus_data(x);
  const double fref = problem.smooth_plus_data(x_ref);
  if (std::isinf(fx)) return std::numeric_limits<double>::infinity();
  return eta * ((fx - fref) + inner(problem.grad.apply(x), y_ref) - inner(y, problem.grad.apply(x_ref)));
}

struct StaticSolveOptions {
  std::size_t check_every = 50;
  /// Step-length acceleration for strongly convex F (data term L2 only).
  bool accelerate = true;
};

namespace detail {

/// x = z - D^* y and the primal-dual gap of the ROF model at (x, y), which
/// reduces to the attainment residual alpha ||Dx||_{2,1} - <Dx, y>.
inline std::pair<ScalarImage, double> rof_primal_and_gap(const FrameProblem& problem, const VectorField2& y) {
  const auto& z = std::get<DataTermL2>(problem.data).z;
  ScalarImage x = z - problem.grad.adjoint(y);
  const double r = tv_preservation_residual(problem.grad, problem.regulariser.alpha, x, y).first;
  return {std::move(x), r};
}

inline double fixed_point_residual(const PdState& before, const PdState& after) {
  return std::sqrt(std::pow(l2_norm(after.x - before.x), 2) + std::pow(l2_norm(after.y - before.y), 2));
}

}  // namespace detail

/// Static saddle point of one frame by the plain primal-dual iteration from zero.
///
/// For L2 data the returned primal is z - D^* y_opt and gap_achieved is the
/// exact primal-dual gap there. For Poisson data gap_achieved is the
/// fixed-point residual ||u^{n+1} - u^n||. Reaching max_iters without meeting
/// gap_tol sets converged = false and returns the last iterate.
inline StaticSaddle solve_static(const FrameProblem& problem, std::size_t max_iters, double gap_tol,
                                 const StaticSolveOptions& opts = {}) {
  if (max_iters < 1) throw std::invalid_argument("solve_static: max_iters must be >= 1");
  const double knorm = problem.grad.norm_bound();
  const bool l2 = !problem.has_smooth_term();
  StepParams p;
  if (l2) {
    p.tau = p.sigma = 1.0 / knorm;
  } else {
    const double L = std::get<DataTermPoisson>(problem.data).L;
    p.tau = 0.5 / L;
    p.sigma = 0.5 / (p.tau * knorm * knorm);
  }
  const double gamma = l2 ? DataTermL2::strong_convexity : 0.0;

  PdState state = make_zero_state(problem.image_width(), problem.image_height());
  StaticSaddle out;
  for (std::size_t n = 1; n <= max_iters; ++n) {
    PdState next;
    if (l2 && opts.accelerate) {
      const ScalarImage kty = problem.grad.adjoint(state.y);
      ScalarImage arg = state.x;
      for (std::size_t k = 0; k < arg.size(); ++k) arg[k] -= p.tau * kty[k];
      next.x = problem.prox_primal(p.tau, arg);
      const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * p.tau);
      p.tau *= theta;
      p.sigma /= theta;
      const ScalarImage over = next.x + theta * (next.x - state.x);
      VectorField2 dual = problem.grad.apply(over);
      for (std::size_t k = 0; k < dual.size(); ++k) dual[k] = state.y[k] + p.sigma * dual[k];
      next.y = prox_tv_conjugate(problem.regulariser, p.sigma, dual);
    } else {
      next = pdps_step(problem, state, p);
    }
    const bool check = n % opts.check_every == 0 || n == max_iters;
    if (!l2) {
      const double res = detail::fixed_point_residual(state, next);
      state = std::move(next);
      out.iterations = n;
      out.gap_achieved = res;
      if (res <= gap_tol) {
        out.converged = true;
        break;
      }
      continue;
    }
    state = std::move(next);
    out.iterations = n;
    if (check) {
      const double r = detail::rof_primal_and_gap(problem, state.y).second;
      out.gap_achieved = r;
      if (r <= gap_tol) {
        out.converged = true;
        break;
      }
    }
  }
  if (l2) {
    auto [x, r] = detail::rof_primal_and_gap(problem, state.y);
    out.x_opt = std::move(x);
    out.gap_achieved = r;
  } else {
    out.x_opt = std::move(state.x);
  }
  out.y_opt = std::move(state.y);
  return out;
}

/// Inputs to the prediction-penalty bound. Norms of operators enter squared.
struct PenaltyInputs {
  double Lambda = 0.0;      // > ||W||^2
  double Theta = 0.0;       // > ||T||^2
  double C = 0.0;           // >= ||(eta_k/eta_{k+1}) K - T^* K W||^2
  double M_x = 0.0;
  double M_y = 0.0;
  double W_norm_sq = 1.0;
  double T_norm_sq = 1.0;
  double W_diff = 0.0;      // ||W_true - W||^2
  double T_diff = 0.0;      // ||T_true - T||^2
  double a_diff = 0.0;
  double b_diff = 0.0;
  double pi = 1.0;
  double pi_tilde = 1.0;
  double beta = 1.0;
  double kappa = 0.5;
  double dual_dist = 0.0;   // ||y^k - y_bar^k||^2

  void validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(std::string("PenaltyInputs: ") + m); };
    if (!(Lambda > W_norm_sq)) fail("Lambda must exceed ||W||^2");
    if (!(Theta > T_norm_sq)) fail("Theta must exceed ||T||^2");
    if (!(C >= 0 && M_x >= 0 && M_y >= 0 && W_norm_sq >= 0 && T_norm_sq >= 0)) fail("bounds must be >= 0");
    if (!(W_diff >= 0 && T_diff >= 0 && a_diff >= 0 && b_diff >= 0 && dual_dist >= 0)) fail("distances must be >= 0");
    if (!(pi > 0 && pi_tilde > 0 && beta > 0)) fail("pi, pi_tilde, beta must be > 0");
    if (!(kappa > 0 && kappa < 1)) fail("kappa must lie in (0, 1)");
  }
};

/// Per-frame prediction penalty for parameters p (frame k) and q (frame k+1).
/// Requires phi_k (1 + gamma_k tau_k) > phi_{k+1} Lambda.
inline double prediction_penalty(const PenaltyInputs& in, const StepParams& p, const StepParams& q) {
  in.validate();
  const double slack = p.phi * (1.0 + p.gamma * p.tau) - q.phi * in.Lambda;
  if (!(slack > 0.0)) {
    std::ostringstream os;
    os.precision(17);
    os << "prediction_penalty: phi_k (1 + gamma_k tau_k) = " << p.phi * (1.0 + p.gamma * p.tau)
       << " does not exceed phi_{k+1} Lambda = " << q.phi * in.Lambda;
    throw InfeasibleParams(os.str());
  }
  const double k2 = q.K_norm_bound * q.K_norm_bound;
  const double rho_fac = 1.0 + p.rho * p.sigma;
  const double eta2 = q.eta * q.eta;
  const double cw = in.C * in.beta + k2 * in.W_norm_sq;

  const double dual_coef = (q.psi * in.Theta - in.kappa * p.psi * rho_fac) / 2.0 + eta2 * cw / (2.0 * in.beta * slack);
  const double coef_w = eta2 * k2 * in.T_norm_sq / (2.0 * (1.0 - in.kappa) * p.psi * rho_fac) + q.eta * k2 / 2.0 +
                        q.phi * in.Lambda / (in.Lambda - in.W_norm_sq);
  const double block_w = in.M_x * (1.0 + in.pi) * in.W_diff + (1.0 + 1.0 / in.pi) * in.a_diff;
  const double coef_t = eta2 * cw / (2.0 * slack) + q.eta / 2.0 + q.psi * in.Theta / (in.Theta - in.T_norm_sq);
  const double block_t = in.M_y * (1.0 + in.pi_tilde) * in.T_diff + (1.0 + 1.0 / in.pi_tilde) * in.b_diff;
  return dual_coef * in.dual_dist + coef_w * block_w + coef_t * block_t;
}

/// Power-iteration estimate of ||W_measured - W_true||^2 for two warps on a
/// grid of the given shape.
inline double estimate_predictor_gap_norms(const Displacement& measured, const Displacement& truth,
                                           const ScalarImage& shape, int iters) {
  const WarpOp wm{measured}, wt{truth};
  const double n = op_norm_estimate([&](const ScalarImage& x) { return wm.apply(x) - wt.apply(x); },
                                    [&](const ScalarImage& y) { return wm.adjoint(y) - wt.adjoint(y); }, shape, iters);
  return n * n;
}

}  // namespace popd
