#pragma once

// Property suites shared by the `selftest` command and the acceptance run:
// operator adjointness, prox maps against 1-D minimisation, predictor
// preservation identities and a finite-difference check of the PET gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "popd/core.hpp"
#include "popd/diagnostics.hpp"
#include "popd/operators.hpp"
#include "popd/predictors.hpp"
#include "popd/proxops.hpp"

namespace popd {

struct CheckResult {
  std::string suite;
  std::string name;
  double value = 0.0;  // worst observed error
  double tol = 0.0;
  bool pass = false;
};

struct SelftestOptions {
  std::vector<std::size_t> adjoint_sizes{8, 16};
  int adjoint_pairs = 20;
  int prox_instances = 50;
  std::size_t preservation_size = 16;
  int gradient_probes = 20;
  std::uint64_t seed = 2024;
  /// Fault injection: perturb the gradient adjoint so the adjoint suite fails.
  bool broken_adjoint = false;
};

namespace detail {

inline CheckResult check(std::string suite, std::string name, double value, double tol) {
  return {std::move(suite), std::move(name), value, tol, std::isfinite(value) && value <= tol};
}

inline double rel_diff(double a, double b) {
  const double d = std::max(std::abs(a), std::abs(b));
  return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

inline ScalarImage random_image(SeededRng& rng, std::size_t w, std::size_t h) {
  ScalarImage x(w, h);
  for (auto& v : x) v = rng.normal();
  return x;
}

inline VectorField2 random_field(SeededRng& rng, std::size_t w, std::size_t h) {
  VectorField2 y(w, h);
  for (auto& v : y) v = {rng.normal(), rng.normal()};
  return y;
}

/// Minimiser over [lo, hi] of a convex function given its derivative, by
/// bisection on the sign of the derivative.
inline double minimise_convex_1d(const std::function<double(double)>& deriv, double lo, double hi) {
  if (deriv(lo) >= 0.0) return lo;
  if (deriv(hi) <= 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (deriv(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Piecewise-constant test image: a few axis-aligned rectangles and a disc on
/// a zero background, all kept `margin` pixels away from the border.
inline ScalarImage piecewise_constant_image(std::size_t n, std::uint64_t seed, std::size_t margin = 4) {
  SeededRng rng(seed);
  ScalarImage x(n, n, 0.0);
  const double lo = static_cast<double>(margin), span = static_cast<double>(n - 2 * margin);
  for (int r = 0; r < 3; ++r) {
    const double x0 = lo + rng.uniform() * 0.5 * span, y0 = lo + rng.uniform() * 0.5 * span;
    const double x1 = x0 + (0.2 + 0.3 * rng.uniform()) * span, y1 = y0 + (0.2 + 0.3 * rng.uniform()) * span;
    const double v = 0.2 + 0.8 * rng.uniform();
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (i >= x0 && i < x1 && j >= y0 && j < y1) x(i, j) = v;
  }
  const double cx = lo + 0.5 * span, cy = lo + 0.5 * span, rad = 0.2 * span;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (std::hypot(i - cx, j - cy) < rad) x(i, j) = 0.5;
  return x;
}

/// Dual attaining alpha ||Dx||_{2,1} = <Dx, y>: alpha Dx / |Dx| where Dx != 0,
/// a random point of the alpha-ball elsewhere.
inline VectorField2 attaining_dual(const GradOp& D, double alpha, const ScalarImage& x, std::uint64_t seed) {
  SeededRng rng(seed);
  const VectorField2 dx = D.apply(x);
  VectorField2 y(x.width(), x.height());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double n = norm(dx[k]);
    if (n > 0.0) {
      y[k] = (alpha / n) * dx[k];
    } else {
      const double r = alpha * std::sqrt(rng.uniform()), t = 2.0 * std::numbers::pi * rng.uniform();
      y[k] = {r * std::cos(t), r * std::sin(t)};
    }
  }
  return y;
}

// ---------------------------------------------------------------------------

/// <Ax, y> against <x, A^* y> for the gradient (both boundaries), the Radon
/// transform (size x size image, size bins x size/2 angles, half masked) and a
/// rotation warp. Worst relative error over `pairs` random pairs per operator.
inline std::vector<CheckResult> adjoint_suite(const SelftestOptions& o, double tol = 1e-10) {
  std::vector<CheckResult> out;
  SeededRng rng(o.seed);
  for (std::size_t n : o.adjoint_sizes) {
    const std::string sz = std::to_string(n);
    for (Boundary b : {Boundary::neumann, Boundary::dirichlet}) {
      const GradOp D{b};
      double worst = 0.0;
      for (int p = 0; p < o.adjoint_pairs; ++p) {
        const ScalarImage x = detail::random_image(rng, n, n);
        const VectorField2 y = detail::random_field(rng, n, n);
        ScalarImage aty = D.adjoint(y);
        if (o.broken_adjoint) aty[0] += 1e-3 * y[0].x;
        worst = std::max(worst, detail::rel_diff(inner(D.apply(x), y), inner(x, aty)));
      }
      out.push_back(detail::check("adjoint", std::string("gradient-") + (b == Boundary::neumann ? "neumann" : "dirichlet") +
                                                 "-" + sz, worst, tol));
    }
    {
      auto geom = std::make_shared<const RadonGeometry>(n, n, std::max<std::size_t>(1, n / 2), n);
      std::vector<std::uint8_t> mask(geom->n_rows());
      for (auto& m : mask) m = rng.bernoulli(0.5) ? 1 : 0;
      const RadonOp A(geom, mask);
      double worst = 0.0;
      for (int p = 0; p < o.adjoint_pairs; ++p) {
        const ScalarImage x = detail::random_image(rng, n, n);
        Sinogram s = A.make_sinogram();
        for (auto& v : s) v = rng.normal();
        worst = std::max(worst, detail::rel_diff(inner(A.apply(x), s), inner(x, A.adjoint(s))));
      }
      out.push_back(detail::check("adjoint", "radon-" + sz, worst, tol));
    }
    {
      const double c = 0.5 * static_cast<double>(n - 1);
      const WarpOp W{Displacement::rotation(0.3, {c + 0.4, c - 0.7})};
      double worst = 0.0;
      for (int p = 0; p < o.adjoint_pairs; ++p) {
        const ScalarImage x = detail::random_image(rng, n, n);
        const ScalarImage y = detail::random_image(rng, n, n);
        worst = std::max(worst, detail::rel_diff(inner(W.apply(x), y), inner(x, W.adjoint(y))));
      }
      out.push_back(detail::check("adjoint", "warp-rotation-" + sz, worst, tol));
    }
  }
  return out;
}

/// Scalar instances of each prox map against bisection on the derivative of
/// the prox objective.
inline std::vector<CheckResult> prox_suite(const SelftestOptions& o, double tol = 1e-8) {
  SeededRng rng(o.seed + 1);
  double w_l2 = 0.0, w_nonneg = 0.0, w_ball = 0.0, w_strong = 0.0;
  for (int t = 0; t < o.prox_instances; ++t) {
    // prox of tau/2 (u - z)^2
    const double z = 3.0 * rng.normal(), v = 3.0 * rng.normal(), tau = 0.01 + 2.0 * rng.uniform();
    const double u_ref = detail::minimise_convex_1d([&](double u) { return tau * (u - z) + (u - v); }, -100.0, 100.0);
    const double u = prox_l2_data(DataTermL2{ScalarImage(1, 1, z)}, tau, ScalarImage(1, 1, v))[0];
    w_l2 = std::max(w_l2, std::abs(u - u_ref));

    const double nn_ref = detail::minimise_convex_1d([&](double s) { return s - v; }, 0.0, 100.0);
    w_nonneg = std::max(w_nonneg, std::abs(prox_nonneg(tau, ScalarImage(1, 1, v))[0] - nn_ref));

    // Projection onto the alpha-ball and its strongly convex variant, radially.
    const double alpha = 0.05 + rng.uniform(), sigma = 0.01 + 20.0 * rng.uniform(), rho = 5.0 * rng.uniform();
    const Vec2 y{rng.normal(), rng.normal()};
    const double ny = norm(y);
    const Vec2 dir = ny > 0 ? (1.0 / ny) * y : Vec2{};
    VectorField2 f(1, 1);
    f[0] = y;
    const double r_ball = detail::minimise_convex_1d([&](double r) { return r - ny; }, 0.0, alpha);
    w_ball = std::max(w_ball, norm(prox_tv_conjugate(TVRegulariser{alpha}, sigma, f)[0] - r_ball * dir));
    const double r_strong =
        detail::minimise_convex_1d([&](double r) { return rho * r + (r - ny) / sigma; }, 0.0, alpha);
    w_strong = std::max(w_strong, norm(prox_tv_conjugate_strong(TVRegulariser{alpha}, rho, sigma, f)[0] - r_strong * dir));
  }
  return {detail::check("prox-oracle", "prox_l2_data", w_l2, tol),
          detail::check("prox-oracle", "prox_nonneg", w_nonneg, tol),
          detail::check("prox-oracle", "prox_tv_conjugate", w_ball, tol),
          detail::check("prox-oracle", "prox_tv_conjugate_strong", w_strong, tol)};
}

/// TV attainment and feasibility of the predicted duals on piecewise-constant
/// images whose dual attains alpha ||Dx||_{2,1}, plus Greedy's componentwise
/// products.
inline std::vector<CheckResult> preservation_suite(const SelftestOptions& o, double tv_tol = 1e-8,
                                                   double feas_tol = 1e-12, double greedy_tol = 1e-10) {
  std::vector<CheckResult> out;
  const std::size_t n = o.preservation_size;
  const double alpha = 0.25;
  const GradOp D{};
  const double c = 0.5 * static_cast<double>(n - 1);
  const ScalarImage x = piecewise_constant_image(n, o.seed + 2);
  const VectorField2 y = attaining_dual(D, alpha, x, o.seed + 3);

  auto ctx_for = [&](Displacement d) { return PredictContext{d, D, alpha, 1.0}; };
  auto residuals = [&](const GradOp& G, const Prediction& p) { return tv_preservation_residual(G, alpha, p.x, p.y); };

  const auto rot = predict_rotation(ctx_for(Displacement::rotation(0.2, {c + 0.3, c - 0.2})), x, y, PreserveMode::tv);
  const auto [rot_res, rot_feas] = residuals(D, rot);
  out.push_back(detail::check("preservation", "rotation-tv-attainment", std::abs(rot_res), tv_tol));
  out.push_back(detail::check("preservation", "rotation-feasibility", rot_feas, feas_tol));

  const Displacement shift = Displacement::translation({2.0, -1.0});
  const auto sg = predict_strict_greedy(ctx_for(shift), x, y);
  const auto [sg_res, sg_feas] = residuals(D, sg);
  out.push_back(detail::check("preservation", "strict-greedy-tv-attainment", std::abs(sg_res), tv_tol));
  out.push_back(detail::check("preservation", "strict-greedy-feasibility", sg_feas, feas_tol));

  const auto pl2 = predict_pointwise_l2(ctx_for(shift), x, y, PreserveMode::tv);
  out.push_back(detail::check("preservation", "pointwise-l2-tv-attainment", std::abs(residuals(D, pl2).first), tv_tol));

  const auto gtv = predict_global_tv(ctx_for(shift), x, y, PreserveMode::tv);
  const GradOp Dd{Boundary::dirichlet};
  out.push_back(detail::check("preservation", "global-tv-attainment", std::abs(residuals(Dd, gtv).first), tv_tol));

  const auto gr = predict_greedy(ctx_for(Displacement::translation({0.4, 0.7})), x, y, 1e-12);
  const VectorField2 dx = D.apply(x), dxp = D.apply(gr.x);
  double worst = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (std::abs(dxp[k].x) > 1e-12) worst = std::max(worst, std::abs(dxp[k].x * gr.y[k].x - dx[k].x * y[k].x));
    if (std::abs(dxp[k].y) > 1e-12) worst = std::max(worst, std::abs(dxp[k].y * gr.y[k].y - dx[k].y * y[k].y));
  }
  out.push_back(detail::check("preservation", "greedy-componentwise-products", worst, greedy_tol));
  return out;
}

/// grad_poisson against central differences of the Poisson energy along
/// random directions (8 x 8 image, 8 bins x 4 angles, half the rows active).
/// Relative error with the denominator floored at 1e-3 ||g|| ||d||.
inline std::vector<CheckResult> gradient_suite(const SelftestOptions& o, double tol = 1e-5, double eps = 1e-5) {
  SeededRng rng(o.seed + 4);
  auto geom = std::make_shared<const RadonGeometry>(8, 8, 4, 8);
  std::vector<std::uint8_t> mask(geom->n_rows());
  for (auto& m : mask) m = rng.bernoulli(0.5) ? 1 : 0;
  RadonOp A(geom, mask);
  ScalarImage x(8, 8);
  for (auto& v : x) v = 0.2 + rng.uniform();
  Sinogram c = A.make_sinogram(0.5);
  const Sinogram ax = A.apply(x);
  CountImage z(ax.width(), ax.height(), 0);
  for (std::size_t r = 0; r < ax.size(); ++r)
    if (A.active(r)) z[r] = rng.poisson(ax[r] + c[r]);
  const DataTermPoisson E{A, z, c, 300.0};
  const ScalarImage g = grad_poisson(E, x);
  double worst = 0.0;
  for (int p = 0; p < o.gradient_probes; ++p) {
    ScalarImage d(8, 8);
    for (auto& v : d) v = rng.normal();
    d *= 1.0 / l2_norm(d);
    const double fd = (E.energy(x + eps * d) - E.energy(x - eps * d)) / (2.0 * eps);
    const double an = inner(g, d);
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-3 * l2_norm(g)));
  }
  return {detail::check("gradient-check", "grad_poisson-central-differences", worst, tol)};
}

/// Runs every suite, printing one PASS/FAIL line per property. True if all pass.
inline bool run_selftest(const SelftestOptions& o, std::ostream& os) {
  std::vector<CheckResult> all;
  for (auto suite : {adjoint_suite(o), prox_suite(o), preservation_suite(o), gradient_suite(o)})
    all.insert(all.end(), suite.begin(), suite.end());
  bool ok = true;
  for (const auto& r : all) {
    os << (r.pass ? "PASS " : "FAIL ") << r.suite << '/' << r.name << "  err=" << r.value << " tol=" << r.tol << '\n';
    ok = ok && r.pass;
  }
  os << (ok ? "selftest: all properties pass\n" : "selftest: FAILED\n");
  return ok;
}

}  // namespace popd
