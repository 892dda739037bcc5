#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "popd/diagnostics.hpp"
#include "popd/predictors.hpp"
#include "popd/selftest.hpp"

using namespace popd;

namespace {

PredictContext ctx_for(Displacement d, double alpha = 0.25, double sigma = 1.0, GradOp D = {}) {
  return PredictContext{d, D, alpha, sigma};
}

ScalarImage random_image(SeededRng& rng, std::size_t n) {
  ScalarImage x(n, n);
  for (auto& v : x) v = rng.uniform();
  return x;
}

VectorField2 random_feasible(SeededRng& rng, std::size_t n, double alpha) {
  VectorField2 y(n, n);
  for (auto& v : y) {
    const double r = alpha * std::sqrt(rng.uniform()), t = 2.0 * std::numbers::pi * rng.uniform();
    v = {r * std::cos(t), r * std::sin(t)};
  }
  return y;
}

/// Smooth bump used for interpolation round trips.
ScalarImage smooth_image(std::size_t n) {
  ScalarImage x(n, n);
  const double c = 0.5 * static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = (static_cast<double>(i) - c) / n, dy = (static_cast<double>(j) - c) / n;
      x(i, j) = std::exp(-12.0 * (dx * dx + 2.0 * dy * dy)) + 0.3 * std::exp(-40.0 * ((dx - 0.15) * (dx - 0.15) + dy * dy));
    }
  return x;
}

double max_abs_diff(const VectorField2& a, const VectorField2& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, norm(a[k] - b[k]));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Primal warp and trivial predictors.

TEST(PrimalWarp, ZeroDisplacementIsIdentity) {
  SeededRng rng(1);
  const auto x = random_image(rng, 12);
  EXPECT_EQ(predict_primal_warp(ctx_for(Displacement::identity()), x), x);
  EXPECT_EQ(predict_primal_warp(ctx_for(Displacement::translation({0, 0})), x), x);
}

TEST(PrimalWarp, IntegerTranslationShiftsInterior) {
  SeededRng rng(2);
  const auto x = random_image(rng, 12);
  const auto w = predict_primal_warp(ctx_for(Displacement::translation({-2.0, 1.0})), x);
  for (std::size_t j = 0; j + 1 < 12; ++j)
    for (std::size_t i = 2; i < 12; ++i) EXPECT_DOUBLE_EQ(w(i, j), x(i - 2, j + 1));
}

TEST(PrimalWarp, RotationRoundTrip) {
  const std::size_t n = 64;
  const double c = 0.5 * static_cast<double>(n - 1);
  const auto x = smooth_image(n);
  const auto fwd = predict_primal_warp(ctx_for(Displacement::rotation(0.3, {c, c})), x);
  const auto back = predict_primal_warp(ctx_for(Displacement::rotation(-0.3, {c, c})), fwd);
  double m = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, std::abs(back[k] - x[k]));
  EXPECT_LE(m, 0.05);
}

TEST(TrivialPredictors, Outputs) {
  SeededRng rng(3);
  const auto x = random_image(rng, 10);
  const auto y = random_feasible(rng, 10, 0.25);
  const auto ctx = ctx_for(Displacement::translation({0.5, 0.25}));
  const auto id = predict_identity(ctx, x, y);
  EXPECT_EQ(id.x, x);
  EXPECT_EQ(id.y, y);
  const auto po = predict_primal_only(ctx, x, y);
  EXPECT_EQ(po.x, predict_primal_warp(ctx, x));
  EXPECT_EQ(po.y, y);
  const auto zd = predict_zero_dual(ctx, x, y);
  EXPECT_EQ(zd.x, po.x);
  EXPECT_EQ(zd.y, VectorField2(10, 10));
}

// ---------------------------------------------------------------------------
// Proximal baseline.

TEST(ProximalOld, OptimalDualIsFixedWithoutStrongConvexity) {
  const GradOp D{};
  const auto x = piecewise_constant_image(16, 7);
  const auto y = attaining_dual(D, 0.25, x, 8);
  const auto p = predict_proximal_old(ctx_for(Displacement::identity(), 0.25, 12.5), x, y, 0.0);
  EXPECT_LE(max_abs_diff(p.y, y), 1e-10);
  EXPECT_EQ(p.x, x);
}

TEST(ProximalOld, IdentityMotionMatchesClosedForm) {
  // With no motion the argument is y itself and the strong prox is a radial
  // shrink by 1 / (1 + sigma rho) followed by projection.
  SeededRng rng(9);
  const auto x = random_image(rng, 8);
  const auto y = random_feasible(rng, 8, 0.25);
  const double sigma = 0.04, rho = 100.0;
  const auto p = predict_proximal_old(ctx_for(Displacement::identity(), 0.25, sigma), x, y, rho);
  for (std::size_t k = 0; k < y.size(); ++k) {
    EXPECT_NEAR(p.y[k].x, y[k].x / (1 + sigma * rho), 1e-15);
    EXPECT_NEAR(p.y[k].y, y[k].y / (1 + sigma * rho), 1e-15);
  }
}

TEST(ProximalOld, OutputFeasible) {
  SeededRng rng(10);
  const auto x = random_image(rng, 16);
  const auto y = random_feasible(rng, 16, 0.25);
  const auto p = predict_proximal_old(ctx_for(Displacement::translation({1.3, -0.4}), 0.25, 12.5), x, y, 100.0);
  EXPECT_LE(norm_2inf(p.y), 0.25 + 1e-15);
}

TEST(ProximalOld, LargeRhoTildeVanishes) {
  SeededRng rng(11);
  const auto x = random_image(rng, 8);
  const auto y = random_feasible(rng, 8, 0.25);
  double prev = 1e300;
  for (double rho : {1.0, 1e2, 1e4, 1e8}) {
    const double n = norm_2inf(predict_proximal_old(ctx_for(Displacement::translation({0.5, 0}), 0.25, 12.5), x, y, rho).y);
    EXPECT_LE(n, prev);
    prev = n;
  }
  EXPECT_LT(prev, 1e-6);
}

// ---------------------------------------------------------------------------
// Pointwise transport.

TEST(PointwiseL2, TranslationTransportsWithIdentityFactor) {
  SeededRng rng(12);
  const auto x = random_image(rng, 10);
  const auto y = random_feasible(rng, 10, 0.25);
  const auto d = Displacement::translation({1.0, 2.0});
  for (auto mode : {PreserveMode::tv, PreserveMode::inner_product}) {
    const auto p = predict_pointwise_l2(ctx_for(d), x, y, mode);
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_DOUBLE_EQ(p.y(i, j).x, y(i + 1, j + 2).x);
        EXPECT_DOUBLE_EQ(p.y(i, j).y, y(i + 1, j + 2).y);
      }
  }
}

TEST(PointwiseL2, RotationPreservesPointwiseNorm) {
  SeededRng rng(13);
  const auto x = random_image(rng, 16);
  const auto y = random_feasible(rng, 16, 0.25);
  const auto d = Displacement::rotation(0.4, {7.5, 7.5});
  for (auto mode : {PreserveMode::tv, PreserveMode::inner_product}) {
    const auto p = predict_pointwise_l2(ctx_for(d), x, y, mode);
    for (std::size_t j = 0; j < 16; ++j)
      for (std::size_t i = 0; i < 16; ++i) {
        const Vec2 src = sample_bilinear(y, d.map({static_cast<double>(i), static_cast<double>(j)}));
        EXPECT_NEAR(norm(p.y(i, j)), norm(src), 1e-12);
      }
  }
}

TEST(PointwiseL2, TvAttainmentTransportedByIntegerShift) {
  const GradOp D{};
  const auto x = piecewise_constant_image(32, 14, 6);
  const auto y = attaining_dual(D, 0.25, x, 15);
  const auto p = predict_pointwise_l2(ctx_for(Displacement::translation({2.0, -3.0})), x, y, PreserveMode::tv);
  const auto dxp = D.apply(p.x);
  for (std::size_t k = 0; k < dxp.size(); ++k)
    EXPECT_NEAR(dot(dxp[k], p.y[k]), 0.25 * norm(dxp[k]), 1e-8) << k;
}

// ---------------------------------------------------------------------------
// Rotation.

TEST(Rotation, QuarterTurnExample) {
  const Vec2 out = rotation_dual_update({1, 0}, {0, 2}, {0.5, 0}, 0.25, PreserveMode::tv);
  EXPECT_NEAR(out.x, 0.0, 1e-15);
  EXPECT_NEAR(out.y, 0.5, 1e-15);
}

TEST(Rotation, InnerProductModeDividesByLengthRatio) {
  const Vec2 out = rotation_dual_update({1, 0}, {0, 2}, {0.5, 0}, 0.25, PreserveMode::inner_product);
  EXPECT_NEAR(out.x, 0.0, 1e-15);
  EXPECT_NEAR(out.y, 0.25, 1e-15);
  EXPECT_NEAR(dot(Vec2{0, 2}, out), dot(Vec2{1, 0}, Vec2{0.5, 0}), 1e-15);
}

TEST(Rotation, FlatToEdgeUsesAlphaDirection) {
  const Vec2 out = rotation_dual_update({0, 0}, {0, 3}, {0.1, 0.1}, 1.0, PreserveMode::tv);
  EXPECT_DOUBLE_EQ(out.x, 0.0);
  EXPECT_DOUBLE_EQ(out.y, 1.0);
}

TEST(Rotation, BothFlatGivesZero) {
  const Vec2 out = rotation_dual_update({0, 0}, {0, 0}, {0.1, 0.1}, 1.0, PreserveMode::tv);
  EXPECT_EQ(out.x, 0.0);
  EXPECT_EQ(out.y, 0.0);
}

TEST(Rotation, FeasibilityPreserved) {
  SeededRng rng(16);
  const auto x = random_image(rng, 16);
  const auto y = random_feasible(rng, 16, 0.25);
  const auto p = predict_rotation(ctx_for(Displacement::rotation(0.7, {8.0, 7.0})), x, y, PreserveMode::tv);
  EXPECT_LE(norm_2inf(p.y), 0.25 + 1e-12);
}

TEST(Rotation, TvAttainmentPreserved) {
  const GradOp D{};
  const auto x = piecewise_constant_image(32, 17);
  const auto y = attaining_dual(D, 0.25, x, 18);
  const auto p = predict_rotation(ctx_for(Displacement::rotation(0.2, {16.3, 15.8})), x, y, PreserveMode::tv);
  const auto [res, feas] = tv_preservation_residual(D, 0.25, p.x, p.y);
  EXPECT_LE(std::abs(res), 1e-8);
  EXPECT_LE(feas, 1e-12);
}

// ---------------------------------------------------------------------------
// Greedy.

TEST(Greedy, ComponentRatioExample) {
  const double out = greedy_component_update(2.0, 4.0, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(out, 0.5);
  EXPECT_DOUBLE_EQ(4.0 * out, 2.0 * 1.0);
}

TEST(Greedy, GuardBranchKeepsComponent) {
  EXPECT_EQ(greedy_component_update(2.0, 1e-13, 0.7, 1e-12), 0.7);
  EXPECT_EQ(greedy_component_update(2.0, -1e-12, 0.7, 1e-12), 0.7);
}

TEST(Greedy, NoMotionIsIdentity) {
  SeededRng rng(19);
  const auto x = random_image(rng, 12);
  const auto y = random_feasible(rng, 12, 0.25);
  const auto p = predict_greedy(ctx_for(Displacement::identity()), x, y, 1e-12);
  for (std::size_t k = 0; k < y.size(); ++k) {
    EXPECT_DOUBLE_EQ(p.y[k].x, y[k].x);
    EXPECT_DOUBLE_EQ(p.y[k].y, y[k].y);
  }
}

TEST(Greedy, ComponentInnerProductsPreserved) {
  SeededRng rng(20);
  const auto x = random_image(rng, 12);
  const auto y = random_feasible(rng, 12, 0.25);
  const auto ctx = ctx_for(Displacement::translation({0.4, 0.7}));
  const auto p = predict_greedy(ctx, x, y, 1e-12);
  const auto dx = ctx.grad.apply(x), dxp = ctx.grad.apply(p.x);
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (std::abs(dxp[k].x) > 1e-12) {
      EXPECT_NEAR(dxp[k].x * p.y[k].x, dx[k].x * y[k].x, 1e-14);
    }
    if (std::abs(dxp[k].y) > 1e-12) {
      EXPECT_NEAR(dxp[k].y * p.y[k].y, dx[k].y * y[k].y, 1e-14);
    }
  }
}

TEST(Greedy, RejectsNonpositiveTolerance) {
  EXPECT_THROW(predict_greedy(ctx_for(Displacement::identity()), ScalarImage(4, 4), VectorField2(4, 4), 0.0),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Strict greedy.

TEST(StrictGreedy, ProjectionOntoPredictedDirection) {
  const Vec2 out = strict_greedy_update({3, 4}, {0.1, 0.2}, {0, -2});
  const double s = (3 * 0.1 + 4 * 0.2) / 5.0;
  EXPECT_DOUBLE_EQ(out.x, 0.0);
  EXPECT_DOUBLE_EQ(out.y, -s);
}

TEST(StrictGreedy, DegenerateBranches) {
  const Vec2 a = strict_greedy_update({0, 0}, {0.1, 0.2}, {1, 1});
  EXPECT_EQ(a.x, 0.0);
  EXPECT_EQ(a.y, 0.0);
  const Vec2 b = strict_greedy_update({1, 0}, {0.2, 0.1}, {0, 0});
  EXPECT_DOUBLE_EQ(b.x, 0.2);
  EXPECT_EQ(b.y, 0.0);
}

TEST(StrictGreedy, ZeroDualStaysZero) {
  SeededRng rng(21);
  const auto x = random_image(rng, 12);
  const auto p = predict_strict_greedy(ctx_for(Displacement::translation({0.3, 0.6})), x, VectorField2(12, 12));
  EXPECT_EQ(norm_2inf(p.y), 0.0);
}

TEST(StrictGreedy, PointwiseBoundBySourceNorm) {
  SeededRng rng(22);
  const auto x = random_image(rng, 16);
  const auto y = random_feasible(rng, 16, 0.25);
  const auto d = Displacement::translation({0.3, -0.8});
  const auto p = predict_strict_greedy(ctx_for(d), x, y);
  for (std::size_t j = 0; j < 16; ++j)
    for (std::size_t i = 0; i < 16; ++i) {
      const Vec2 src = sample_bilinear(y, d.map({static_cast<double>(i), static_cast<double>(j)}));
      EXPECT_LE(norm(p.y(i, j)), norm(src) + 1e-15);
    }
  EXPECT_LE(norm_2inf(p.y), 0.25 + 1e-15);
}

TEST(StrictGreedy, TvAttainmentPreserved) {
  const GradOp D{};
  const auto x = piecewise_constant_image(32, 23);
  const auto y = attaining_dual(D, 0.25, x, 24);
  const auto p = predict_strict_greedy(ctx_for(Displacement::translation({2.0, -1.0})), x, y);
  const auto [res, feas] = tv_preservation_residual(D, 0.25, p.x, p.y);
  EXPECT_LE(std::abs(res), 1e-10);
  EXPECT_LE(feas, 1e-12);
}

// ---------------------------------------------------------------------------
// Global preservation.

namespace {

/// Dense D_dir^* D_dir on an n x n grid assembled column by column.
Eigen::MatrixXd dense_normal_matrix(const GradOp& D, std::size_t n) {
  const std::size_t m = n * n;
  Eigen::MatrixXd M(m, m);
  for (std::size_t c = 0; c < m; ++c) {
    ScalarImage e(n, n, 0.0);
    e[c] = 1.0;
    const auto col = D.adjoint(D.apply(e));
    for (std::size_t r = 0; r < m; ++r) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
  }
  return M;
}

}  // namespace

TEST(GlobalTV, MatchesDenseSolveOnEightByEight) {
  const std::size_t n = 8;
  const GradOp Dd{Boundary::dirichlet};
  SeededRng rng(25);
  const auto x = random_image(rng, n);
  ScalarImage w(n, n);
  for (auto& v : w) v = rng.normal();
  const VectorField2 y = Dd.apply(w);

  const auto p = predict_global_tv(ctx_for(Displacement::identity(), 0.25, 1.0, Dd), x, y, PreserveMode::inner_product);

  const Eigen::MatrixXd M = dense_normal_matrix(Dd, n);
  const auto rhs_img = Dd.adjoint(y);
  Eigen::VectorXd rhs(n * n);
  for (std::size_t k = 0; k < n * n; ++k) rhs(static_cast<Eigen::Index>(k)) = rhs_img[k];
  const Eigen::VectorXd z = M.ldlt().solve(rhs);
  ScalarImage zimg(n, n);
  for (std::size_t k = 0; k < n * n; ++k) zimg[k] = z(static_cast<Eigen::Index>(k));
  const auto y_dense = Dd.apply(zimg);

  EXPECT_LE(max_abs_diff(p.y, y_dense), 1e-9);
  EXPECT_LE(max_abs_diff(p.y, y), 1e-9);
  EXPECT_NEAR(inner(Dd.apply(p.x), p.y), inner(Dd.apply(x), y), 1e-9 * std::abs(inner(Dd.apply(x), y)));
}

TEST(GlobalTV, ZeroDualGivesZero) {
  SeededRng rng(26);
  const auto x = random_image(rng, 8);
  const auto p = predict_global_tv(ctx_for(Displacement::translation({1, 0})), x, VectorField2(8, 8), PreserveMode::tv);
  EXPECT_EQ(norm_2inf(p.y), 0.0);
}

TEST(GlobalTV, TvAttainmentPreservedUnderIntegerShift) {
  const GradOp D{};
  const GradOp Dd{Boundary::dirichlet};
  const auto x = piecewise_constant_image(32, 27);
  const auto y = attaining_dual(D, 0.25, x, 28);
  const auto p = predict_global_tv(ctx_for(Displacement::translation({2.0, -1.0})), x, y, PreserveMode::tv);
  const double lhs = inner(Dd.apply(p.x), p.y);
  const double rhs = 0.25 * norm_21(Dd.apply(p.x));
  EXPECT_NEAR(lhs, rhs, 1e-6 * rhs);
}

TEST(GlobalTV, RejectsUnsupportedMotion) {
  SeededRng rng(29);
  const auto x = random_image(rng, 8);
  const VectorField2 y(8, 8);
  EXPECT_THROW(predict_global_tv(ctx_for(Displacement::translation({0.5, 0})), x, y, PreserveMode::tv),
               std::invalid_argument);
  EXPECT_THROW(predict_global_tv(ctx_for(Displacement::rotation(0.1, {})), x, y, PreserveMode::tv),
               std::invalid_argument);
  EXPECT_THROW(predict_global_tv(ctx_for(Displacement::identity()), ScalarImage(8, 8, 1.0), y, PreserveMode::tv),
               std::domain_error);
}

TEST(GlobalTV, CgReportsIterationCap) {
  SeededRng rng(30);
  ScalarImage rhs(16, 16);
  for (auto& v : rhs) v = rng.normal();
  EXPECT_THROW(solve_dirichlet_normal_equations(GradOp{Boundary::dirichlet}, rhs, 1e-14, 2), std::runtime_error);
  CgReport rep;
  solve_dirichlet_normal_equations(GradOp{Boundary::dirichlet}, rhs, 1e-10, 10000, &rep);
  EXPECT_LE(rep.relative_residual, 1e-10);
  EXPECT_GT(rep.iterations, 0);
}

// ---------------------------------------------------------------------------
// Dual scaling.

TEST(DualScaling, ActivationEndpoints) {
  EXPECT_LT(dual_scaling_activation(Activation::sigmoid, 0.0), 1e-20);
  EXPECT_NEAR(dual_scaling_activation(Activation::sigmoid, 1.0), 1.0, 1e-15);
  EXPECT_EQ(dual_scaling_activation(Activation::power, 0.0), 0.0);
  EXPECT_EQ(dual_scaling_activation(Activation::power, 1.0), 1.0);
}

TEST(DualScaling, NoChangeKeepsDual) {
  SeededRng rng(31);
  const auto x = random_image(rng, 10);
  const auto y = random_feasible(rng, 10, 0.25);
  for (auto a : {Activation::sigmoid, Activation::power}) {
    const auto p = predict_dual_scaling(ctx_for(Displacement::identity()), x, y, 1.0, a);
    EXPECT_LE(max_abs_diff(p.y, y), 1e-15);
  }
}

TEST(DualScaling, MaximalChangeScalesByOneMinusChi) {
  ScalarImage x(8, 8, 0.0);
  x(3, 3) = 1.0;
  const auto ctx = ctx_for(Displacement::translation({1.0, 0.0}));
  VectorField2 y(8, 8, Vec2{0.1, -0.2});
  for (double chi : {0.0, 0.75, 1.0}) {
    const auto p = predict_dual_scaling(ctx, x, y, chi, Activation::power);
    // pixels (2,3) and (3,3) change by the maximum
    for (auto [i, j] : {std::pair{2, 3}, std::pair{3, 3}}) {
      EXPECT_NEAR(p.y(i, j).x, (1 - chi) * 0.1, 1e-15);
      EXPECT_NEAR(p.y(i, j).y, (1 - chi) * -0.2, 1e-15);
    }
    EXPECT_EQ(p.y(6, 6).x, 0.1);
  }
}

TEST(DualScaling, ChiZeroIsIdentityOnDual) {
  SeededRng rng(32);
  const auto x = random_image(rng, 10);
  const auto y = random_feasible(rng, 10, 0.25);
  const auto p = predict_dual_scaling(ctx_for(Displacement::translation({0.3, 0.2})), x, y, 0.0, Activation::sigmoid);
  EXPECT_EQ(p.y, y);
}

TEST(DualScaling, RejectsChiOutsideUnitInterval) {
  EXPECT_THROW(predict_dual_scaling(ctx_for({}), ScalarImage(4, 4), VectorField2(4, 4), 1.5, Activation::power),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Runtime dispatch.

TEST(Predictor, NamesAndDeterminism) {
  SeededRng rng(33);
  const auto x = random_image(rng, 16);
  const auto y = random_feasible(rng, 16, 0.25);
  const auto ctx = ctx_for(Displacement::translation({1.0, -2.0}));
  const std::vector<PredictorKind> kinds{predictor::NoPrediction{}, predictor::PrimalOnly{}, predictor::ZeroDual{},
                                         predictor::ProximalOld{},  predictor::PointwiseL2{}, predictor::Rotation{},
                                         predictor::Greedy{},       predictor::StrictGreedy{}, predictor::GlobalTV{},
                                         predictor::DualScaling{}};
  std::vector<std::string> names;
  for (const auto& k : kinds) {
    const Predictor p{k};
    const auto a = p.predict(ctx, x, y), b = p.predict(ctx, x, y);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.y, b.y);
    names.push_back(predictor_name(k));
  }
  EXPECT_EQ(names.front(), "no_prediction");
  EXPECT_EQ(names.back(), "dual_scaling");
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::unique(names.begin(), names.end()), names.end());
}
