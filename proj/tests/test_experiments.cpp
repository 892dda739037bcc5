#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "popd/config.hpp"
#include "popd/diagnostics.hpp"
#include "popd/metrics.hpp"
#include "popd/phantoms.hpp"
#include "popd/runner.hpp"
#include "popd/scenarios.hpp"

using namespace popd;

// ---------------------------------------------------------------------------
// Phantoms.

TEST(SheppLogan, ValuesInUnitInterval) {
  for (double v : shepp_logan(64)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SheppLogan, CentreBrighterThanBorder) {
  const auto x = shepp_logan(64);
  EXPECT_GT(x(32, 32), x(0, 32));
  EXPECT_GT(x(32, 32), x(0, 0));
  // the skull ring is the brightest structure on the vertical axis
  double top = 0.0;
  for (std::size_t j = 0; j < 64; ++j) top = std::max(top, x(32, j));
  EXPECT_DOUBLE_EQ(top, 1.0);
}

TEST(SheppLogan, MirrorSymmetricAwayFromTheOffAxisEllipses) {
  // The two inner dark ellipses have different sizes and the three small
  // bottom ellipses are off-axis, so symmetry holds only where none of those
  // covers a pixel or its mirror image.
  const std::size_t n = 64;
  const auto x = shepp_logan(n);
  const std::size_t asymmetric[] = {2, 3, 7, 8, 9};
  std::size_t checked = 0, bad = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = normalised_coords(static_cast<double>(i), static_cast<double>(j), n);
      bool skip = false;
      for (std::size_t e : asymmetric)
        skip = skip || kSheppLoganEllipses[e].contains(p.x, p.y) || kSheppLoganEllipses[e].contains(-p.x, p.y);
      if (skip) continue;
      ++checked;
      bad += std::abs(x(i, j) - x(n - 1 - i, j)) > 1e-12;
    }
  EXPECT_GT(checked, n * n * 3 / 4);
  EXPECT_LE(bad, n);  // rounding right on an ellipse boundary
}

TEST(SheppLogan, RejectsTinySize) { EXPECT_THROW(shepp_logan(8), std::invalid_argument); }

TEST(SyntheticBrain, DeterministicAndBounded) {
  const auto a = synthetic_brain(64, 5), b = synthetic_brain(64, 5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, synthetic_brain(64, 6));
  for (double v : a) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SyntheticBrain, HasSeveralPlateaus) {
  const auto x = synthetic_brain(128, 1);
  std::map<double, std::size_t> hist;
  for (double v : x) ++hist[v];
  std::size_t plateaus = 0;
  for (const auto& [v, c] : hist)
    if (c >= 50) ++plateaus;
  EXPECT_GE(plateaus, 2u);  // background, skull and ventricles are exactly flat
}

// ---------------------------------------------------------------------------
// Stabilisation scenario.

namespace {
StabilisationScenario small_stabilisation(std::size_t n_frames) {
  StabilisationScenario s;
  s.source_width = s.source_height = 96;
  s.crop_width = s.crop_height = 24;
  s.n_frames = n_frames;
  s.stop_intervals = {};
  return s;
}
}  // namespace

TEST(StabilisationScenario, NoNoiseNoMotionGivesConstantFrames) {
  auto s = small_stabilisation(20);
  s.brownian_std = s.data_noise_std = s.displacement_noise_std = 0.0;
  const auto frames = make_stabilisation_frames(s);
  for (const auto& f : frames) {
    EXPECT_EQ(std::get<DataTermL2>(f.problem.data).z, std::get<DataTermL2>(frames[0].problem.data).z);
    EXPECT_EQ(f.truth, frames[0].truth);
    EXPECT_TRUE(f.problem.displacement.truth.is_identity() ||
                f.problem.displacement.truth.shift == Vec2{});
    EXPECT_EQ(f.problem.displacement.measured.shift, Vec2{});
  }
}

TEST(StabilisationScenario, FullStopFreezesTruth) {
  auto s = small_stabilisation(50);
  s.stop_intervals = {{0, 50}};
  const auto frames = make_stabilisation_frames(s);
  bool measured_moves = false;
  for (const auto& f : frames) {
    EXPECT_EQ(f.truth, frames[0].truth);
    EXPECT_EQ(f.problem.displacement.truth.shift, Vec2{});
    measured_moves = measured_moves || norm(f.problem.displacement.measured.shift) > 0.0;
  }
  EXPECT_TRUE(measured_moves);
}

TEST(StabilisationScenario, StopIntervalsAreHalfOpen) {
  auto s = small_stabilisation(30);
  s.stop_intervals = {{10, 20}};
  const auto frames = make_stabilisation_frames(s);
  for (std::size_t k = 10; k < 20; ++k) EXPECT_EQ(frames[k].problem.displacement.truth.shift, Vec2{}) << k;
  EXPECT_NE(frames[20].problem.displacement.truth.shift, Vec2{});
  EXPECT_NE(frames[9].problem.displacement.truth.shift, Vec2{});
}

TEST(StabilisationScenario, BrownianStepStd) {
  StabilisationScenario s;
  s.source_width = s.source_height = 2048;
  s.crop_width = s.crop_height = 8;
  s.n_frames = 10001;
  s.stop_intervals = {};
  s.data_noise_std = 0.0;
  StabilisationFrameSource src(s);
  double ss = 0.0;
  std::size_t n = 0;
  src.next();
  for (std::size_t k = 1; k < s.n_frames; ++k) {
    const Vec2 d = src.next().problem.displacement.truth.shift;
    ss += d.x * d.x + d.y * d.y;
    n += 2;
  }
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), 2.0, 0.05);
}

TEST(StabilisationScenario, MeasurementNoiseStd) {
  auto s = small_stabilisation(4001);
  s.displacement_noise_std = 0.05;
  const auto frames = make_stabilisation_frames(s);
  double ss = 0.0;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const Vec2 e = frames[k].problem.displacement.measured.shift - frames[k].problem.displacement.truth.shift;
    ss += e.x * e.x + e.y * e.y;
  }
  EXPECT_NEAR(std::sqrt(ss / 8000.0), 0.05, 0.002);
}

TEST(StabilisationScenario, TruthFollowsTheMotion) {
  auto s = small_stabilisation(10);
  s.brownian_std = 1.0;
  StabilisationFrameSource src(s);
  const auto f0 = src.next();
  const auto f1 = src.next();
  const auto predicted = WarpOp{f1.problem.displacement.truth}.apply(f0.truth);
  // interior pixels agree up to bilinear interpolation error
  double err = 0.0;
  for (std::size_t j = 4; j < 20; ++j)
    for (std::size_t i = 4; i < 20; ++i) err = std::max(err, std::abs(predicted(i, j) - f1.truth(i, j)));
  EXPECT_LT(err, 0.15);
}

TEST(StabilisationScenario, DeterministicInSeed) {
  const auto a = make_stabilisation_frames(small_stabilisation(5));
  const auto b = make_stabilisation_frames(small_stabilisation(5));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(std::get<DataTermL2>(a[k].problem.data).z, std::get<DataTermL2>(b[k].problem.data).z);
}

TEST(StabilisationScenario, ValidationErrors) {
  auto s = small_stabilisation(10);
  s.crop_width = 200;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_stabilisation(10);
  s.stop_intervals = {{5, 11}};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_stabilisation(10);
  s.brownian_std = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(StabilisationScenario, PublishedScaleDefaults) {
  const auto s = StabilisationScenario::defaults(Scale::paper);
  EXPECT_EQ(s.source_width, 768u);
  EXPECT_EQ(s.source_height, 512u);
  EXPECT_EQ(s.crop_width, 300u);
  EXPECT_EQ(s.crop_height, 200u);
  EXPECT_EQ(s.n_frames, 10000u);
  EXPECT_EQ(s.brownian_std, 2.0);
  EXPECT_EQ(s.data_noise_std, 0.5);
  EXPECT_EQ(s.displacement_noise_std, 0.05);
  EXPECT_EQ(s.alpha, 0.25);
  EXPECT_EQ(s.stop_intervals, (std::vector<StopInterval>{{2500, 5000}, {8700, 10000}}));
}

// ---------------------------------------------------------------------------
// PET scenario.

namespace {
PetScenario small_pet(std::size_t n_frames) {
  PetScenario s;
  s.size = 32;
  s.n_bins = 32;
  s.n_angles = 16;
  s.n_frames = n_frames;
  s.stop_intervals = {};
  return s;
}
}  // namespace

TEST(PetScenario, StaticWithoutMotion) {
  auto s = small_pet(6);
  s.rotation_angle_std = 0.0;
  s.center_offset_std = 0.0;
  const auto frames = make_pet_frames(s);
  for (const auto& f : frames) {
    for (std::size_t k = 0; k < f.truth.size(); ++k) EXPECT_NEAR(f.truth[k], frames[0].truth[k], 1e-12);
  }
}

TEST(PetScenario, FullMaskWithUnitFraction) {
  auto s = small_pet(3);
  s.subsample_fraction = 1.0;
  for (const auto& f : make_pet_frames(s)) {
    const auto& A = std::get<DataTermPoisson>(f.problem.data).A;
    for (std::size_t r = 0; r < A.geometry().n_rows(); ++r) EXPECT_TRUE(A.active(r));
  }
}

TEST(PetScenario, ActiveFractionNearHalf) {
  auto s = small_pet(20);
  std::size_t active = 0, total = 0;
  for (const auto& f : make_pet_frames(s)) {
    const auto& A = std::get<DataTermPoisson>(f.problem.data).A;
    for (std::size_t r = 0; r < A.geometry().n_rows(); ++r) active += A.active(r), ++total;
  }
  ASSERT_GE(total, 10000u);
  EXPECT_NEAR(static_cast<double>(active) / static_cast<double>(total), 0.5, 0.01);
}

TEST(PetScenario, InactiveEntriesCarryNoCounts) {
  for (const auto& f : make_pet_frames(small_pet(3))) {
    const auto& E = std::get<DataTermPoisson>(f.problem.data);
    for (std::size_t r = 0; r < E.z.size(); ++r) {
      if (!E.A.active(r)) {
        EXPECT_EQ(E.z[r], 0);
      }
    }
  }
}

TEST(PetScenario, TruthIsTheComposedRotation) {
  auto s = small_pet(5);
  s.size = 64;
  s.n_bins = 16;
  s.n_angles = 4;
  s.rotation_angle_std = 0.05;
  const auto frames = make_pet_frames(s);
  // truth_k = truth_{k-1} o v_k up to rasterisation; compare away from edges
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const auto pred = WarpOp{frames[k].problem.displacement.truth}.apply(frames[k - 1].truth);
    double agree = 0.0;
    for (std::size_t q = 0; q < pred.size(); ++q) agree += std::abs(pred[q] - frames[k].truth[q]) < 0.05;
    EXPECT_GT(agree / static_cast<double>(pred.size()), 0.9) << k;
  }
}

TEST(PetScenario, StopIntervalsFreezeRotation) {
  auto s = small_pet(12);
  s.stop_intervals = {{4, 8}};
  const auto frames = make_pet_frames(s);
  for (std::size_t k = 4; k < 8; ++k) EXPECT_EQ(frames[k].problem.displacement.truth.angle, 0.0);
  EXPECT_NE(frames[8].problem.displacement.truth.angle, 0.0);
  EXPECT_NE(frames[5].problem.displacement.measured.angle, 0.0);
}

TEST(PetScenario, DeterministicInSeed) {
  const auto a = make_pet_frames(small_pet(3)), b = make_pet_frames(small_pet(3));
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_EQ(std::get<DataTermPoisson>(a[k].problem.data).z, std::get<DataTermPoisson>(b[k].problem.data).z);
}

TEST(PetScenario, BrainPhantomSelectable) {
  auto s = small_pet(2);
  s.phantom = PhantomKind::synthetic_brain;
  const auto f = make_pet_frames(s);
  EXPECT_EQ(f[0].truth, synthetic_brain(32, s.seed));
}

TEST(PetScenario, PublishedScaleDefaults) {
  const auto s = PetScenario::defaults(Scale::paper);
  EXPECT_EQ(s.size, 256u);
  EXPECT_EQ(s.n_bins, 128u);
  EXPECT_EQ(s.n_angles, 64u);
  EXPECT_EQ(s.n_frames, 5000u);
  EXPECT_EQ(s.subsample_fraction, 0.5);
  EXPECT_EQ(s.rotation_angle_std, 0.15);
  EXPECT_EQ(s.angle_noise_std, 0.035);
  EXPECT_EQ(s.background, 0.5);
  EXPECT_EQ(s.L, 300.0);
  EXPECT_EQ(s.stop_intervals, (std::vector<StopInterval>{{1000, 2000}, {3500, 4000}}));
}

// ---------------------------------------------------------------------------
// Quality metrics.

TEST(Psnr, IdenticalImagesHitTheCap) {
  const auto x = shepp_logan(32);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_EQ(capped_psnr(psnr(x, x)), 99.0);
}

TEST(Psnr, ConstantOffsetGivesTwentyDecibels) {
  const auto x = shepp_logan(32);
  EXPECT_NEAR(psnr(x + ScalarImage(32, 32, 0.1), x), 20.0, 1e-9);
}

TEST(Psnr, NoiseLowersPsnr) {
  const auto x = synthetic_scene(32, 32, 1);
  SeededRng rng(2);
  const auto n1 = gaussian_noise(rng, 32, 32, 0.05);
  EXPECT_GT(psnr(x + n1, x), psnr(x + 2.0 * n1, x));
}

TEST(Psnr, DimensionMismatchThrows) {
  EXPECT_THROW(psnr(ScalarImage(8, 8), ScalarImage(8, 9)), std::invalid_argument);
  EXPECT_THROW(ssim(ScalarImage(8, 8), ScalarImage(9, 8)), std::invalid_argument);
}

TEST(Ssim, IdenticalImagesScoreOne) {
  const auto x = synthetic_scene(32, 32, 3);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
}

TEST(Ssim, InvertedImageScoresBelowOne) {
  const auto x = shepp_logan(32);
  EXPECT_LT(ssim(ScalarImage(32, 32, 1.0) - x, x), 1.0);
}

TEST(Ssim, BoundedAndSymmetric) {
  SeededRng rng(4);
  for (int t = 0; t < 10; ++t) {
    ScalarImage a(16, 16), b(16, 16);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.uniform();
    const double s = ssim(a, b);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_NEAR(s, ssim(b, a), 1e-12);
  }
}

TEST(Ssim, DenoisingRaisesSsim) {
  const auto clean = synthetic_scene(64, 64, 5);
  SeededRng rng(5);
  const auto noisy = clean + gaussian_noise(rng, 64, 64, 0.3);
  const FrameProblem prob{DataTermL2{noisy}, TVRegulariser{0.25}, GradOp{}, {}, 0};
  const auto den = solve_static(prob, 500, 1e-8);
  EXPECT_LT(ssim(noisy, clean), ssim(den.x_opt, clean));
  EXPECT_LT(psnr(noisy, clean), psnr(den.x_opt, clean));
}

TEST(MeanCi95, KnownSample) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto m = mean_ci95(v);
  const double half = 1.96 * std::sqrt(5.0 / 3.0) / 2.0;
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.lo, 2.5 - half, 1e-12);
  EXPECT_NEAR(m.hi, 2.5 + half, 1e-12);
  EXPECT_THROW(mean_ci95(std::vector<double>{}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Runner.

TEST(Summarise, BurninMeansAndIntervals) {
  std::vector<FrameRecord> recs;
  for (std::size_t k = 0; k < 10; ++k) recs.push_back({k, static_cast<double>(k), 0.1 * static_cast<double>(k)});
  const auto row = summarise("x", recs, 5);
  EXPECT_DOUBLE_EQ(row.avg_psnr_full, 4.5);
  EXPECT_DOUBLE_EQ(row.avg_psnr_burnin, 7.0);
  EXPECT_NEAR(row.avg_ssim_burnin, 0.7, 1e-15);
  EXPECT_LT(row.psnr_ci_lo, 7.0);
  EXPECT_GT(row.psnr_ci_hi, 7.0);
  EXPECT_THROW(summarise("x", recs, 10), std::invalid_argument);
}

TEST(Summarise, IntervalShrinksWithMoreFrames) {
  SeededRng rng(6);
  auto width = [&](std::size_t n) {
    std::vector<FrameRecord> recs;
    for (std::size_t k = 0; k < n; ++k) recs.push_back({k, 20.0 + rng.normal(), 0.5 + 0.1 * rng.normal()});
    const auto r = summarise("x", recs, 0);
    return r.psnr_ci_hi - r.psnr_ci_lo;
  };
  EXPECT_LT(width(4000), width(40));
}

TEST(RunExperiment, RecordsEveryFrameWithCappedPsnr) {
  auto s = small_stabilisation(12);
  s.data_noise_std = 0.0;
  s.brownian_std = 0.0;
  const auto frames = make_stabilisation_frames(s);
  const auto p = make_unaccelerated_params(0.01, 0.0, 1.0, std::sqrt(8.0), 0.25);
  RunOptions o;
  o.diagnostics = DiagnosticsMode::gaps;
  o.oracle_iters = 200;
  const auto r = run_experiment(frames, predictor::DualScaling{}, p, o);
  ASSERT_EQ(r.records.size(), 12u);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_EQ(r.records[k].frame, k);
    EXPECT_LE(r.records[k].psnr, 99.0);
    EXPECT_FALSE(std::isnan(r.records[k].gap));
    EXPECT_EQ(r.records[k].wall_time, 0.0);
  }
  EXPECT_TRUE(r.diagnostics.empty());
}

TEST(RunExperiment, FullDiagnosticsRecordsPerFrame) {
  const auto frames = make_stabilisation_frames(small_stabilisation(6));
  const auto p = make_unaccelerated_params(0.01, 0.0, 1.0, std::sqrt(8.0), 0.25);
  RunOptions o;
  o.diagnostics = DiagnosticsMode::full;
  o.oracle_iters = 100;
  const auto r = run_experiment(frames, predictor::Rotation{}, p, o);
  ASSERT_EQ(r.diagnostics.size(), 6u);
  for (const auto& d : r.diagnostics) {
    EXPECT_GE(d.attain_residual, -1e-10);
    EXPECT_LE(d.feasibility_excess, 1e-12);
    EXPECT_GE(d.w_diff, 0.0);
    EXPECT_GT(d.M_x, 0.0);
  }
}
