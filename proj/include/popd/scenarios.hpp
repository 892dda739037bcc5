#pragma once

// Synthetic frame sequences for the image-stabilisation and dynamic PET
// studies. Every random draw comes from one SeededRng stream in a fixed
// order, so a scenario and its seed determine the sequence bit for bit.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "popd/core.hpp"
#include "popd/operators.hpp"
#include "popd/phantoms.hpp"
#include "popd/problem.hpp"
#include "popd/proxops.hpp"

namespace popd {

/// Half-open range [begin, end) of frame indices whose incoming motion is frozen.
struct StopInterval {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool contains(std::size_t k) const { return k >= begin && k < end; }
  friend bool operator==(const StopInterval&, const StopInterval&) = default;
};

inline bool in_stop_interval(const std::vector<StopInterval>& stops, std::size_t k) {
  for (const auto& s : stops)
    if (s.contains(k)) return true;
  return false;
}

inline void validate_stops(const std::vector<StopInterval>& stops, std::size_t n_frames, const char* who) {
  for (const auto& s : stops)
    if (s.begin > s.end || s.end > n_frames)
      throw std::invalid_argument(std::string(who) + ": stop interval [" + std::to_string(s.begin) + ", " +
                                  std::to_string(s.end) + ") outside [0, " + std::to_string(n_frames) + ")");
}

/// One data frame together with its ground truth.
struct Frame {
  FrameProblem problem;
  ScalarImage truth;
};

enum class Scale { desk, paper };

// ---------------------------------------------------------------------------

struct StabilisationScenario {
  /// Greyscale source in [0, 1]; when empty a synthetic scene of
  /// source_width x source_height is used.
  ScalarImage source;
  std::size_t source_width = 256;
  std::size_t source_height = 256;
  std::size_t crop_width = 64;
  std::size_t crop_height = 64;
  std::size_t n_frames = 1000;
  double brownian_std = 2.0;
  double data_noise_std = 0.5;
  double displacement_noise_std = 0.05;
  std::vector<StopInterval> stop_intervals{{250, 500}, {870, 1000}};
  double alpha = 0.25;
  std::uint64_t seed = 1;

  static StabilisationScenario defaults(Scale s) {
    StabilisationScenario sc;
    if (s == Scale::paper) {
      sc.source_width = 768;
      sc.source_height = 512;
      sc.crop_width = 300;
      sc.crop_height = 200;
      sc.n_frames = 10000;
      sc.stop_intervals = {{2500, 5000}, {8700, 10000}};
    }
    return sc;
  }

  void validate() const {
    if (n_frames == 0) throw std::invalid_argument("StabilisationScenario: n_frames must be >= 1");
    const std::size_t sw = source.empty() ? source_width : source.width();
    const std::size_t sh = source.empty() ? source_height : source.height();
    if (crop_width < 8 || crop_height < 8) throw std::invalid_argument("StabilisationScenario: crop must be >= 8x8");
    if (crop_width > sw || crop_height > sh)
      throw std::invalid_argument("StabilisationScenario: crop larger than the source image");
    if (brownian_std < 0 || data_noise_std < 0 || displacement_noise_std < 0)
      throw std::invalid_argument("StabilisationScenario: standard deviations must be >= 0");
    if (!(alpha > 0)) throw std::invalid_argument("StabilisationScenario: alpha must be > 0");
    validate_stops(stop_intervals, n_frames, "StabilisationScenario");
  }
};

/// Reflect a coordinate into [0, hi].
inline double reflect_into(double v, double hi) {
  if (hi <= 0.0) return 0.0;
  const double period = 2.0 * hi;
  double m = std::fmod(v, period);
  if (m < 0) m += period;
  return m <= hi ? m : period - m;
}

/// Sequential generator of stabilisation frames.
///
/// The crop position d^k follows a Brownian walk reflected into the source;
/// the motion into frame k is the translation v(xi) = xi + (d^k - d^{k-1}),
/// frozen inside stop intervals. The measured translation adds
/// N(0, displacement_noise_std^2) per component on every frame k >= 1; frame 0
/// carries the identity.
class StabilisationFrameSource {
 public:
  explicit StabilisationFrameSource(StabilisationScenario s) : sc_(std::move(s)), rng_(sc_.seed) {
    sc_.validate();
    if (sc_.source.empty()) sc_.source = synthetic_scene(sc_.source_width, sc_.source_height);
    max_.x = static_cast<double>(sc_.source.width() - sc_.crop_width);
    max_.y = static_cast<double>(sc_.source.height() - sc_.crop_height);
    pos_ = 0.5 * max_;
  }

  std::size_t size() const { return sc_.n_frames; }
  std::size_t next_index() const { return k_; }
  const StabilisationScenario& scenario() const { return sc_; }
  Vec2 crop_position() const { return pos_; }

  Frame next() {
    if (k_ >= sc_.n_frames) throw std::out_of_range("StabilisationFrameSource: sequence exhausted");
    DisplacementPair disp;
    if (k_ > 0) {
      Vec2 step{sc_.brownian_std * rng_.normal(), sc_.brownian_std * rng_.normal()};
      if (in_stop_interval(sc_.stop_intervals, k_)) step = {};
      const Vec2 prev = pos_;
      pos_ = {reflect_into(prev.x + step.x, max_.x), reflect_into(prev.y + step.y, max_.y)};
      const Vec2 delta = pos_ - prev;
      const Vec2 noise{sc_.displacement_noise_std * rng_.normal(), sc_.displacement_noise_std * rng_.normal()};
      disp.truth = Displacement::translation(delta);
      disp.measured = Displacement::translation(delta + noise);
    }
    ScalarImage truth(sc_.crop_width, sc_.crop_height);
    for (std::size_t j = 0; j < sc_.crop_height; ++j)
      for (std::size_t i = 0; i < sc_.crop_width; ++i)
        truth(i, j) = sample_bilinear(sc_.source, pos_ + Vec2{static_cast<double>(i), static_cast<double>(j)});
    ScalarImage z = truth + gaussian_noise(rng_, sc_.crop_width, sc_.crop_height, sc_.data_noise_std);
    Frame f{FrameProblem{DataTermL2{std::move(z)}, TVRegulariser{sc_.alpha}, GradOp{}, disp, k_}, std::move(truth)};
    ++k_;
    return f;
  }

 private:
  StabilisationScenario sc_;
  SeededRng rng_;
  Vec2 max_{};
  Vec2 pos_{};
  std::size_t k_ = 0;
};

inline std::vector<Frame> make_stabilisation_frames(const StabilisationScenario& s) {
  StabilisationFrameSource src(s);
  std::vector<Frame> out;
  out.reserve(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) out.push_back(src.next());
  return out;
}

// ---------------------------------------------------------------------------

enum class PhantomKind { shepp_logan, synthetic_brain };

struct PetScenario {
  PhantomKind phantom = PhantomKind::shepp_logan;
  std::size_t size = 64;
  std::size_t n_bins = 64;
  std::size_t n_angles = 32;
  double subsample_fraction = 0.5;
  double rotation_angle_std = 0.15;
  double center_offset_std = 1.0;
  double angle_noise_std = 0.035;
  double center_noise_std = 0.25;
  double background = 0.5;
  std::vector<StopInterval> stop_intervals{{125, 250}, {437, 500}};
  std::size_t n_frames = 500;
  double alpha = 0.25;
  double L = 300.0;
  std::uint64_t seed = 1;

  static PetScenario defaults(Scale s) {
    PetScenario sc;
    if (s == Scale::paper) {
      sc.size = 256;
      sc.n_bins = 128;
      sc.n_angles = 64;
      sc.n_frames = 5000;
      sc.stop_intervals = {{1000, 2000}, {3500, 4000}};
    }
    return sc;
  }

  void validate() const {
    if (n_frames == 0) throw std::invalid_argument("PetScenario: n_frames must be >= 1");
    if (size < 16) throw std::invalid_argument("PetScenario: size must be >= 16");
    if (n_bins == 0 || n_angles == 0) throw std::invalid_argument("PetScenario: sinogram dimensions must be >= 1");
    if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
      throw std::invalid_argument("PetScenario: subsample_fraction must lie in (0, 1]");
    if (rotation_angle_std < 0 || center_offset_std < 0 || angle_noise_std < 0 || center_noise_std < 0)
      throw std::invalid_argument("PetScenario: standard deviations must be >= 0");
    if (background < 0) throw std::invalid_argument("PetScenario: background must be >= 0");
    if (!(alpha > 0) || !(L >= 0)) throw std::invalid_argument("PetScenario: alpha must be > 0 and L >= 0");
    validate_stops(stop_intervals, n_frames, "PetScenario");
  }
};

/// Affine map p -> A p + t in pixel coordinates.
struct AffineMap {
  Mat2 A = Mat2::identity();
  Vec2 t{};

  Vec2 operator()(const Vec2& p) const { return A * p + t; }
};

/// Sequential generator of PET frames.
///
/// The truth of frame k is the analytic phantom composed with M_k, where
/// M_k = M_{k-1} o v_k and v_k(xi) = c_k + R(theta_k)(xi - c_k), so that
/// truth_k = truth_{k-1} o v_k exactly. theta_k ~ N(0, rotation_angle_std^2)
/// (zero inside stop intervals), c_k is the image centre plus
/// N(0, center_offset_std^2) per component. The measured motion adds angle and
/// centre noise. Each frame draws a fresh Bernoulli(subsample_fraction) mask
/// over sinogram entries and Poisson counts with mean A truth + background.
class PetFrameSource {
 public:
  explicit PetFrameSource(PetScenario s) : sc_(std::move(s)), rng_(sc_.seed) {
    sc_.validate();
    geometry_ = std::make_shared<const RadonGeometry>(sc_.size, sc_.size, sc_.n_angles, sc_.n_bins);
    if (sc_.phantom == PhantomKind::synthetic_brain) brain_ = std::make_unique<SyntheticBrain>(sc_.seed);
  }

  std::size_t size() const { return sc_.n_frames; }
  const PetScenario& scenario() const { return sc_; }
  const std::shared_ptr<const RadonGeometry>& geometry() const { return geometry_; }

  Frame next() {
    if (k_ >= sc_.n_frames) throw std::out_of_range("PetFrameSource: sequence exhausted");
    const double mid = 0.5 * static_cast<double>(sc_.size - 1);
    DisplacementPair disp;
    if (k_ > 0) {
      double theta = sc_.rotation_angle_std * rng_.normal();
      const Vec2 centre{mid + sc_.center_offset_std * rng_.normal(), mid + sc_.center_offset_std * rng_.normal()};
      if (in_stop_interval(sc_.stop_intervals, k_)) theta = 0.0;
      const double theta_m = theta + sc_.angle_noise_std * rng_.normal();
      const Vec2 centre_m{centre.x + sc_.center_noise_std * rng_.normal(),
                          centre.y + sc_.center_noise_std * rng_.normal()};
      disp.truth = Displacement::rotation(theta, centre);
      disp.measured = Displacement::rotation(theta_m, centre_m);
      const Mat2 R = Mat2::rotation(theta);
      map_.t = map_.A * (centre - R * centre) + map_.t;
      map_.A = map_.A * R;
    }
    ScalarImage truth = brain_ ? rasterise(sc_.size, *brain_, map_) : rasterise(sc_.size, shepp_logan_value, map_);

    std::vector<std::uint8_t> mask(geometry_->n_rows(), 1);
    if (sc_.subsample_fraction < 1.0)
      for (auto& m : mask) m = rng_.bernoulli(sc_.subsample_fraction) ? 1 : 0;
    RadonOp A(geometry_, std::move(mask));
    const Sinogram clean = A.apply(truth);
    Sinogram c = A.make_sinogram(sc_.background);
    CountImage z(clean.width(), clean.height(), 0);
    for (std::size_t r = 0; r < clean.size(); ++r)
      if (A.active(r)) z[r] = rng_.poisson(clean[r] + c[r]);

    FrameProblem p{DataTermPoisson{std::move(A), std::move(z), std::move(c), sc_.L}, TVRegulariser{sc_.alpha}, GradOp{},
                   disp, k_};
    ++k_;
    return {std::move(p), std::move(truth)};
  }

 private:
  PetScenario sc_;
  SeededRng rng_;
  std::shared_ptr<const RadonGeometry> geometry_;
  std::unique_ptr<SyntheticBrain> brain_;
  AffineMap map_;
  std::size_t k_ = 0;
};

inline std::vector<Frame> make_pet_frames(const PetScenario& s) {
  PetFrameSource src(s);
  std::vector<Frame> out;
  out.reserve(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) out.push_back(src.next());
  return out;
}

}  // namespace popd
