#pragma once

// Experiment orchestration: frame streams built from a RunConfig, the metric
// and diagnostic sinks around run_online, CSV output and summary statistics.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "popd/config.hpp"
#include "popd/diagnostics.hpp"
#include "popd/engine.hpp"
#include "popd/image_io.hpp"
#include "popd/metrics.hpp"
#include "popd/scenarios.hpp"

namespace popd {

struct FrameRecord {
  std::size_t frame = 0;
  double psnr = 0.0;  // capped
  double ssim = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;
};

/// Extra per-frame quantities written in full diagnostics mode.
struct DiagnosticsRecord {
  std::size_t frame = 0;
  double attain_residual = 0.0;      // alpha ||D x_pred||_{2,1} - <D x_pred, y_pred>
  double feasibility_excess = 0.0;   // max(0, ||y_pred||_{2,inf} - alpha)
  double w_diff = 0.0;               // ||W_measured - W_true||^2
  double lipschitz_estimate = std::numeric_limits<double>::quiet_NaN();
  double oracle_gap = std::numeric_limits<double>::quiet_NaN();
  double M_x = std::numeric_limits<double>::quiet_NaN();  // ||x_opt||^2
  double M_y = std::numeric_limits<double>::quiet_NaN();  // ||y_opt||^2
};

struct RunOptions {
  DiagnosticsMode diagnostics = DiagnosticsMode::off;
  std::size_t oracle_iters = 2000;
  double oracle_tol = 1e-9;
  bool wall_time = false;
  std::size_t dump_every = 0;  // 0: no image dumps
  std::filesystem::path dump_dir;
  int steps_per_frame = 1;
};

struct RunResult {
  std::vector<FrameRecord> records;
  std::vector<DiagnosticsRecord> diagnostics;
  PdState final_state;
};

inline RunOptions run_options(const RunConfig& rc) {
  RunOptions o;
  o.diagnostics = rc.diagnostics;
  o.oracle_iters = rc.oracle_iters;
  o.oracle_tol = rc.oracle_tol;
  o.wall_time = rc.wall_time;
  o.dump_every = rc.dump_every;
  o.dump_dir = rc.output_dir;
  o.steps_per_frame = rc.step.steps_per_frame;
  return o;
}

/// Sequential frame stream for a configuration; frames are produced lazily
/// and only the current one is kept.
class FrameStream {
 public:
  explicit FrameStream(const RunConfig& rc) {
    if (rc.experiment == Experiment::pet) {
      src_.emplace<PetFrameSource>(rc.pet);
    } else {
      StabilisationScenario s = rc.stabilise;
      if (!rc.source_image.empty()) s.source = read_pgm(rc.source_image);
      src_.emplace<StabilisationFrameSource>(std::move(s));
    }
  }

  std::size_t size() const {
    return std::visit([](const auto& s) -> std::size_t {
      if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::monostate>) return 0;
      else return s.size();
    }, src_);
  }

  /// Frame k; k must be the current frame or the one after it.
  const Frame& at(std::size_t k) {
    if (current_ && k == k_) return *current_;
    if (k != (current_ ? k_ + 1 : 0)) throw std::logic_error("FrameStream: frames must be requested in order");
    current_ = std::visit([](auto& s) -> Frame {
      if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::monostate>) throw std::logic_error("FrameStream: empty");
      else return s.next();
    }, src_);
    k_ = k;
    return *current_;
  }

 private:
  std::variant<std::monostate, StabilisationFrameSource, PetFrameSource> src_;
  std::optional<Frame> current_;
  std::size_t k_ = 0;
};

/// Approximate memory of one frame in bytes.
inline std::size_t frame_bytes(const RunConfig& rc) {
  if (rc.experiment == Experiment::pet) {
    const std::size_t img = rc.pet.size * rc.pet.size, sino = rc.pet.n_bins * rc.pet.n_angles;
    return 8 * img + 8 * 2 * sino + sino;
  }
  return 2 * 8 * rc.stabilise.crop_width * rc.stabilise.crop_height;
}

inline std::vector<Frame> materialise_frames(const RunConfig& rc) {
  FrameStream s(rc);
  std::vector<Frame> out;
  out.reserve(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out.push_back(s.at(k));
  return out;
}

/// Runs one predictor over a frame sequence, computing metrics, optional
/// diagnostics and image dumps. `frame_at(k)` returns `const Frame&` and is
/// called with k = 0, 1, ... in order.
template <class FrameAt>
RunResult run_experiment(std::size_t n_frames, FrameAt&& frame_at, const PredictorKind& kind, const StepParams& params,
                         const RunOptions& opts) {
  const Predictor predictor(kind);
  RunResult out;
  out.records.reserve(n_frames);
  const Frame* current = nullptr;
  double lipschitz = 0.0;
  using clock = std::chrono::steady_clock;
  auto t_start = clock::now();

  auto problem_at = [&](std::size_t k) -> const FrameProblem& {
    current = &frame_at(k);
    t_start = clock::now();
    return current->problem;
  };
  auto sink = [&](std::size_t k, const FrameProblem& problem, const PdState& state) {
    FrameRecord rec;
    rec.frame = k;
    if (opts.wall_time) rec.wall_time = std::chrono::duration<double>(clock::now() - t_start).count();
    rec.psnr = capped_psnr(psnr(state.x, current->truth));
    rec.ssim = ssim(state.x, current->truth);
    if (opts.diagnostics != DiagnosticsMode::off) {
      const StaticSaddle oracle = solve_static(problem, opts.oracle_iters, opts.oracle_tol);
      rec.gap = duality_gap(problem, state.x, state.y, oracle.x_opt, oracle.y_opt, params.eta);
      if (opts.diagnostics == DiagnosticsMode::full) {
        DiagnosticsRecord d;
        d.frame = k;
        const auto [res, excess] = tv_preservation_residual(problem.grad, problem.regulariser.alpha, state.x_pred,
                                                            state.y_pred);
        d.attain_residual = res;
        d.feasibility_excess = excess;
        d.w_diff = estimate_predictor_gap_norms(problem.displacement.measured, problem.displacement.truth, state.x, 20);
        if (const auto* pet = std::get_if<DataTermPoisson>(&problem.data)) {
          try {
            lipschitz = update_lipschitz_estimate(lipschitz, pet->gradient(state.x), pet->gradient(state.x_pred),
                                                  state.x, state.x_pred);
            d.lipschitz_estimate = lipschitz;
          } catch (const std::domain_error&) {
          }
        }
        d.oracle_gap = oracle.gap_achieved;
        d.M_x = std::pow(l2_norm(oracle.x_opt), 2);
        d.M_y = std::pow(l2_norm(oracle.y_opt), 2);
        out.diagnostics.push_back(d);
      }
    }
    if (opts.dump_every > 0 && !opts.dump_dir.empty() && k % opts.dump_every == 0) {
      write_pgm((opts.dump_dir / frame_file_name("frame", k)).string(), state.x);
      write_pgm((opts.dump_dir / frame_file_name("truth", k)).string(), current->truth);
    }
    out.records.push_back(rec);
  };
  out.final_state = run_online(n_frames, problem_at, predictor, params, sink, opts.steps_per_frame);
  return out;
}

inline RunResult run_experiment(const std::vector<Frame>& frames, const PredictorKind& kind, const StepParams& params,
                                const RunOptions& opts) {
  return run_experiment(frames.size(), [&](std::size_t k) -> const Frame& { return frames[k]; }, kind, params, opts);
}

inline RunResult run_experiment(const RunConfig& rc, const PredictorKind& kind, const StepParams& params,
                                const RunOptions& opts) {
  FrameStream stream(rc);
  return run_experiment(stream.size(), [&](std::size_t k) -> const Frame& { return stream.at(k); }, kind, params, opts);
}

// ---------------------------------------------------------------------------
// Summary statistics and CSV output.

struct SummaryRow {
  std::string predictor;
  double avg_psnr_full = 0.0;
  double avg_psnr_burnin = 0.0;
  double psnr_ci_lo = 0.0;
  double psnr_ci_hi = 0.0;
  double avg_ssim_full = 0.0;
  double avg_ssim_burnin = 0.0;
  double ssim_ci_lo = 0.0;
  double ssim_ci_hi = 0.0;
};

/// Averages over all frames and over frames k >= burnin, with 95% intervals
/// over the latter.
inline SummaryRow summarise(const std::string& name, const std::vector<FrameRecord>& recs, std::size_t burnin) {
  if (burnin >= recs.size())
    throw std::invalid_argument("summarise: burn-in frame " + std::to_string(burnin) + " leaves no frames of " +
                                std::to_string(recs.size()));
  std::vector<double> p, s;
  for (const auto& r : recs) p.push_back(r.psnr), s.push_back(r.ssim);
  const auto pf = mean_ci95(p), sf = mean_ci95(s);
  const auto pb = mean_ci95(std::span<const double>(p).subspan(burnin));
  const auto sb = mean_ci95(std::span<const double>(s).subspan(burnin));
  return {name, pf.mean, pb.mean, pb.lo, pb.hi, sf.mean, sb.mean, sb.lo, sb.hi};
}

namespace detail {
inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}
}  // namespace detail

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<FrameRecord>& recs) {
  auto out = detail::open_csv(path);
  out << "frame,psnr,ssim,gap,wall_time\n";
  for (const auto& r : recs)
    out << r.frame << ',' << csv_number(r.psnr) << ',' << csv_number(r.ssim) << ',' << csv_number(r.gap) << ','
        << csv_number(r.wall_time) << '\n';
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<DiagnosticsRecord>& recs) {
  auto out = detail::open_csv(path);
  out << "frame,attain_residual,feasibility_excess,w_diff,lipschitz_estimate,oracle_gap,M_x,M_y\n";
  for (const auto& r : recs)
    out << r.frame << ',' << csv_number(r.attain_residual) << ',' << csv_number(r.feasibility_excess) << ','
        << csv_number(r.w_diff) << ',' << csv_number(r.lipschitz_estimate) << ',' << csv_number(r.oracle_gap) << ','
        << csv_number(r.M_x) << ',' << csv_number(r.M_y) << '\n';
}

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = detail::open_csv(path);
  out << "predictor,avg_psnr_full,avg_psnr_burnin,psnr_ci_lo,psnr_ci_hi,avg_ssim_full,avg_ssim_burnin,ssim_ci_lo,"
         "ssim_ci_hi\n";
  for (const auto& r : rows)
    out << r.predictor << ',' << csv_number(r.avg_psnr_full) << ',' << csv_number(r.avg_psnr_burnin) << ','
        << csv_number(r.psnr_ci_lo) << ',' << csv_number(r.psnr_ci_hi) << ',' << csv_number(r.avg_ssim_full) << ','
        << csv_number(r.avg_ssim_burnin) << ',' << csv_number(r.ssim_ci_lo) << ',' << csv_number(r.ssim_ci_hi)
        << '\n';
}

}  // namespace popd
