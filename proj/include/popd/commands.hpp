#pragma once

// The user-facing commands: run, compare and selftest. Each returns a process
// exit status and reports errors on the given stream.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "popd/config.hpp"
#include "popd/runner.hpp"
#include "popd/selftest.hpp"

namespace popd {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInfeasible = 2, kExitRuntime = 3 };

/// Frames above this total size are regenerated per predictor instead of stored.
inline constexpr std::size_t kCompareMemoryBudget = std::size_t{1} << 30;

namespace detail {

inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// Shared error mapping: config problems, infeasible steps, everything else.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InfeasibleParams& e) {
    err << "infeasible parameters: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace detail

/// Loads a config, checks the step parameters before any frame, runs the
/// configured predictor and writes metrics.csv, PGM dumps, resolved_config.txt
/// and (in full diagnostics mode) diagnostics.csv into run.output_dir.
inline int cmd_run(const std::string& config_path, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const RunConfig rc = load_run_config(config_path);
    const StepParams params = resolve_step_params(rc);
    const std::filesystem::path dir = rc.output_dir;
    detail::prepare_output_dir(dir);
    detail::write_text(dir / "resolved_config.txt", resolved_config_text(rc, params));
    const RunResult res = run_experiment(rc, rc.predictor, params, run_options(rc));
    write_metrics_csv(dir / "metrics.csv", res.records);
    if (rc.diagnostics == DiagnosticsMode::full) write_diagnostics_csv(dir / "diagnostics.csv", res.diagnostics);
    double mean_psnr = 0.0;
    for (const auto& r : res.records) mean_psnr += r.psnr;
    out << predictor_name(rc.predictor) << ": " << res.records.size() << " frames, mean PSNR "
        << mean_psnr / static_cast<double>(res.records.size()) << " dB -> " << (dir / "metrics.csv").string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

/// Runs several predictors on one frame sequence and writes
/// metrics_<predictor>.csv for each plus summary.csv. An empty `predictors`
/// list falls back to compare.predictors from the config, then to the
/// default comparison set.
inline int cmd_compare(const std::string& config_path, const std::vector<std::string>& predictors,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&]() -> int {
    RunConfig rc = load_run_config(config_path);
    std::vector<PredictorKind> kinds;
    if (!predictors.empty()) {
      for (const auto& name : predictors) {
        auto k = predictor_from_name(name, rc.experiment, rc.pet.phantom);
        if (!k) throw ConfigError("unknown predictor `" + name + "`");
        kinds.push_back(*k);
      }
    } else if (!rc.compare_predictors.empty()) {
      kinds = rc.compare_predictors;
    } else {
      for (const auto& name : default_compare_names()) kinds.push_back(*predictor_from_name(name, rc.experiment, rc.pet.phantom));
    }
    if (kinds.size() < 2) throw ConfigError("compare needs at least two predictors");
    std::set<std::string> seen;
    for (const auto& k : kinds)
      if (!seen.insert(predictor_name(k)).second) throw ConfigError("predictor `" + predictor_name(k) + "` listed twice");
    // The configured predictor's own parameter overrides carry over to the
    // same kind in the comparison.
    for (auto& k : kinds)
      if (k.index() == rc.predictor.index()) k = rc.predictor;
    rc.compare_predictors = kinds;
    if (rc.burnin >= rc.n_frames())
      throw ConfigError("compare.burnin = " + std::to_string(rc.burnin) + " leaves no frames of " +
                        std::to_string(rc.n_frames()));

    const StepParams params = resolve_step_params(rc);
    const std::filesystem::path dir = rc.output_dir;
    detail::prepare_output_dir(dir);
    detail::write_text(dir / "resolved_config.txt", resolved_config_text(rc, params));

    const bool store = frame_bytes(rc) * rc.n_frames() <= kCompareMemoryBudget;
    std::vector<Frame> frames;
    if (store) frames = materialise_frames(rc);
    std::vector<SummaryRow> rows;
    for (const auto& kind : kinds) {
      const std::string name = predictor_name(kind);
      RunOptions opts = run_options(rc);
      opts.dump_dir = dir / name;
      if (opts.dump_every > 0) detail::prepare_output_dir(opts.dump_dir);
      const RunResult res = store ? run_experiment(frames, kind, params, opts) : run_experiment(rc, kind, params, opts);
      write_metrics_csv(dir / ("metrics_" + name + ".csv"), res.records);
      if (rc.diagnostics == DiagnosticsMode::full)
        write_diagnostics_csv(dir / ("diagnostics_" + name + ".csv"), res.diagnostics);
      rows.push_back(summarise(name, res.records, rc.burnin));
      const auto& r = rows.back();
      out << name << ": PSNR " << r.avg_psnr_full << " / " << r.avg_psnr_burnin << " dB, SSIM " << r.avg_ssim_full
          << " / " << r.avg_ssim_burnin << " (all frames / from frame " << rc.burnin << ")\n";
    }
    write_summary_csv(dir / "summary.csv", rows);
    return kExitOk;
  });
}

inline int cmd_selftest(const SelftestOptions& opts = {}, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] { return run_selftest(opts, out) ? static_cast<int>(kExitOk) : static_cast<int>(kExitRuntime); });
}

}  // namespace popd
