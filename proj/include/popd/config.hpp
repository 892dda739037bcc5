#pragma once

// Plain-text run configuration: `section.key = value` lines, `#` comments.
// Unknown or inapplicable keys are errors reported with their line number.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "popd/image_io.hpp"
#include "popd/params.hpp"
#include "popd/predictors.hpp"
#include "popd/scenarios.hpp"

namespace popd {

/// Bad or unreadable configuration; maps to the usage/config exit status.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Experiment { stabilise, pet };
enum class DiagnosticsMode { off, gaps, full };

struct StepConfig {
  double tau = 0.01;
  double kappa = 1.0;
  double L = 0.0;
  double alpha = 0.25;
  double gamma = 1.0;
  double rho = 0.0;
  int steps_per_frame = 1;
};

struct RunConfig {
  Experiment experiment = Experiment::stabilise;
  Scale scale = Scale::desk;
  std::uint64_t seed = 1;
  std::string output_dir = "popd_out";
  std::size_t dump_every = 100;
  DiagnosticsMode diagnostics = DiagnosticsMode::off;
  bool wall_time = false;
  std::size_t oracle_iters = 2000;
  double oracle_tol = 1e-9;

  StabilisationScenario stabilise;
  std::string source_image;  // empty: synthetic scene
  PetScenario pet;

  PredictorKind predictor = predictor::DualScaling{};
  StepConfig step;

  std::vector<PredictorKind> compare_predictors;
  std::size_t burnin = 500;

  std::size_t n_frames() const { return experiment == Experiment::pet ? pet.n_frames : stabilise.n_frames; }
};

// ---------------------------------------------------------------------------
// Value parsing.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

}  // namespace detail

struct ConfigEntry {
  std::string value;
  int line = 0;
};

/// Raw key-value pairs of a config text, in file order.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>") {
    ConfigFile cf;
    cf.origin_ = origin;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      const std::string body = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) cf.fail(line, "expected `section.key = value`");
      const std::string key = detail::trim(body.substr(0, eq));
      const std::string value = detail::trim(body.substr(eq + 1));
      if (key.find('.') == std::string::npos) cf.fail(line, "key `" + key + "` has no section prefix");
      if (value.empty()) cf.fail(line, "empty value for `" + key + "`");
      if (cf.entries_.count(key)) cf.fail(line, "duplicate key `" + key + "` (first set on line " +
                                                  std::to_string(cf.entries_.at(key).line) + ")");
      cf.entries_[key] = {value, line};
      cf.order_.push_back(key);
    }
    return cf;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file `" + path + "`");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  const std::vector<std::string>& order() const { return order_; }
  const std::string& origin() const { return origin_; }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

 private:
  std::string origin_;
  std::map<std::string, ConfigEntry> entries_;
  std::vector<std::string> order_;
};

namespace detail {

template <class T>
T parse_number(const ConfigFile& cf, const std::string& key, const ConfigEntry& e) {
  T v{};
  const char* b = e.value.data();
  const char* end = b + e.value.size();
  const auto [p, ec] = std::from_chars(b, end, v);
  if (ec != std::errc{} || p != end) cf.fail(e.line, "`" + key + "` expects a number, got `" + e.value + "`");
  return v;
}

inline bool parse_bool(const ConfigFile& cf, const std::string& key, const ConfigEntry& e) {
  if (e.value == "on" || e.value == "true" || e.value == "1") return true;
  if (e.value == "off" || e.value == "false" || e.value == "0") return false;
  cf.fail(e.line, "`" + key + "` expects on|off, got `" + e.value + "`");
}

inline std::vector<StopInterval> parse_stops(const ConfigFile& cf, const std::string& key, const ConfigEntry& e) {
  std::vector<StopInterval> out;
  if (e.value == "none") return out;
  for (const auto& item : split(e.value, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) cf.fail(e.line, "`" + key + "` expects ranges like `250-500,870-1000`");
    StopInterval s;
    const std::string a = trim(item.substr(0, dash)), b = trim(item.substr(dash + 1));
    const auto r1 = std::from_chars(a.data(), a.data() + a.size(), s.begin);
    const auto r2 = std::from_chars(b.data(), b.data() + b.size(), s.end);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || r1.ptr != a.data() + a.size() || r2.ptr != b.data() + b.size() ||
        s.begin > s.end)
      cf.fail(e.line, "bad stop interval `" + item + "` in `" + key + "`");
    out.push_back(s);
  }
  return out;
}

inline std::string stops_to_string(const std::vector<StopInterval>& stops) {
  if (stops.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(stops[i].begin) + "-" + std::to_string(stops[i].end);
  }
  return s;
}

}  // namespace detail

/// Predictor from its config name with default parameters for the experiment.
inline std::optional<PredictorKind> predictor_from_name(const std::string& name, Experiment exp,
                                                        PhantomKind phantom = PhantomKind::shepp_logan) {
  using namespace predictor;
  if (name == "no_prediction") return NoPrediction{};
  if (name == "primal_only") return PrimalOnly{};
  if (name == "zero_dual") return ZeroDual{};
  if (name == "proximal_old") return ProximalOld{};
  if (name == "pointwise_l2") return PointwiseL2{};
  if (name == "rotation") return Rotation{};
  if (name == "greedy") return Greedy{};
  if (name == "strict_greedy") return StrictGreedy{};
  if (name == "global_tv") return GlobalTV{};
  if (name == "dual_scaling") {
    if (exp == Experiment::pet && phantom == PhantomKind::shepp_logan) return DualScaling{1.0, Activation::sigmoid};
    return DualScaling{0.75, Activation::power};
  }
  return std::nullopt;
}

inline const std::vector<std::string>& all_predictor_names() {
  static const std::vector<std::string> names{"no_prediction", "primal_only",   "zero_dual", "proximal_old",
                                              "pointwise_l2",  "rotation",      "greedy",    "strict_greedy",
                                              "global_tv",     "dual_scaling"};
  return names;
}

/// Predictors in the default comparison table.
inline std::vector<std::string> default_compare_names() {
  return {"dual_scaling", "greedy",   "no_prediction", "primal_only",
          "proximal_old", "rotation", "strict_greedy", "zero_dual"};
}

namespace detail {

/// Applies predictor.* overrides (other than kind) to a predictor.
inline void apply_predictor_params(PredictorKind& kind, const std::map<std::string, const ConfigEntry*>& params,
                                   const ConfigFile& cf) {
  auto mode_of = [&](const std::string& key, const ConfigEntry& e) {
    if (e.value == "tv") return PreserveMode::tv;
    if (e.value == "inner_product") return PreserveMode::inner_product;
    cf.fail(e.line, "`" + key + "` expects tv|inner_product, got `" + e.value + "`");
  };
  for (const auto& [key, e] : params) {
    bool used = false;
    std::visit(
        [&](auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (requires { k.mode; }) {
            if (key == "predictor.mode") k.mode = mode_of(key, *e), used = true;
          }
          if constexpr (std::is_same_v<K, predictor::ProximalOld>) {
            if (key == "predictor.rho_tilde") k.rho_tilde = parse_number<double>(cf, key, *e), used = true;
          }
          if constexpr (std::is_same_v<K, predictor::Greedy>) {
            if (key == "predictor.eps") k.eps_tol = parse_number<double>(cf, key, *e), used = true;
          }
          if constexpr (std::is_same_v<K, predictor::GlobalTV>) {
            if (key == "predictor.cg_tol") k.tol = parse_number<double>(cf, key, *e), used = true;
            if (key == "predictor.cg_max_iters") k.max_iters = parse_number<int>(cf, key, *e), used = true;
          }
          if constexpr (std::is_same_v<K, predictor::DualScaling>) {
            if (key == "predictor.chi") k.chi = parse_number<double>(cf, key, *e), used = true;
            if (key == "predictor.activation") {
              if (e->value == "sigmoid") k.activation = Activation::sigmoid;
              else if (e->value == "power") k.activation = Activation::power;
              else cf.fail(e->line, "`predictor.activation` expects sigmoid|power, got `" + e->value + "`");
              used = true;
            }
          }
        },
        kind);
    if (!used)
      cf.fail(e->line, "`" + key + "` does not apply to predictor `" + predictor_name(kind) + "`");
  }
}

}  // namespace detail

/// Builds a RunConfig: scale defaults first, then every key of the file.
inline RunConfig build_run_config(const ConfigFile& cf) {
  using detail::parse_number;
  const auto& ents = cf.entries();
  auto get = [&](const std::string& k) -> const ConfigEntry* {
    auto it = ents.find(k);
    return it == ents.end() ? nullptr : &it->second;
  };

  RunConfig rc;
  if (const auto* e = get("run.experiment")) {
    if (e->value == "stabilise") rc.experiment = Experiment::stabilise;
    else if (e->value == "pet") rc.experiment = Experiment::pet;
    else cf.fail(e->line, "`run.experiment` expects stabilise|pet, got `" + e->value + "`");
  }
  if (const auto* e = get("run.scale")) {
    if (e->value == "desk") rc.scale = Scale::desk;
    else if (e->value == "paper") rc.scale = Scale::paper;
    else cf.fail(e->line, "`run.scale` expects desk|paper, got `" + e->value + "`");
  }
  const bool pet = rc.experiment == Experiment::pet;
  rc.stabilise = StabilisationScenario::defaults(rc.scale);
  rc.pet = PetScenario::defaults(rc.scale);
  if (pet) {
    rc.step.tau = 0.003;
    rc.step.L = 300.0;
  }
  rc.burnin = (pet && rc.scale == Scale::desk) ? 250 : 500;
  if (const auto* e = get("scenario.phantom")) {
    if (!pet) cf.fail(e->line, "`scenario.phantom` applies only to run.experiment = pet");
    if (e->value == "shepp_logan") rc.pet.phantom = PhantomKind::shepp_logan;
    else if (e->value == "synthetic_brain") rc.pet.phantom = PhantomKind::synthetic_brain;
    else cf.fail(e->line, "`scenario.phantom` expects shepp_logan|synthetic_brain, got `" + e->value + "`");
  }
  rc.predictor = *predictor_from_name("dual_scaling", rc.experiment, rc.pet.phantom);

  std::map<std::string, const ConfigEntry*> predictor_params;
  for (const auto& key : cf.order()) {
    const ConfigEntry& e = ents.at(key);
    auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(cf, key, e); };
    auto only = [&](bool ok) {
      if (!ok)
        cf.fail(e.line, "`" + key + "` does not apply to run.experiment = " + (pet ? "pet" : "stabilise"));
    };
    if (key == "run.experiment" || key == "run.scale" || key == "scenario.phantom") continue;
    if (key == "run.seed") num(rc.seed);
    else if (key == "run.output_dir") rc.output_dir = e.value;
    else if (key == "run.dump_every") num(rc.dump_every);
    else if (key == "run.diagnostics") {
      if (e.value == "off") rc.diagnostics = DiagnosticsMode::off;
      else if (e.value == "gaps") rc.diagnostics = DiagnosticsMode::gaps;
      else if (e.value == "full") rc.diagnostics = DiagnosticsMode::full;
      else cf.fail(e.line, "`run.diagnostics` expects off|gaps|full, got `" + e.value + "`");
    } else if (key == "run.wall_time") rc.wall_time = detail::parse_bool(cf, key, e);
    else if (key == "diagnostics.oracle_iters") num(rc.oracle_iters);
    else if (key == "diagnostics.oracle_tol") num(rc.oracle_tol);
    else if (key == "scenario.n_frames") pet ? num(rc.pet.n_frames) : num(rc.stabilise.n_frames);
    else if (key == "scenario.stop_intervals")
      (pet ? rc.pet.stop_intervals : rc.stabilise.stop_intervals) = detail::parse_stops(cf, key, e);
    else if (key == "scenario.source_image") only(!pet), rc.source_image = e.value;
    else if (key == "scenario.source_width") only(!pet), num(rc.stabilise.source_width);
    else if (key == "scenario.source_height") only(!pet), num(rc.stabilise.source_height);
    else if (key == "scenario.width") only(!pet), num(rc.stabilise.crop_width);
    else if (key == "scenario.height") only(!pet), num(rc.stabilise.crop_height);
    else if (key == "scenario.brownian_std") only(!pet), num(rc.stabilise.brownian_std);
    else if (key == "scenario.data_noise_std") only(!pet), num(rc.stabilise.data_noise_std);
    else if (key == "scenario.displacement_noise_std") only(!pet), num(rc.stabilise.displacement_noise_std);
    else if (key == "scenario.size") only(pet), num(rc.pet.size);
    else if (key == "scenario.n_bins") only(pet), num(rc.pet.n_bins);
    else if (key == "scenario.n_angles") only(pet), num(rc.pet.n_angles);
    else if (key == "scenario.subsample_fraction") only(pet), num(rc.pet.subsample_fraction);
    else if (key == "scenario.rotation_angle_std") only(pet), num(rc.pet.rotation_angle_std);
    else if (key == "scenario.center_offset_std") only(pet), num(rc.pet.center_offset_std);
    else if (key == "scenario.angle_noise_std") only(pet), num(rc.pet.angle_noise_std);
    else if (key == "scenario.center_noise_std") only(pet), num(rc.pet.center_noise_std);
    else if (key == "scenario.background") only(pet), num(rc.pet.background);
    else if (key == "step.tau") num(rc.step.tau);
    else if (key == "step.kappa") num(rc.step.kappa);
    else if (key == "step.L") num(rc.step.L);
    else if (key == "step.alpha") num(rc.step.alpha);
    else if (key == "step.gamma") num(rc.step.gamma);
    else if (key == "step.rho") num(rc.step.rho);
    else if (key == "step.steps_per_frame") num(rc.step.steps_per_frame);
    else if (key == "predictor.kind") {
      auto k = predictor_from_name(e.value, rc.experiment, rc.pet.phantom);
      if (!k) cf.fail(e.line, "unknown predictor `" + e.value + "`");
      rc.predictor = *k;
    } else if (key.rfind("predictor.", 0) == 0) {
      static const char* known[] = {"predictor.mode", "predictor.eps", "predictor.rho_tilde", "predictor.chi",
                                    "predictor.activation", "predictor.cg_tol", "predictor.cg_max_iters"};
      if (std::find(std::begin(known), std::end(known), key) == std::end(known)) cf.fail(e.line, "unknown key `" + key + "`");
      predictor_params[key] = &e;
    } else if (key == "compare.predictors") {
      rc.compare_predictors.clear();
      for (const auto& name : detail::split(e.value, ',')) {
        auto k = predictor_from_name(name, rc.experiment, rc.pet.phantom);
        if (!k) cf.fail(e.line, "unknown predictor `" + name + "` in compare.predictors");
        rc.compare_predictors.push_back(*k);
      }
    } else if (key == "compare.burnin") num(rc.burnin);
    else cf.fail(e.line, "unknown key `" + key + "`");
  }
  detail::apply_predictor_params(rc.predictor, predictor_params, cf);

  rc.stabilise.seed = rc.seed;
  rc.pet.seed = rc.seed;
  rc.stabilise.alpha = rc.step.alpha;
  rc.pet.alpha = rc.step.alpha;
  rc.pet.L = rc.step.L;
  if (rc.step.steps_per_frame < 1) throw ConfigError(cf.origin() + ": step.steps_per_frame must be >= 1");
  try {
    pet ? rc.pet.validate() : rc.stabilise.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(cf.origin() + ": " + ex.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) { return build_run_config(ConfigFile::load(path)); }

/// Step parameters of a config with the largest feasible sigma.
inline StepParams resolve_step_params(const RunConfig& rc) {
  const double knorm = GradOp{}.norm_bound();
  ConvexityFactors f;
  f.gamma_F = rc.experiment == Experiment::stabilise ? DataTermL2::strong_convexity : 0.0;
  f.rho = rc.step.rho;
  StepParams p = make_unaccelerated_params(rc.step.tau, rc.step.L, rc.step.kappa, knorm, rc.step.alpha, f);
  // The configured gamma is a recorded testing parameter; the constant-step
  // schedule does not consume it.
  p.gamma = rc.step.gamma;
  return p;
}

namespace detail {

inline std::string predictor_params_string(const PredictorKind& kind) {
  std::ostringstream os;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (requires { k.mode; })
          os << "predictor.mode = " << (k.mode == PreserveMode::tv ? "tv" : "inner_product") << "\n";
        if constexpr (std::is_same_v<K, predictor::ProximalOld>) os << "predictor.rho_tilde = " << csv_number(k.rho_tilde) << "\n";
        if constexpr (std::is_same_v<K, predictor::Greedy>) os << "predictor.eps = " << csv_number(k.eps_tol) << "\n";
        if constexpr (std::is_same_v<K, predictor::GlobalTV>)
          os << "predictor.cg_tol = " << csv_number(k.tol) << "\npredictor.cg_max_iters = " << k.max_iters << "\n";
        if constexpr (std::is_same_v<K, predictor::DualScaling>)
          os << "predictor.chi = " << csv_number(k.chi) << "\npredictor.activation = "
             << (k.activation == Activation::sigmoid ? "sigmoid" : "power") << "\n";
      },
      kind);
  return os.str();
}

}  // namespace detail

/// Every effective parameter, in config syntax, plus derived step values as comments.
inline std::string resolved_config_text(const RunConfig& rc, const StepParams& p) {
  std::ostringstream os;
  const bool pet = rc.experiment == Experiment::pet;
  os << "run.experiment = " << (pet ? "pet" : "stabilise") << "\n";
  os << "run.scale = " << (rc.scale == Scale::paper ? "paper" : "desk") << "\n";
  os << "run.seed = " << rc.seed << "\n";
  os << "run.output_dir = " << rc.output_dir << "\n";
  os << "run.dump_every = " << rc.dump_every << "\n";
  os << "run.diagnostics = "
     << (rc.diagnostics == DiagnosticsMode::off ? "off" : rc.diagnostics == DiagnosticsMode::gaps ? "gaps" : "full")
     << "\n";
  os << "run.wall_time = " << (rc.wall_time ? "on" : "off") << "\n";
  os << "diagnostics.oracle_iters = " << rc.oracle_iters << "\n";
  os << "diagnostics.oracle_tol = " << csv_number(rc.oracle_tol) << "\n";
  if (pet) {
    const auto& s = rc.pet;
    os << "scenario.phantom = " << (s.phantom == PhantomKind::shepp_logan ? "shepp_logan" : "synthetic_brain") << "\n";
    os << "scenario.size = " << s.size << "\n";
    os << "scenario.n_bins = " << s.n_bins << "\n";
    os << "scenario.n_angles = " << s.n_angles << "\n";
    os << "scenario.subsample_fraction = " << csv_number(s.subsample_fraction) << "\n";
    os << "scenario.rotation_angle_std = " << csv_number(s.rotation_angle_std) << "\n";
    os << "scenario.center_offset_std = " << csv_number(s.center_offset_std) << "\n";
    os << "scenario.angle_noise_std = " << csv_number(s.angle_noise_std) << "\n";
    os << "scenario.center_noise_std = " << csv_number(s.center_noise_std) << "\n";
    os << "scenario.background = " << csv_number(s.background) << "\n";
    os << "scenario.n_frames = " << s.n_frames << "\n";
    os << "scenario.stop_intervals = " << detail::stops_to_string(s.stop_intervals) << "\n";
  } else {
    const auto& s = rc.stabilise;
    if (!rc.source_image.empty()) os << "scenario.source_image = " << rc.source_image << "\n";
    else os << "scenario.source_width = " << s.source_width << "\nscenario.source_height = " << s.source_height << "\n";
    os << "scenario.width = " << s.crop_width << "\n";
    os << "scenario.height = " << s.crop_height << "\n";
    os << "scenario.n_frames = " << s.n_frames << "\n";
    os << "scenario.brownian_std = " << csv_number(s.brownian_std) << "\n";
    os << "scenario.data_noise_std = " << csv_number(s.data_noise_std) << "\n";
    os << "scenario.displacement_noise_std = " << csv_number(s.displacement_noise_std) << "\n";
    os << "scenario.stop_intervals = " << detail::stops_to_string(s.stop_intervals) << "\n";
  }
  os << "predictor.kind = " << predictor_name(rc.predictor) << "\n" << detail::predictor_params_string(rc.predictor);
  os << "step.tau = " << csv_number(rc.step.tau) << "\n";
  os << "step.kappa = " << csv_number(rc.step.kappa) << "\n";
  os << "step.L = " << csv_number(rc.step.L) << "\n";
  os << "step.alpha = " << csv_number(rc.step.alpha) << "\n";
  os << "step.gamma = " << csv_number(rc.step.gamma) << "\n";
  os << "step.rho = " << csv_number(rc.step.rho) << "\n";
  os << "step.steps_per_frame = " << rc.step.steps_per_frame << "\n";
  os << "compare.burnin = " << rc.burnin << "\n";
  if (!rc.compare_predictors.empty()) {
    os << "compare.predictors = ";
    for (std::size_t i = 0; i < rc.compare_predictors.size(); ++i)
      os << (i ? "," : "") << predictor_name(rc.compare_predictors[i]);
    os << "\n";
  }
  os << "# derived\n";
  os << "# step.sigma = " << csv_number(p.sigma) << "\n";
  os << "# step.eta = " << csv_number(p.eta) << "\n";
  os << "# step.phi = " << csv_number(p.phi) << "\n";
  os << "# step.psi = " << csv_number(p.psi) << "\n";
  os << "# step.K_norm_bound = " << csv_number(p.K_norm_bound) << "\n";
  return os.str();
}

}  // namespace popd
