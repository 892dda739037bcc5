#pragma once

// Step-length and testing parameters and their validity conditions.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace popd {

/// Thrown when step lengths violate metric positivity or coupling conditions.
class InfeasibleParams : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ConvexityFactors {
  double gamma_F = 0.0;
  double gamma_E = 0.0;
  double rho = 0.0;
};

struct StepParams {
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 0.0;
  double phi = 0.0;
  double psi = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  double kappa = 1.0;
  double L = 0.0;
  double alpha = 0.0;
  double K_norm_bound = 0.0;

  /// tau L / kappa + tau sigma ||K||^2, which must not exceed 1.
  double metric_positivity_lhs() const { return tau * L / kappa + tau * sigma * K_norm_bound * K_norm_bound; }

  void validate() const {
    auto fail = [](const std::string& m) { throw InfeasibleParams("StepParams: " + m); };
    if (!(tau > 0 && sigma > 0 && eta > 0 && phi > 0 && psi > 0)) fail("tau, sigma, eta, phi, psi must be > 0");
    if (!(gamma >= 0 && rho >= 0 && L >= 0)) fail("gamma, rho, L must be >= 0");
    if (!(kappa > 0 && kappa <= 1)) fail("kappa must lie in (0, 1]");
    if (!(alpha > 0 && K_norm_bound > 0)) fail("alpha and K_norm_bound must be > 0");
    const double tol = 1e-12 * std::max(1.0, eta);
    if (std::abs(eta - phi * tau) > tol || std::abs(eta - psi * sigma) > tol)
      fail("primal-dual coupling eta = phi tau = psi sigma violated");
    if (metric_positivity_lhs() > 1.0 + 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << "metric positivity violated: tau L / kappa + tau sigma ||K||^2 = " << metric_positivity_lhs() << " > 1";
      fail(os.str());
    }
  }
};

/// Primal strong convexity factor gamma = gamma_F + gamma_E - kappa L when
/// gamma_E > 0, else gamma_F.
inline double combined_strong_convexity(const ConvexityFactors& f, double kappa, double L) {
  const double g = f.gamma_E > 0.0 ? f.gamma_F + f.gamma_E - kappa * L : f.gamma_F;
  if (g < 0.0) throw InfeasibleParams("strong convexity factor gamma_F + gamma_E - kappa L is negative");
  return g;
}

/// Constant steps tau, sigma with eta = tau, phi = 1, psi = tau / sigma and the
/// largest sigma allowed by metric positivity:
/// sigma = (1 - tau L / kappa) / (tau ||K||^2).
inline StepParams make_unaccelerated_params(double tau, double L, double kappa, double K_norm_bound, double alpha,
                                            const ConvexityFactors& factors = {}) {
  if (!(tau > 0.0)) throw InfeasibleParams("tau must be > 0");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw InfeasibleParams("kappa must lie in (0, 1]");
  const double lipschitz_share = tau * L / kappa;
  if (!(lipschitz_share < 1.0)) {
    std::ostringstream os;
    os.precision(17);
    os << "infeasible step: tau L / kappa = " << tau << " * " << L << " / " << kappa << " = " << lipschitz_share
       << " >= 1, so no sigma > 0 satisfies 1 >= tau L / kappa + tau sigma ||K||^2";
    throw InfeasibleParams(os.str());
  }
  StepParams p;
  p.tau = tau;
  p.L = L;
  p.kappa = kappa;
  p.K_norm_bound = K_norm_bound;
  p.alpha = alpha;
  p.sigma = (1.0 - lipschitz_share) / (tau * K_norm_bound * K_norm_bound);
  p.eta = tau;
  p.phi = 1.0;
  p.psi = tau / p.sigma;
  p.rho = factors.rho;
  p.gamma = combined_strong_convexity(factors, kappa, L);
  p.validate();
  return p;
}

}  // namespace popd
