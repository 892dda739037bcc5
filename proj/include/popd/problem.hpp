#pragma once

#include <cstddef>
#include <limits>
#include <type_traits>
#include <variant>

#include "popd/operators.hpp"
#include "popd/proxops.hpp"

namespace popd {

/// Everything defining one data frame: F + E + G(K x) with K the gradient,
/// plus the motion that carried the previous frame into this one.
struct FrameProblem {
  std::variant<DataTermL2, DataTermPoisson> data;
  TVRegulariser regulariser;
  GradOp grad;
  DisplacementPair displacement;
  std::size_t index = 0;

  bool has_smooth_term() const { return std::holds_alternative<DataTermPoisson>(data); }

  std::size_t image_width() const {
    return std::visit(
        [](const auto& d) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(d)>, DataTermL2>) return d.z.width();
          else return d.A.geometry().image_width();
        },
        data);
  }
  std::size_t image_height() const {
    return std::visit(
        [](const auto& d) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(d)>, DataTermL2>) return d.z.height();
          else return d.A.geometry().image_height();
        },
        data);
  }

  /// F(x) + E(x), +inf outside dom F.
  double smooth_plus_data(const ScalarImage& x) const {
    if (const auto* l2 = std::get_if<DataTermL2>(&data)) return l2->value(x);
    const auto& pet = std::get<DataTermPoisson>(data);
    for (double v : x)
      if (v < 0.0) return std::numeric_limits<double>::infinity();
    return pet.energy(x);
  }

  /// prox_{tau F}
  ScalarImage prox_primal(double tau, const ScalarImage& x) const {
    if (const auto* l2 = std::get_if<DataTermL2>(&data)) return prox_l2_data(*l2, tau, x);
    return prox_nonneg(tau, x);
  }
};

}  // namespace popd
