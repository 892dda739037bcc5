#pragma once

// The predictive online primal-dual step and the frame loop around it.

#include <cstddef>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "popd/core.hpp"
#include "popd/params.hpp"
#include "popd/predictors.hpp"
#include "popd/problem.hpp"

namespace popd {

struct PdState {
  ScalarImage x;
  VectorField2 y;
  ScalarImage x_pred;
  VectorField2 y_pred;
  std::size_t k = 0;
};

/// Zero initial iterate.
inline PdState make_zero_state(std::size_t width, std::size_t height) {
  PdState s;
  s.x = ScalarImage(width, height, 0.0);
  s.y = VectorField2(width, height);
  s.x_pred = s.x;
  s.y_pred = s.y;
  return s;
}

namespace detail {

/// Forward-backward primal update followed by the over-relaxed dual update,
/// from an already predicted pair.
inline void pd_update(const FrameProblem& problem, const StepParams& params, const ScalarImage& xp,
                      const VectorField2& yp, ScalarImage& x_out, VectorField2& y_out) {
  ScalarImage arg = xp;
  const ScalarImage kty = problem.grad.adjoint(yp);
  if (const auto* pet = std::get_if<DataTermPoisson>(&problem.data)) {
    const ScalarImage g = pet->gradient(xp);
    for (std::size_t k = 0; k < arg.size(); ++k) arg[k] -= params.tau * (g[k] + kty[k]);
  } else {
    for (std::size_t k = 0; k < arg.size(); ++k) arg[k] -= params.tau * kty[k];
  }
  x_out = problem.prox_primal(params.tau, arg);

  ScalarImage over = x_out;
  for (std::size_t k = 0; k < over.size(); ++k) over[k] = 2.0 * x_out[k] - xp[k];
  VectorField2 dual = problem.grad.apply(over);
  for (std::size_t k = 0; k < dual.size(); ++k) dual[k] = yp[k] + params.sigma * dual[k];
  y_out = prox_tv_conjugate(problem.regulariser, params.sigma, dual);
}

inline void check_state(const FrameProblem& problem, const PdState& state) {
  if (state.x.width() != problem.image_width() || state.x.height() != problem.image_height() ||
      !state.x.same_shape(state.y))
    throw std::invalid_argument("popd2_step: state dimensions do not match the frame");
}

}  // namespace detail

/// One step of the method on frame k+1:
///   (x_pred, y_pred) = P(x, y)
///   x+ = prox_{tau F}(x_pred - tau grad E(x_pred) - tau K^* y_pred)
///   y+ = prox_{sigma G^*}(y_pred + sigma K(2 x+ - x_pred))
template <PredictorLike P>
PdState popd2_step(const FrameProblem& problem, const P& predictor, const PdState& state, const StepParams& params) {
  detail::check_state(problem, state);
  const PredictContext ctx{problem.displacement.measured, problem.grad, problem.regulariser.alpha, params.sigma};
  Prediction pred = predictor.predict(ctx, state.x, state.y);
  PdState next;
  next.k = state.k + 1;
  detail::pd_update(problem, params, pred.x, pred.y, next.x, next.y);
  next.x_pred = std::move(pred.x);
  next.y_pred = std::move(pred.y);
  return next;
}

/// Plain primal-dual step on the current frame with no prediction; used for
/// extra steps within a frame and by the static oracle.
inline PdState pdps_step(const FrameProblem& problem, const PdState& state, const StepParams& params) {
  detail::check_state(problem, state);
  PdState next;
  next.k = state.k;
  next.x_pred = state.x;
  next.y_pred = state.y;
  detail::pd_update(problem, params, state.x, state.y, next.x, next.y);
  return next;
}

/// Runs the method over `n_frames` frames obtained from `frame_at(k)` for
/// k = 0, ..., n_frames - 1, starting from zero. The first frame's measured
/// displacement is applied like any other. After the steps on each frame
/// `sink(k, problem, state)` is invoked.
template <class FrameAt, PredictorLike P, class Sink>
PdState run_online(std::size_t n_frames, FrameAt&& frame_at, const P& predictor, const StepParams& params, Sink&& sink,
                   int steps_per_frame = 1) {
  if (n_frames == 0) throw std::invalid_argument("run_online: empty frame sequence");
  if (steps_per_frame < 1) throw std::invalid_argument("run_online: steps_per_frame must be >= 1");
  params.validate();
  PdState state;
  for (std::size_t k = 0; k < n_frames; ++k) {
    const FrameProblem& problem = frame_at(k);
    if (k == 0) state = make_zero_state(problem.image_width(), problem.image_height());
    state = popd2_step(problem, predictor, state, params);
    state.k = k;
    for (int s = 1; s < steps_per_frame; ++s) state = pdps_step(problem, state, params);
    sink(k, problem, state);
  }
  return state;
}

template <PredictorLike P, class Sink>
PdState run_online(const std::vector<FrameProblem>& problems, const P& predictor, const StepParams& params,
                   Sink&& sink, int steps_per_frame = 1) {
  return run_online(
      problems.size(), [&](std::size_t k) -> const FrameProblem& { return problems[k]; }, predictor, params,
      std::forward<Sink>(sink), steps_per_frame);
}

}  // namespace popd
