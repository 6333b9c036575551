// Copyright 2026 The reweight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REWEIGHT_DIAGNOSTICS_HPP
#define REWEIGHT_DIAGNOSTICS_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>

#include "reweight/errors.hpp"
#include "reweight/problems.hpp"
#include "reweight/reweight_core.hpp"

namespace reweight {

/// Per-step record of a training run. Unset optionals are written as empty CSV cells.
struct StepDiagnostics {
  std::size_t step = 0;
  double train_loss = 0.0;  // full-objective f(theta^t)
  std::optional<double> test_loss;
  std::optional<double> batch_loss_mean;
  std::optional<double> r_value;
  std::optional<double> w_max;
  std::optional<double> w_min;
  std::optional<double> delta_t;
  std::optional<double> mu_t;
  std::optional<double> grad_gap;
  std::optional<double> theta_dist_sq;
  // delta_t with f_i(theta*) replaced by the final-iterate loss; filled after the run.
  std::optional<double> delta_t_proxy;
};

namespace detail {

inline double weighted_gap_sum(std::span<const double> a, std::span<const double> b,
                               const WeightVector& w, const char* name) {
  if (a.size() != w.size() || (!b.empty() && b.size() != w.size()))
    throw ValidationError(std::string(name) + ": length mismatch");
  const double inv_b = 1.0 / static_cast<double>(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gap = b.empty() ? a[i] : a[i] - b[i];
    acc += (inv_b - w[i]) * gap;
  }
  return acc;
}

}  // namespace detail

/// sum_i (1/b - w_i)(f_i(theta^t) - f_i(theta*)).
inline double delta_t(std::span<const double> losses_now, std::span<const double> losses_at_opt,
                      const WeightVector& weights) {
  if (losses_at_opt.size() != losses_now.size()) throw ValidationError("delta_t: length mismatch");
  return detail::weighted_gap_sum(losses_now, losses_at_opt, weights, "delta_t");
}

/// sum_i (1/b - w_i)(f_i(theta^t) - f_i(theta^{t-1})).
inline double mu_t(std::span<const double> losses_now, std::span<const double> losses_prev,
                   const WeightVector& weights) {
  if (losses_prev.size() != losses_now.size()) throw ValidationError("mu_t: length mismatch");
  return detail::weighted_gap_sum(losses_now, losses_prev, weights, "mu_t");
}

/// sum_i (1/b - w_i) ||grad f_i||^2, the reweighting term of the non-convex bound.
inline double grad_gap_term(std::span<const double> grad_norms_sq, const WeightVector& weights) {
  for (double g : grad_norms_sq)
    if (g < 0.0) throw ValidationError("grad_gap_term: negative squared norm");
  return detail::weighted_gap_sum(grad_norms_sq, {}, weights, "grad_gap_term");
}

/// 8 L ||theta^0 - theta*||^2 / T + mean(delta), the zero-noise full-gradient bound.
inline double convergence_bound(double L, double dist0_sq, std::size_t T,
                             std::span<const double> delta_series) {
  if (T == 0) throw ValidationError("convergence_bound: T must be positive");
  if (delta_series.size() != T) throw ValidationError("convergence_bound: need T delta values");
  const double mean = std::accumulate(delta_series.begin(), delta_series.end(), 0.0) /
                      static_cast<double>(T);
  return 8.0 * L * dist0_sq / static_cast<double>(T) + mean;
}

/// max_i ||grad f_i(theta) - grad f(theta)||^2 over the whole training set.
template <FiniteSumProblem P>
double gradient_deviation_sq(const P& problem, const Vector& theta) {
  const Vector full = full_gradient(problem, theta);
  Vector g(full.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < problem.sample_count(); ++i) {
    problem.loss_grad(i, theta, g);
    worst = std::max(worst, (g - full).squaredNorm());
  }
  return worst;
}

}  // namespace reweight

#endif  // REWEIGHT_DIAGNOSTICS_HPP
