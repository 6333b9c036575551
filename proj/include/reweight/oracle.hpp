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

// Brute-force references for the production code paths. Nothing here is used
// by the training loop; the point is to reach the same answers another way.

#ifndef REWEIGHT_ORACLE_HPP
#define REWEIGHT_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "reweight/errors.hpp"
#include "reweight/problems.hpp"
#include "reweight/reweight_core.hpp"

namespace reweight::oracle {

/// -sum_i w_i gap_i + r sum_i w_i log w_i, with 0 log 0 = 0.
inline double kl_objective(std::span<const double> gaps, std::span<const double> w, double r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc -= w[i] * gaps[i];
    if (w[i] > 0.0) acc += r * w[i] * std::log(w[i]);
  }
  return acc;
}

/**
 * Projection of y onto {lo_i <= v_i <= cap, sum v = 1} in the metric
 * diag(1/scale): v_i = clip(y_i + nu * scale_i, lo_i, cap), with nu found by
 * bisection. With unit scale and zero lower bounds this is the usual
 * Euclidean capped-simplex projection.
 */
inline std::vector<double> project_capped_simplex(std::span<const double> y,
                                                  std::span<const double> scale, double cap,
                                                  std::span<const double> lower = {}) {
  const std::size_t b = y.size();
  std::vector<double> v(b);
  auto fill = [&](double nu) {
    double s = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      v[i] = std::clamp(y[i] + nu * scale[i], lower.empty() ? 0.0 : lower[i], cap);
      s += v[i];
    }
    return s;
  };
  double nu_lo = -1.0, nu_hi = 1.0;
  while (fill(nu_lo) > 1.0) nu_lo *= 2.0;
  while (fill(nu_hi) < 1.0) nu_hi *= 2.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (nu_lo + nu_hi);
    if (mid == nu_lo || mid == nu_hi) break;
    (fill(mid) < 1.0 ? nu_lo : nu_hi) = mid;
  }
  fill(0.5 * (nu_lo + nu_hi));
  return v;
}

/**
 * Minimize the KL-regularized objective over the capped simplex by projected
 * descent from the uniform point.
 *
 * The objective is separable, so its Hessian diag(r / w_i) is used as the
 * descent metric (a projected Newton step) with Armijo backtracking. Iterates
 * stay strictly positive so the entropy gradient is defined.
 */
inline WeightVector brute_force_optimal_weights(std::span<const double> gaps, double r, double cap,
                                                double objective_tol = 1e-9) {
  const std::size_t b = gaps.size();
  if (b == 0) throw ValidationError("empty gap vector");
  if (!(r > 0.0)) throw ConfigError("r must be positive");
  if (!(cap * static_cast<double>(b) >= 1.0 - 1e-12)) throw ConfigError("infeasible cap");

  std::vector<double> w(b, 1.0 / static_cast<double>(b));
  std::vector<double> grad(b), scale(b), y(b), lower(b), cand(b);
  double obj = kl_objective(gaps, w, r);

  // A coordinate may shrink by at most 10x per iteration so iterates stay
  // strictly positive. Near the optimum the box is inactive and the steps are
  // plain projected Newton steps.
  for (int iter = 0; iter < 10000; ++iter) {
    for (std::size_t i = 0; i < b; ++i) {
      grad[i] = -gaps[i] + r * (1.0 + std::log(w[i]));
      scale[i] = w[i] / r;
      lower[i] = std::max(0.1 * w[i], 1e-300);
    }
    double step = 1.0;
    double cand_obj = obj;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < b; ++i) y[i] = w[i] - step * scale[i] * grad[i];
      cand = project_capped_simplex(y, scale, cap, lower);
      cand_obj = kl_objective(gaps, cand, r);
      double decrease = 0.0;
      for (std::size_t i = 0; i < b; ++i) decrease += grad[i] * (cand[i] - w[i]);
      // Roundoff slack: steps that only refine tiny coordinates must be kept.
      if (cand_obj <= obj + 1e-4 * decrease + 1e-14 * (1.0 + std::abs(obj))) break;
      step *= 0.5;
    }
    double moved = 0.0;
    for (std::size_t i = 0; i < b; ++i) moved = std::max(moved, std::abs(cand[i] - w[i]) / w[i]);
    const double improvement = obj - cand_obj;
    w = cand;
    obj = cand_obj;
    if (moved < 1e-12 || (step < 1e-12 && improvement <= objective_tol)) break;
  }
  return WeightVector{std::move(w)};
}

/**
 * Stationarity residual of the capped KL problem at w: free coordinates must
 * share a common value of -gap_i + r (1 + log w_i); capped coordinates may
 * only sit below it.
 */
inline double kkt_residual(std::span<const double> gaps, const WeightVector& w, double r, double cap,
                           double cap_tol = 1e-9) {
  double lo = INFINITY, hi = -INFINITY;
  std::vector<double> capped;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = -gaps[i] + r * (1.0 + std::log(w[i]));
    if (w[i] >= cap - cap_tol) {
      capped.push_back(g);
    } else {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
  }
  if (lo > hi) return 0.0;  // everything at the cap
  double res = hi - lo;
  for (double g : capped) res = std::max(res, g - hi);
  return res;
}

/// Central differences: (f(theta + eps e_j) - f(theta - eps e_j)) / (2 eps).
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& loss_fn,
                               const Vector& theta, double epsilon = 1e-5) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  Vector g(theta.size());
  Vector probe = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    probe(j) = theta(j) + epsilon;
    const double up = loss_fn(probe);
    probe(j) = theta(j) - epsilon;
    const double down = loss_fn(probe);
    probe(j) = theta(j);
    g(j) = (up - down) / (2.0 * epsilon);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Vector& a, const Vector& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom < 1e-12) return (a - b).norm();
  return (a - b).norm() / denom;
}

}  // namespace reweight::oracle

#endif  // REWEIGHT_ORACLE_HPP
