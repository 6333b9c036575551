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

#ifndef REWEIGHT_OPTIM_HPP
#define REWEIGHT_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "reweight/diagnostics.hpp"
#include "reweight/errors.hpp"
#include "reweight/problems.hpp"
#include "reweight/reweight_core.hpp"

namespace reweight {

/// Losses above this, or non-finite, end a run as diverged.
inline constexpr double kDivergenceLoss = 1e12;

/**
 * Iterate of a (momentum-)SGD run. `z` is the auxiliary sequence of the
 * two-sequence heavy-ball form and starts equal to `theta`.
 */
struct OptimizerState {
  Vector theta;
  Vector z;
  std::uint64_t step = 0;
  double eta = 0.0;

  static OptimizerState init(Vector theta0, double eta) {
    OptimizerState s;
    s.z = theta0;
    s.theta = std::move(theta0);
    s.eta = eta;
    return s;
  }
};

struct StepSizeRule {
  enum class Kind { Fixed, ConvexTheory, SqrtHorizon };

  Kind kind = Kind::Fixed;
  double eta = 0.0;               // Fixed
  double L = 0.0;                 // theory modes; <= 0 means "take it from the problem"
  std::uint64_t horizon_T = 1;    // SqrtHorizon

  static StepSizeRule fixed(double eta) { return {Kind::Fixed, eta, 0.0, 1}; }
  static StepSizeRule convex_theory(double L = 0.0) { return {Kind::ConvexTheory, 0.0, L, 1}; }
  static StepSizeRule sqrt_horizon(std::uint64_t T, double L = 0.0) {
    return {Kind::SqrtHorizon, 0.0, L, T};
  }

  StepSizeRule with_smoothness(double fallback_L) const {
    StepSizeRule r = *this;
    if (r.kind != Kind::Fixed && !(r.L > 0.0)) r.L = fallback_L;
    return r;
  }

  /// 1/(8L) or 1/(8L sqrt(T)); `eta` for Fixed.
  double base_eta() const {
    switch (kind) {
      case Kind::Fixed:
        if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("lr must be a finite positive real");
        return eta;
      case Kind::ConvexTheory:
        if (!(L > 0.0)) throw ConfigError("smoothness L must be positive");
        return 1.0 / (8.0 * L);
      case Kind::SqrtHorizon:
        if (!(L > 0.0)) throw ConfigError("smoothness L must be positive");
        if (horizon_T == 0) throw ConfigError("horizon_T must be positive");
        return 1.0 / (8.0 * L * std::sqrt(static_cast<double>(horizon_T)));
    }
    throw ConfigError("unknown step-size rule");
  }
};

inline std::string_view to_string(StepSizeRule::Kind k) {
  switch (k) {
    case StepSizeRule::Kind::Fixed: return "fixed";
    case StepSizeRule::Kind::ConvexTheory: return "convex_theory";
    case StepSizeRule::Kind::SqrtHorizon: return "sqrt_horizon";
  }
  return "?";
}

/**
 * Step size from a theory rule for a batch of `batch_or_M` samples whose
 * largest weight is `w_max`.
 *
 * Under ConvexTheory the fixed step 1/(8L) meets eta <= 1/(4 M L w_max) only
 * when w_max <= 2/M; larger weights are a contract violation.
 */
inline double theory_stepsize(const StepSizeRule& rule, double w_max, std::size_t batch_or_M) {
  if (batch_or_M == 0) throw ConfigError("sample count must be positive");
  const double eta = rule.base_eta();
  if (rule.kind == StepSizeRule::Kind::ConvexTheory) {
    const double M = static_cast<double>(batch_or_M);
    if (w_max > 2.0 / M * (1.0 + 1e-12))
      throw ContractViolation("max weight " + std::to_string(w_max) + " exceeds 2/M = " +
                              std::to_string(2.0 / M));
    const double limit = 1.0 / (4.0 * M * rule.L * w_max);
    if (eta > limit * (1.0 + 1e-12))
      throw ContractViolation("step size exceeds 1/(4 M L w_max)");
  }
  return eta;
}

/// sum_i w_i g_i for gradients stored as the columns of `grads`.
inline Vector weighted_gradient(const Matrix& grads, const WeightVector& weights) {
  if (static_cast<std::size_t>(grads.cols()) != weights.size())
    throw ValidationError("gradient count " + std::to_string(grads.cols()) +
                          " does not match weight count " + std::to_string(weights.size()));
  const Eigen::Map<const Vector> w(weights.values.data(), static_cast<Eigen::Index>(weights.size()));
  return grads * w;
}

namespace detail {

inline void check_dims(const OptimizerState& s, const Matrix& grads) {
  if (grads.rows() != s.theta.size())
    throw ValidationError("gradient dimension " + std::to_string(grads.rows()) +
                          " does not match parameter dimension " + std::to_string(s.theta.size()));
}

inline void check_finite(const Vector& v, std::uint64_t step) {
  if (!v.allFinite()) throw DivergenceError(step, "non-finite parameters after update");
}

}  // namespace detail

/// theta' = theta - eta sum_i w_i g_i.
inline OptimizerState gd_step(const OptimizerState& state, const Matrix& grads,
                              const WeightVector& weights) {
  detail::check_dims(state, grads);
  OptimizerState next = state;
  next.theta = state.theta - state.eta * weighted_gradient(grads, weights);
  next.z = next.theta;
  next.step = state.step + 1;
  detail::check_finite(next.theta, state.step);
  return next;
}

/**
 * Two-sequence heavy ball:
 *   z'     = z - eta sum_i w_i g_i
 *   theta' = lambda/(1+lambda) theta + 1/(1+lambda) z'
 * with lambda = lambda_{t+1}, (t+1)/2 by default.
 */
inline OptimizerState momentum_step(const OptimizerState& state, const Matrix& grads,
                                    const WeightVector& weights, double lambda_next) {
  detail::check_dims(state, grads);
  if (state.z.size() != state.theta.size()) throw ValidationError("momentum state is not initialized");
  if (!(lambda_next >= 0.0)) throw ConfigError("lambda must be nonnegative");
  OptimizerState next = state;
  next.z = state.z - state.eta * weighted_gradient(grads, weights);
  next.theta = (lambda_next / (1.0 + lambda_next)) * state.theta + (1.0 / (1.0 + lambda_next)) * next.z;
  next.step = state.step + 1;
  detail::check_finite(next.z, state.step);
  detail::check_finite(next.theta, state.step);
  return next;
}

inline double default_lambda(std::uint64_t t) { return 0.5 * static_cast<double>(t); }

/// Seeded minibatch sampler: without replacement within an epoch, reshuffled every epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t population, std::size_t batch_size, std::uint64_t seed)
      : order_(population), batch_(batch_size), rng_(seed) {
    if (batch_size == 0 || batch_size > population)
      throw ConfigError("batch_size must be in [1, dataset size]");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ + batch_ > order_.size()) reshuffle();
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

 private:
  void reshuffle() {
    // Full batches keep the natural order.
    if (batch_ < order_.size()) std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

struct TrainingOptions {
  std::size_t batch_size = 32;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  bool momentum = false;
  bool record_thetas = false;
  bool record_weights = false;
};

enum class RunStatus { Converged, Diverged, Unstable, Stalled };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Unstable: return "unstable";
    case RunStatus::Stalled: return "stalled";
  }
  return "?";
}

struct Trajectory {
  std::vector<StepDiagnostics> rows;
  std::vector<Vector> thetas;          // theta^0 .. theta^T when recorded
  std::vector<WeightVector> weights;   // per update step when recorded
  double eta = 0.0;
  bool diverged = false;
  std::optional<std::size_t> divergence_step;

  double initial_loss() const { return rows.front().train_loss; }
  double final_loss() const { return rows.back().train_loss; }

  /// Largest train loss relative to the initial one; infinite once diverged.
  double max_loss_ratio() const {
    double worst = 0.0;
    for (const auto& r : rows) {
      if (!std::isfinite(r.train_loss)) return INFINITY;
      worst = std::max(worst, r.train_loss);
    }
    return worst / initial_loss();
  }

  /**
   * Diverged: terminated by the divergence guard. Unstable: finished but the
   * loss exceeded 10x its initial value. Stalled: final loss not below the
   * initial one.
   */
  RunStatus status() const {
    if (diverged) return RunStatus::Diverged;
    if (max_loss_ratio() > 10.0) return RunStatus::Unstable;
    if (rows.size() > 1 && !(final_loss() < initial_loss())) return RunStatus::Stalled;
    return RunStatus::Converged;
  }
};

/**
 * Fully online instance reweighting: sample a batch, evaluate per-sample
 * losses, weight them, and take a weighted (momentum-)SGD step.
 *
 * Row t of the trajectory describes theta^t and the batch used to leave it;
 * the last row (t = steps) carries only the evaluation of the final iterate.
 * A non-finite or huge loss stops the run and is recorded, not thrown.
 */
template <FiniteSumProblem P>
Trajectory run_training(const P& problem, const ReweightConfig& config, const StepSizeRule& stepsize,
                        const TrainingOptions& opts) {
  const std::size_t b = opts.batch_size;
  if (b == 0 || b > problem.sample_count())
    throw ConfigError("batch_size must be in [1, " + std::to_string(problem.sample_count()) + "]");
  config.validate(b);
  const StepSizeRule rule = stepsize.with_smoothness(problem.smoothness());

  Trajectory traj;
  traj.eta = rule.base_eta();
  OptimizerState state = OptimizerState::init(problem.initial_theta(), traj.eta);
  Vector theta_prev = state.theta;
  EpochSampler sampler(problem.sample_count(), b, opts.seed);
  const std::optional<Vector> theta_star = problem.theta_star();
  const bool known_optimum = problem.optimal_loss(0).has_value();

  struct BatchRecord {
    std::vector<std::size_t> idx;
    std::vector<double> losses;
    WeightVector w;
  };
  std::vector<BatchRecord> batches;

  const auto d = static_cast<Eigen::Index>(problem.dim());
  Matrix grads(d, static_cast<Eigen::Index>(b));
  Vector g(d);
  std::vector<double> losses(b), prev_losses(b), opt_losses(b), gnorm(b);

  for (std::size_t t = 0;; ++t) {
    StepDiagnostics row;
    row.step = t;
    row.train_loss = full_loss(problem, state.theta);
    row.test_loss = problem.test_loss(state.theta);
    if (theta_star) row.theta_dist_sq = (state.theta - *theta_star).squaredNorm();
    if (opts.record_thetas) traj.thetas.push_back(state.theta);

    if (!std::isfinite(row.train_loss) || row.train_loss > kDivergenceLoss) {
      traj.diverged = true;
      traj.divergence_step = t;
      traj.rows.push_back(row);
      break;
    }
    if (t == opts.steps) {
      traj.rows.push_back(row);
      break;
    }

    const std::vector<std::size_t> idx = sampler.next();
    for (std::size_t k = 0; k < b; ++k) {
      losses[k] = problem.loss_grad(idx[k], state.theta, g);
      grads.col(static_cast<Eigen::Index>(k)) = g;
      gnorm[k] = g.squaredNorm();
    }
    const WeightVector w = compute_batch_weights(losses, config, t);

    row.batch_loss_mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(b);
    if (config.strategy != Strategy::Uniform) row.r_value = schedule_r(t, config.schedule);
    row.w_max = w.max();
    row.w_min = w.min();
    row.grad_gap = grad_gap_term(gnorm, w);
    if (known_optimum) {
      for (std::size_t k = 0; k < b; ++k) opt_losses[k] = *problem.optimal_loss(idx[k]);
      row.delta_t = delta_t(losses, opt_losses, w);
    }
    if (t > 0) {
      for (std::size_t k = 0; k < b; ++k) prev_losses[k] = problem.loss(idx[k], theta_prev);
      row.mu_t = mu_t(losses, prev_losses, w);
    }
    if (!known_optimum) batches.push_back({idx, losses, w});
    if (opts.record_weights) traj.weights.push_back(w);
    traj.rows.push_back(row);

    theta_prev = state.theta;
    try {
      state = opts.momentum ? momentum_step(state, grads, w, default_lambda(t + 1))
                            : gd_step(state, grads, w);
    } catch (const DivergenceError& e) {
      traj.diverged = true;
      traj.divergence_step = t + 1;
      StepDiagnostics last;
      last.step = t + 1;
      last.train_loss = NAN;
      traj.rows.push_back(last);
      break;
    }
  }

  // Proxy delta_t against the final iterate when f_i(theta*) is unknown.
  if (!known_optimum && !traj.diverged) {
    const Vector& final_theta = state.theta;
    std::vector<double> ref;
    for (std::size_t t = 0; t < batches.size(); ++t) {
      const auto& rec = batches[t];
      ref.resize(rec.idx.size());
      for (std::size_t k = 0; k < rec.idx.size(); ++k) ref[k] = problem.loss(rec.idx[k], final_theta);
      traj.rows[t].delta_t_proxy = delta_t(rec.losses, ref, rec.w);
    }
  }
  return traj;
}

}  // namespace reweight

#endif  // REWEIGHT_OPTIM_HPP
