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

#ifndef REWEIGHT_REWEIGHT_CORE_HPP
#define REWEIGHT_REWEIGHT_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reweight/errors.hpp"

namespace reweight {

/**
 * Weighting method applied to the per-sample losses of one minibatch.
 *
 * LinUpper, Quadratic and Extremes are score functions on normalized losses
 * followed by a tempered softmax. CappedOptimal is the KL-regularized optimum
 * with a per-sample cap, DroKl the uncapped softmax over raw losses.
 */
enum class Strategy { Uniform, LinUpper, Quadratic, Extremes, CappedOptimal, DroKl };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Uniform: return "uniform";
    case Strategy::LinUpper: return "linupper";
    case Strategy::Quadratic: return "quadratic";
    case Strategy::Extremes: return "extremes";
    case Strategy::CappedOptimal: return "capped";
    case Strategy::DroKl: return "dro_kl";
  }
  throw ConfigError("unknown strategy tag " + std::to_string(static_cast<int>(s)));
}

inline Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::Uniform, Strategy::LinUpper, Strategy::Quadratic,
                 Strategy::Extremes, Strategy::CappedOptimal, Strategy::DroKl}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

/// Losses mapped affinely into [-alpha, alpha].
struct NormalizedLosses {
  std::vector<double> values;
  double alpha = 1.0;
};

struct StrategyScores {
  std::vector<double> scores;
  Strategy strategy = Strategy::Uniform;
};

/// Nonnegative weights over a minibatch that sum to one.
struct WeightVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double max() const { return *std::max_element(values.begin(), values.end()); }
  double min() const { return *std::min_element(values.begin(), values.end()); }
  double sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

  static WeightVector uniform(std::size_t b) {
    return WeightVector{std::vector<double>(b, 1.0 / static_cast<double>(b))};
  }
};

struct TemperatureSchedule {
  enum class Kind { Constant, StepDrop };

  Kind kind = Kind::Constant;
  double r_initial = 1.0;
  double r_final = 1.0;
  std::uint64_t warmup_steps = 0;

  static TemperatureSchedule constant(double r) { return {Kind::Constant, r, r, 0}; }

  static TemperatureSchedule step_drop(double r_initial, double r_final,
                                       std::uint64_t warmup_steps) {
    return {Kind::StepDrop, r_initial, r_final, warmup_steps};
  }

  void validate() const {
    if (!(r_initial > 0.0) || !std::isfinite(r_initial))
      throw ConfigError("r_initial must be a finite positive real");
    if (kind == Kind::StepDrop && (!(r_final > 0.0) || !std::isfinite(r_final)))
      throw ConfigError("r_final must be a finite positive real");
  }
};

struct ReweightConfig {
  Strategy strategy = Strategy::Uniform;
  double alpha = 1.0;
  TemperatureSchedule schedule = TemperatureSchedule::constant(1.0);
  // Per-sample cap for CappedOptimal; 2/b when unset.
  std::optional<double> cap;

  double resolved_cap(std::size_t batch_size) const {
    return cap.value_or(2.0 / static_cast<double>(batch_size));
  }

  void validate(std::size_t batch_size) const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    schedule.validate();
    if (cap) {
      const double c = *cap;
      const double b = static_cast<double>(batch_size);
      if (!(c * b >= 1.0 - 1e-12) || c > 1.0)
        throw ConfigError("cap must satisfy 1/b <= cap <= 1");
    }
  }
};

namespace detail {

inline void require_finite(std::span<const double> losses) {
  if (losses.empty()) throw ValidationError("loss batch is empty");
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i]))
      throw ValidationError("non-finite loss at index " + std::to_string(i));
  }
}

inline void require_temperature(double r, const char* name) {
  if (!(r > 0.0) || !std::isfinite(r))
    throw ConfigError(std::string(name) + " must be a finite positive real");
}

}  // namespace detail

/**
 * Map a batch of raw losses into [-alpha, alpha].
 *
 * The batch minimum maps to -alpha and the maximum to +alpha. The range is
 * floored at 1e-6, so a batch of identical losses maps to all zeros.
 */
inline NormalizedLosses normalize_losses(std::span<const double> losses, double alpha = 1.0) {
  detail::require_finite(losses);
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(losses.begin(), losses.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double range = std::max(hi - lo, 1e-6);

  NormalizedLosses out{std::vector<double>(losses.size()), alpha};
  for (std::size_t i = 0; i < losses.size(); ++i) {
    // 2a f/d - a(hi+lo)/d, grouped to avoid cancellation for large losses.
    const double h = alpha * ((losses[i] - lo) + (losses[i] - hi)) / range;
    out.values[i] = std::clamp(h, -alpha, alpha);
  }
  return out;
}

inline StrategyScores apply_strategy(const NormalizedLosses& h, Strategy strategy) {
  const double a = h.alpha;
  StrategyScores out{std::vector<double>(h.values.size()), strategy};
  auto map = [&](auto fn) {
    std::transform(h.values.begin(), h.values.end(), out.scores.begin(), fn);
  };
  switch (strategy) {
    case Strategy::LinUpper:
      map([a](double v) { return std::min(v + a, a); });
      break;
    case Strategy::Quadratic:
      map([a](double v) { return a * (1.0 - v * v / (a * a)); });
      break;
    case Strategy::Extremes:
      map([](double v) { return std::abs(v); });
      break;
    case Strategy::Uniform:
      // Passed through; callers force exactly uniform weights.
      out.scores = h.values;
      break;
    default:
      throw ConfigError("strategy '" + std::string(to_string(strategy)) +
                        "' has no score function");
  }
  return out;
}

/// Softmax of scores / r, shifted by the maximum score.
inline WeightVector temper_weights(std::span<const double> scores, double r) {
  detail::require_temperature(r, "temperature r");
  detail::require_finite(scores);
  const double top = *std::max_element(scores.begin(), scores.end());
  WeightVector w{std::vector<double>(scores.size())};
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w.values[i] = std::exp((scores[i] - top) / r);
    z += w.values[i];
  }
  for (double& v : w.values) v /= z;
  return w;
}

inline WeightVector temper_weights(const StrategyScores& s, double r) {
  return temper_weights(std::span<const double>(s.scores), r);
}

/**
 * Minimizer of the KL-regularized weighted loss gap over the capped simplex.
 *
 * The solution has the form w_i = min{C exp(h_i / r), cap}. It is found by
 * water-filling: visit entries in decreasing order of h, pin the largest ones
 * at the cap while the softmax of the remaining mass would exceed it, and
 * distribute what is left proportionally to exp(h_i / r).
 */
inline WeightVector capped_optimal_weights(std::span<const double> h, double r, double cap) {
  detail::require_temperature(r, "temperature r");
  detail::require_finite(h);
  const std::size_t b = h.size();
  if (!(cap > 0.0) || !(cap * static_cast<double>(b) >= 1.0 - 1e-12))
    throw ConfigError("infeasible cap: cap * b must be at least 1");

  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return h[x] > h[y]; });

  WeightVector w{std::vector<double>(b, 0.0)};
  std::vector<double> mass(b);
  for (std::size_t pinned = 0; pinned <= b; ++pinned) {
    const double left = std::max(0.0, 1.0 - static_cast<double>(pinned) * cap);
    if (pinned == b || left <= 0.0) {
      for (std::size_t k = 0; k < pinned; ++k) w.values[order[k]] = cap;
      for (std::size_t k = pinned; k < b; ++k) w.values[order[k]] = 0.0;
      break;
    }
    // order[pinned] has the largest h among the free entries.
    const double top = h[order[pinned]];
    double z = 0.0;
    for (std::size_t k = pinned; k < b; ++k) {
      mass[k] = std::exp((h[order[k]] - top) / r);
      z += mass[k];
    }
    if (left * mass[pinned] / z <= cap) {
      for (std::size_t k = 0; k < pinned; ++k) w.values[order[k]] = cap;
      for (std::size_t k = pinned; k < b; ++k) w.values[order[k]] = left * mass[k] / z;
      break;
    }
  }
  return w;
}

inline WeightVector capped_optimal_weights(const NormalizedLosses& h, double r, double cap) {
  return capped_optimal_weights(std::span<const double>(h.values), r, cap);
}

/// KL-regularized DRO baseline: softmax of raw losses at temperature tau.
inline WeightVector dro_kl_weights(std::span<const double> losses, double tau) {
  detail::require_temperature(tau, "tau");
  return temper_weights(losses, tau);
}

inline double schedule_r(std::uint64_t step, const TemperatureSchedule& schedule) {
  if (schedule.kind == TemperatureSchedule::Kind::StepDrop && step >= schedule.warmup_steps)
    return schedule.r_final;
  return schedule.r_initial;
}

/// Loss batch to weights for one step of the training loop.
inline WeightVector compute_batch_weights(std::span<const double> losses,
                                          const ReweightConfig& config, std::uint64_t step) {
  detail::require_finite(losses);
  const std::size_t b = losses.size();
  config.validate(b);
  if (config.strategy == Strategy::Uniform) return WeightVector::uniform(b);

  const double r = schedule_r(step, config.schedule);
  if (config.strategy == Strategy::DroKl) return dro_kl_weights(losses, r);

  const NormalizedLosses h = normalize_losses(losses, config.alpha);
  if (config.strategy == Strategy::CappedOptimal)
    return capped_optimal_weights(h, r, config.resolved_cap(b));
  return temper_weights(apply_strategy(h, config.strategy), r);
}

}  // namespace reweight

#endif  // REWEIGHT_REWEIGHT_CORE_HPP
