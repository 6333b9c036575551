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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "reweight/oracle.hpp"

namespace reweight {
namespace {

TEST(ProjectCappedSimplex, Properties) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t b = 2 + k % 20;
    std::vector<double> y(b), scale(b, 1.0);
    for (auto& v : y) v = normal(rng);
    const double cap = 2.0 / static_cast<double>(b);
    const auto v = oracle::project_capped_simplex(y, scale, cap);
    double s = 0.0;
    for (double x : v) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, cap);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Points already feasible are fixed.
  const std::vector<double> p{0.2, 0.3, 0.5}, one(3, 1.0);
  const auto q = oracle::project_capped_simplex(p, one, 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], p[i], 1e-14);
}

TEST(BruteForceWeights, EqualGapsGiveUniform) {
  const std::vector<double> g(5, 0.4);
  for (double v : oracle::brute_force_optimal_weights(g, 0.5, 0.4).values) EXPECT_NEAR(v, 0.2, 1e-12);
}

TEST(BruteForceWeights, AgreesWithWaterFilling) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> bd(2, 8);
  std::uniform_real_distribution<double> u(-1.0, 1.0), rd(0.1, 10.0);
  for (int k = 0; k < 200; ++k) {
    const std::size_t b = bd(rng);
    std::vector<double> g(b);
    for (auto& v : g) v = u(rng);
    const double r = rd(rng), cap = 2.0 / static_cast<double>(b);
    const WeightVector slow = oracle::brute_force_optimal_weights(g, r, cap);
    const WeightVector fast = capped_optimal_weights(g, r, cap);
    for (std::size_t i = 0; i < b; ++i) EXPECT_NEAR(slow[i], fast[i], 1e-6);
    EXPECT_LE(oracle::kkt_residual(g, slow, r, cap), 1e-6);
    EXPECT_LE(oracle::kl_objective(g, slow.values, r), oracle::kl_objective(g, fast.values, r) + 1e-9);
  }
}

TEST(BruteForceWeights, UnregularizedLimit) {
  const std::vector<double> g{0.3, -0.2, 0.9, 0.1};
  const WeightVector w = oracle::brute_force_optimal_weights(g, 1e-6, 0.5);
  EXPECT_NEAR(w[0], 0.5, 1e-3);
  EXPECT_NEAR(w[2], 0.5, 1e-3);
  EXPECT_NEAR(w[1], 0.0, 1e-3);
  EXPECT_NEAR(w[3], 0.0, 1e-3);
}

TEST(BruteForceWeights, RejectsInfeasibleCap) {
  const std::vector<double> g{0.0, 1.0, 2.0};
  EXPECT_THROW(oracle::brute_force_optimal_weights(g, 1.0, 0.2), ConfigError);
  EXPECT_THROW(oracle::brute_force_optimal_weights(g, 0.0, 0.5), ConfigError);
}

TEST(KktResidual, DetectsNonOptimalPoints) {
  const std::vector<double> g{0.0, 1.0, 2.0};
  EXPECT_GT(oracle::kkt_residual(g, WeightVector::uniform(3), 1.0, 1.0), 0.5);
  EXPECT_LT(oracle::kkt_residual(g, capped_optimal_weights(g, 1.0, 1.0), 1.0, 1.0), 1e-12);
}

TEST(FiniteDiffGrad, QuadraticExample) {
  const Vector e1 = Vector::Unit(3, 0);
  const Vector g = oracle::finite_diff_grad([](const Vector& t) { return t.dot(t); }, e1, 1e-5);
  EXPECT_LT((g - 2.0 * e1).norm(), 1e-8);
  EXPECT_THROW(oracle::finite_diff_grad([](const Vector& t) { return t.sum(); }, e1, 0.0), ConfigError);
}

TEST(RelativeError, Basics) {
  EXPECT_EQ(oracle::relative_error(Vector::Zero(2), Vector::Zero(2)), 0.0);
  EXPECT_DOUBLE_EQ(oracle::relative_error(Vector::Constant(1, 2.0), Vector::Constant(1, 1.0)), 0.5);
}

}  // namespace
}  // namespace reweight
