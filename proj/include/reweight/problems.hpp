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

#ifndef REWEIGHT_PROBLEMS_HPP
#define REWEIGHT_PROBLEMS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reweight/errors.hpp"

namespace reweight {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/**
 * A finite-sum objective f = (1/M) sum_i f_i that the training loop can drive.
 *
 * `optimal_loss(i)` is f_i(theta*) when a common minimizer is known, and
 * `theta_star()` the reference point for distance tracking.
 */
template <typename P>
concept FiniteSumProblem = requires(const P& p, const Vector& theta, std::size_t i, Vector& g) {
  { p.sample_count() } -> std::convertible_to<std::size_t>;
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.loss(i, theta) } -> std::convertible_to<double>;
  { p.loss_grad(i, theta, g) } -> std::convertible_to<double>;
  { p.initial_theta() } -> std::convertible_to<Vector>;
  { p.smoothness() } -> std::convertible_to<double>;
  { p.test_loss(theta) } -> std::convertible_to<std::optional<double>>;
  { p.theta_star() } -> std::convertible_to<std::optional<Vector>>;
  { p.optimal_loss(i) } -> std::convertible_to<std::optional<double>>;
};

/// Mean per-sample loss over the whole training set.
template <FiniteSumProblem P>
double full_loss(const P& problem, const Vector& theta) {
  double acc = 0.0;
  for (std::size_t i = 0; i < problem.sample_count(); ++i) acc += problem.loss(i, theta);
  return acc / static_cast<double>(problem.sample_count());
}

template <FiniteSumProblem P>
Vector full_gradient(const P& problem, const Vector& theta) {
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(problem.dim()));
  Vector g(acc.size());
  for (std::size_t i = 0; i < problem.sample_count(); ++i) {
    problem.loss_grad(i, theta, g);
    acc += g;
  }
  return acc / static_cast<double>(problem.sample_count());
}

// ---------------------------------------------------------------------------
// Outlier regression

struct RegressionSpec {
  std::size_t p = 64;
  std::size_t n = 3200;
  std::size_t m = 800;
  double noise_c = 0.01;
  std::size_t test_size = 800;
};

/// Rows [0, n_clean) are clean, rows [n_clean, n_clean + m_outlier) are outliers.
struct RegressionDataset {
  Matrix X;
  Vector y;
  std::size_t n_clean = 0;
  std::size_t m_outlier = 0;
  Vector W_star;
  double b_star = 0.0;
  Matrix X_test;
  Vector y_test;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(X.cols()); }
  bool is_outlier(std::size_t row) const { return row >= n_clean; }
};

inline RegressionDataset gen_regression(const RegressionSpec& spec, std::uint64_t seed) {
  if (spec.p == 0 || spec.n == 0) throw ConfigError("regression needs p >= 1 and n >= 1");
  if (!(spec.noise_c >= 0.0)) throw ConfigError("noise_c must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(spec.p);
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto m = static_cast<Eigen::Index>(spec.m);
  const auto nt = static_cast<Eigen::Index>(spec.test_size);

  RegressionDataset ds;
  ds.n_clean = spec.n;
  ds.m_outlier = spec.m;
  ds.W_star.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) ds.W_star(j) = normal(rng);
  ds.b_star = normal(rng);

  auto clean_block = [&](Matrix& X, Vector& y, Eigen::Index rows, Eigen::Index offset) {
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < p; ++j) X(offset + i, j) = normal(rng);
    for (Eigen::Index i = 0; i < rows; ++i) {
      y(offset + i) = X.row(offset + i).dot(ds.W_star) + ds.b_star + spec.noise_c * normal(rng);
    }
  };

  ds.X.resize(n + m, p);
  ds.y.resize(n + m);
  clean_block(ds.X, ds.y, n, 0);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < p; ++j) ds.X(n + i, j) = 0.1 * normal(rng) + 2.0;
  for (Eigen::Index i = 0; i < m; ++i) ds.y(n + i) = normal(rng);

  ds.X_test.resize(nt, p);
  ds.y_test.resize(nt);
  clean_block(ds.X_test, ds.y_test, nt, 0);
  return ds;
}

/// Squared-error loss 0.5 r^2 with residual r = x.W + b - y; gradient is (r x, r).
inline LossGrad regression_loss_grad(const Vector& W, double b, const Vector& x, double y) {
  if (W.size() != x.size()) throw ValidationError("regression: W and x differ in length");
  const double r = x.dot(W) + b - y;
  LossGrad out;
  out.loss = 0.5 * r * r;
  out.grad.resize(W.size() + 1);
  out.grad.head(W.size()) = r * x;
  out.grad(W.size()) = r;
  return out;
}

/// Regression with the bias folded in as the last parameter coordinate.
class RegressionProblem {
 public:
  explicit RegressionProblem(RegressionDataset data) : data_(std::move(data)) {
    const Vector sq = data_.X.rowwise().squaredNorm();
    smoothness_ = (sq.size() > 0 ? sq.maxCoeff() : 0.0) + 1.0;
  }

  const RegressionDataset& data() const { return data_; }

  std::size_t sample_count() const { return data_.rows(); }
  std::size_t dim() const { return data_.features() + 1; }

  double residual(const Eigen::Ref<const Eigen::RowVectorXd>& x, double y,
                  const Vector& theta) const {
    const auto p = static_cast<Eigen::Index>(data_.features());
    return x.dot(theta.head(p)) + theta(p) - y;
  }

  double loss(std::size_t i, const Vector& theta) const {
    const double r = residual(data_.X.row(static_cast<Eigen::Index>(i)), data_.y(static_cast<Eigen::Index>(i)), theta);
    return 0.5 * r * r;
  }

  double loss_grad(std::size_t i, const Vector& theta, Vector& grad) const {
    const auto row = static_cast<Eigen::Index>(i);
    const auto p = static_cast<Eigen::Index>(data_.features());
    const double r = residual(data_.X.row(row), data_.y(row), theta);
    grad.resize(p + 1);
    grad.head(p) = r * data_.X.row(row).transpose();
    grad(p) = r;
    return 0.5 * r * r;
  }

  Vector initial_theta() const { return Vector::Zero(static_cast<Eigen::Index>(dim())); }

  /// L = max_i ||x_i||^2 + 1 over the training rows.
  double smoothness() const { return smoothness_; }

  std::optional<double> test_loss(const Vector& theta) const {
    if (data_.X_test.rows() == 0) return std::nullopt;
    const auto p = static_cast<Eigen::Index>(data_.features());
    const Vector r = (data_.X_test * theta.head(p)).array() + theta(p) - data_.y_test.array();
    return 0.5 * r.squaredNorm() / static_cast<double>(r.size());
  }

  /// The generating parameters (W*, b*); not a minimizer once outliers are present.
  std::optional<Vector> theta_star() const {
    Vector t(static_cast<Eigen::Index>(dim()));
    t << data_.W_star, data_.b_star;
    return t;
  }

  std::optional<double> optimal_loss(std::size_t) const { return std::nullopt; }

 private:
  RegressionDataset data_;
  double smoothness_ = 0.0;
};

namespace detail {

inline void write_double(std::ostream& os, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ValidationError("bad number '" + std::string(s) + "' on line " + std::to_string(line));
  return v;
}

}  // namespace detail

/// Training rows as CSV: x_0..x_{p-1},y,is_outlier. Shortest round-trip number format.
inline void write_dataset_csv(std::ostream& os, const RegressionDataset& ds) {
  const std::size_t p = ds.features();
  for (std::size_t j = 0; j < p; ++j) os << 'x' << '_' << j << ',';
  os << "y,is_outlier\r\n";
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < p; ++j) {
      detail::write_double(os, ds.X(row, static_cast<Eigen::Index>(j)));
      os << ',';
    }
    detail::write_double(os, ds.y(row));
    os << ',' << (ds.is_outlier(i) ? 1 : 0) << "\r\n";
  }
}

/**
 * Read back a dataset written by write_dataset_csv. Only the training block is
 * recovered; generating parameters and the test split are left empty. Outlier
 * rows must follow all clean rows.
 */
inline RegressionDataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3) throw ValidationError("dataset CSV needs at least x_0,y,is_outlier");
  const std::size_t p = columns - 2;

  std::vector<double> values;
  std::vector<int> outlier;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t start = 0;
    std::size_t col = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start,
                                  (comma == std::string::npos ? line.size() : comma) - start);
      if (col < p + 1) {
        values.push_back(detail::parse_double(cell, lineno));
      } else if (col == p + 1) {
        if (cell != "0" && cell != "1")
          throw ValidationError("is_outlier must be 0 or 1 on line " + std::to_string(lineno));
        outlier.push_back(cell == "1");
      }
      ++col;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (col != columns)
      throw ValidationError("wrong column count on line " + std::to_string(lineno));
  }

  const std::size_t rows = outlier.size();
  RegressionDataset ds;
  ds.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  ds.y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < p; ++j)
      ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * (p + 1) + j];
    ds.y(static_cast<Eigen::Index>(i)) = values[i * (p + 1) + p];
  }
  ds.n_clean = static_cast<std::size_t>(std::find(outlier.begin(), outlier.end(), 1) - outlier.begin());
  if (std::find(outlier.begin() + static_cast<std::ptrdiff_t>(ds.n_clean), outlier.end(), 0) != outlier.end())
    throw ValidationError("outlier rows must follow all clean rows");
  ds.m_outlier = rows - ds.n_clean;
  return ds;
}

// ---------------------------------------------------------------------------
// Interpolating quadratics: f_i(theta) = 0.5 (theta - theta*)^T A_i (theta - theta*)

struct QuadraticSuite {
  std::vector<Matrix> A;
  std::vector<double> L;  // largest eigenvalue of each A_i
  Vector theta_star;

  std::size_t count() const { return A.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(theta_star.size()); }
};

/// A_i = Q_i D_i Q_i^T, Q_i Haar-orthogonal, eig(D_i) log-uniform in [1, cond_max].
inline QuadraticSuite gen_quadratic_suite(std::size_t M, std::size_t d, double cond_max,
                                          std::uint64_t seed) {
  if (M == 0 || d == 0) throw ConfigError("quadratic suite needs M >= 1 and d >= 1");
  if (!(cond_max >= 1.0)) throw ConfigError("cond_max must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(d);

  QuadraticSuite suite;
  suite.theta_star.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) suite.theta_star(j) = normal(rng);

  const double log_cond = std::log(cond_max);
  for (std::size_t i = 0; i < M; ++i) {
    Matrix G(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) G(r, c) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ();
    // Sign fix makes Q Haar distributed.
    const Vector diag = qr.matrixQR().diagonal();
    for (Eigen::Index c = 0; c < n; ++c)
      if (diag(c) < 0.0) Q.col(c) = -Q.col(c);

    Vector eig(n);
    for (Eigen::Index j = 0; j < n; ++j) eig(j) = std::exp(log_cond * unit(rng));
    Matrix A = Q * eig.asDiagonal() * Q.transpose();
    A = (0.5 * (A + A.transpose())).eval();  // eval: the transpose aliases A
    suite.A.push_back(std::move(A));
    suite.L.push_back(eig.maxCoeff());
  }
  return suite;
}

class QuadraticProblem {
 public:
  explicit QuadraticProblem(QuadraticSuite suite, std::optional<Vector> theta0 = std::nullopt)
      : suite_(std::move(suite)) {
    theta0_ = theta0 ? *theta0 : Vector::Zero(suite_.theta_star.size());
    if (theta0_.size() != suite_.theta_star.size())
      throw ValidationError("initial point has the wrong dimension");
  }

  const QuadraticSuite& suite() const { return suite_; }

  std::size_t sample_count() const { return suite_.count(); }
  std::size_t dim() const { return suite_.dim(); }

  double loss(std::size_t i, const Vector& theta) const {
    const Vector e = theta - suite_.theta_star;
    return 0.5 * e.dot(suite_.A[i] * e);
  }

  double loss_grad(std::size_t i, const Vector& theta, Vector& grad) const {
    const Vector e = theta - suite_.theta_star;
    grad = suite_.A[i] * e;
    return 0.5 * e.dot(grad);
  }

  Vector initial_theta() const { return theta0_; }
  double smoothness() const { return *std::max_element(suite_.L.begin(), suite_.L.end()); }
  std::optional<double> test_loss(const Vector&) const { return std::nullopt; }
  std::optional<Vector> theta_star() const { return suite_.theta_star; }
  std::optional<double> optimal_loss(std::size_t) const { return 0.0; }

 private:
  QuadraticSuite suite_;
  Vector theta0_;
};

// ---------------------------------------------------------------------------
// Bounded non-convex per-sample loss f_i = 1 - exp(-(x_i.theta - y_i)^2)

inline LossGrad nonconvex_loss_grad(const Vector& theta, const Vector& x, double y) {
  if (theta.size() != x.size()) throw ValidationError("nonconvex: theta and x differ in length");
  const double r = x.dot(theta) - y;
  const double e = std::exp(-r * r);
  return LossGrad{1.0 - e, 2.0 * r * e * x};
}

struct NonconvexDataset {
  Matrix X;
  Vector y;
};

/// x_i standard normal, y_i = x_i.theta_true + noise_c * eps.
inline NonconvexDataset gen_nonconvex(std::size_t M, std::size_t d, double noise_c,
                                      std::uint64_t seed) {
  if (M == 0 || d == 0) throw ConfigError("nonconvex problem needs M >= 1 and d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(d);
  Vector truth(n);
  for (Eigen::Index j = 0; j < n; ++j) truth(j) = normal(rng);
  NonconvexDataset ds{Matrix(static_cast<Eigen::Index>(M), n), Vector(static_cast<Eigen::Index>(M))};
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i)
    for (Eigen::Index j = 0; j < n; ++j) ds.X(i, j) = normal(rng);
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i)
    ds.y(i) = ds.X.row(i).dot(truth) + noise_c * normal(rng);
  return ds;
}

class NonconvexProblem {
 public:
  explicit NonconvexProblem(NonconvexDataset data) : data_(std::move(data)) {
    // |d^2/dr^2 (1 - e^{-r^2})| <= 2, so L_i = 2 ||x_i||^2.
    smoothness_ = 2.0 * data_.X.rowwise().squaredNorm().maxCoeff();
  }

  std::size_t sample_count() const { return static_cast<std::size_t>(data_.X.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.X.cols()); }

  double loss(std::size_t i, const Vector& theta) const {
    const auto row = static_cast<Eigen::Index>(i);
    const double r = data_.X.row(row).dot(theta) - data_.y(row);
    return 1.0 - std::exp(-r * r);
  }

  double loss_grad(std::size_t i, const Vector& theta, Vector& grad) const {
    const auto row = static_cast<Eigen::Index>(i);
    const double r = data_.X.row(row).dot(theta) - data_.y(row);
    const double e = std::exp(-r * r);
    grad = (2.0 * r * e) * data_.X.row(row).transpose();
    return 1.0 - e;
  }

  Vector initial_theta() const { return Vector::Zero(data_.X.cols()); }
  double smoothness() const { return smoothness_; }
  std::optional<double> test_loss(const Vector&) const { return std::nullopt; }
  std::optional<Vector> theta_star() const { return std::nullopt; }
  std::optional<double> optimal_loss(std::size_t) const { return std::nullopt; }

 private:
  NonconvexDataset data_;
  double smoothness_ = 0.0;
};

}  // namespace reweight

#endif  // REWEIGHT_PROBLEMS_HPP
