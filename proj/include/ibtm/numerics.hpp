#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibtm/matrix.hpp"

namespace ibtm {

/// Strictly positive parameter vector of a Dirichlet (or Beta) distribution.
class PositiveVector {
 public:
  PositiveVector() = default;
  explicit PositiveVector(std::vector<double> values) : values_(std::move(values)) { validate(); }
  PositiveVector(std::size_t n, double fill) : values_(n, fill) { validate(); }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  double sum() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0.0); }

  bool operator==(const PositiveVector&) const = default;

 private:
  void validate() const {
    if (values_.empty()) throw std::domain_error("PositiveVector: empty");
    for (double v : values_) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::domain_error("PositiveVector: entry must be finite and > 0");
      }
    }
  }

  std::vector<double> values_;
};

/// Digamma function for x > 0.
///
/// Shifts x upward with psi(x) = psi(x + 1) - 1/x until x >= 6, then applies
/// the asymptotic expansion with six Bernoulli terms. The shift terms are
/// accumulated smallest-first so the dominant -1/x for tiny x is added last.
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error("digamma: argument must be finite and > 0, got " + std::to_string(x));
  }
  int shift = 0;
  double z = x;
  while (z < 10.0) {
    z += 1.0;
    ++shift;
  }
  const double inv = 1.0 / z;
  const double inv2 = inv * inv;
  // 1/12 - 1/120 z^-2 + 1/252 z^-4 - 1/240 z^-6 + 1/132 z^-8 - 691/32760 z^-10
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  double result = std::log(z) - 0.5 * inv - series;
  for (int j = shift - 1; j >= 0; --j) result -= 1.0 / (x + j);
  return result;
}

/// E[log X_i] under Dirichlet(params): psi(a_i) - psi(sum a).
inline std::vector<double> dirichlet_log_expectation(std::span<const double> params) {
  if (params.empty()) throw std::domain_error("dirichlet_log_expectation: empty parameters");
  const double total = std::accumulate(params.begin(), params.end(), 0.0);
  const double psi_total = digamma(total);
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i] = digamma(params[i]) - psi_total;
  return out;
}

inline std::vector<double> dirichlet_log_expectation(const PositiveVector& params) {
  return dirichlet_log_expectation(params.values());
}

/// Row-wise Dirichlet log expectation of a parameter matrix.
inline Matrix dirichlet_log_expectation_rows(const Matrix& params) {
  Matrix out(params.rows(), params.cols());
  for (std::size_t r = 0; r < params.rows(); ++r) {
    auto e = dirichlet_log_expectation(params.row(r));
    std::copy(e.begin(), e.end(), out.row(r).begin());
  }
  return out;
}

/// Softmax of log weights, in place. Subtracts the maximum before exponentiating.
inline void normalize_from_log_inplace(std::span<double> w) {
  if (w.empty()) throw std::domain_error("normalize_from_log: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : w) {
    if (!std::isfinite(v)) throw std::domain_error("normalize_from_log: non-finite input");
    mx = std::max(mx, v);
  }
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : w) v /= total;
}

inline std::vector<double> normalize_from_log(std::span<const double> log_weights) {
  std::vector<double> out(log_weights.begin(), log_weights.end());
  normalize_from_log_inplace(out);
  return out;
}

/// log B(a) = sum lgamma(a_i) - lgamma(sum a_i).
inline double log_multivariate_beta(std::span<const double> a) {
  double s = 0.0, lg = 0.0;
  for (double v : a) {
    s += v;
    lg += std::lgamma(v);
  }
  return lg - std::lgamma(s);
}

/// Symmetric version: K lgamma(a) - lgamma(K a).
inline double log_multivariate_beta(double a, std::size_t k) {
  const double kd = static_cast<double>(k);
  return kd * std::lgamma(a) - std::lgamma(kd * a);
}

}  // namespace ibtm
