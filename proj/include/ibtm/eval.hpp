#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "ibtm/assignment.hpp"
#include "ibtm/matrix.hpp"
#include "ibtm/numerics.hpp"

namespace ibtm {

// ---------------------------------------------------------------------------
// Topic matching

/// Alignment of estimated topics to true topics: permutation[i] is the
/// estimated row matched to true row i, tv[i] the total-variation distance
/// of that pair.
struct TopicMatch {
  std::vector<std::size_t> permutation;
  std::vector<double> tv;

  double mean_tv() const {
    if (tv.empty()) return 0.0;
    return std::accumulate(tv.begin(), tv.end(), 0.0) / static_cast<double>(tv.size());
  }
};

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

/// Each row divided by its sum.
inline Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= s;
  }
  return out;
}

/// Optimal permutation of estimated rows onto true rows under summed TV.
inline TopicMatch match_topics(const Matrix& truth, const Matrix& estimated) {
  require_same_shape(truth, estimated, "match_topics");
  for (const Matrix* m : {&truth, &estimated}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      const auto row = m->row(r);
      if (std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) > 1e-6) {
        throw std::domain_error("match_topics: rows must sum to 1");
      }
    }
  }
  const std::size_t n = truth.rows();
  Matrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = total_variation(truth.row(i), estimated.row(j));
  }
  TopicMatch match;
  match.permutation = solve_assignment(cost);
  match.tv.resize(n);
  for (std::size_t i = 0; i < n; ++i) match.tv[i] = cost(i, match.permutation[i]);
  return match;
}

// ---------------------------------------------------------------------------
// Partition recovery

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::domain_error("pearson_correlation: need two equal-length series of length >= 2");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::domain_error("pearson_correlation: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Correlation between true partition values and their estimates r_1 / (r_1 + r_2).
inline double partition_recovery_corr(std::span<const double> truth, std::span<const double> estimated) {
  return pearson_correlation(truth, estimated);
}

// ---------------------------------------------------------------------------
// Softmax regression on topic representations

struct SoftmaxOptions {
  double l2 = 1e-3;
  std::size_t iters = 500;
  double step = 1.0;
};

/// Multiclass logistic regression; weights is classes x (features + 1) with
/// the bias in the last column.
struct Classifier {
  Matrix weights;
  SoftmaxOptions options;
  std::vector<double> loss_trace;

  std::size_t num_classes() const noexcept { return weights.rows(); }
  std::size_t num_features() const noexcept { return weights.cols() == 0 ? 0 : weights.cols() - 1; }
};

inline std::vector<double> softmax_scores(const Matrix& weights, std::span<const double> x) {
  const std::size_t F = weights.cols() - 1;
  std::vector<double> s(weights.rows());
  for (std::size_t c = 0; c < weights.rows(); ++c) {
    const auto w = weights.row(c);
    double acc = w[F];
    for (std::size_t j = 0; j < F; ++j) acc += w[j] * x[j];
    s[c] = acc;
  }
  return s;
}

/// Mean cross-entropy plus (l2 / 2) * ||W||^2 over the non-bias weights.
/// Writes the gradient into `grad` when it is non-null.
inline double softmax_loss(const Matrix& weights, std::span<const std::vector<double>> features,
                           std::span<const int> labels, double l2, Matrix* grad = nullptr) {
  const std::size_t C = weights.rows();
  const std::size_t F = weights.cols() - 1;
  const double n = static_cast<double>(features.size());
  if (grad != nullptr) *grad = Matrix(C, F + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto p = softmax_scores(weights, features[i]);
    const double score_y = p[static_cast<std::size_t>(labels[i])];
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (double s : p) z += std::exp(s - mx);
    loss += (mx + std::log(z)) - score_y;
    if (grad == nullptr) continue;
    normalize_from_log_inplace(p);
    p[static_cast<std::size_t>(labels[i])] -= 1.0;
    for (std::size_t c = 0; c < C; ++c) {
      auto g = grad->row(c);
      for (std::size_t j = 0; j < F; ++j) g[j] += p[c] * features[i][j] / n;
      g[F] += p[c] / n;
    }
  }
  loss /= n;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t j = 0; j < F; ++j) {
      const double w = weights(c, j);
      loss += 0.5 * l2 * w * w;
      if (grad != nullptr) (*grad)(c, j) += l2 * w;
    }
  }
  return loss;
}

/// Full-batch gradient descent from zero weights. A step that would raise
/// the loss is rejected and the step size halved, so the loss trace is
/// nonincreasing.
inline Classifier train_softmax(std::span<const std::vector<double>> features, std::span<const int> labels,
                                const SoftmaxOptions& options = {}) {
  if (features.empty() || features.size() != labels.size()) {
    throw std::domain_error("train_softmax: need one label per feature vector");
  }
  const std::size_t F = features.front().size();
  for (const auto& f : features) {
    if (f.size() != F) throw std::domain_error("train_softmax: feature lengths differ");
  }
  int max_label = -1;
  std::vector<bool> seen;
  for (int y : labels) {
    if (y < 0) throw std::domain_error("train_softmax: labels must be >= 0");
    max_label = std::max(max_label, y);
    if (seen.size() <= static_cast<std::size_t>(y)) seen.resize(static_cast<std::size_t>(y) + 1, false);
    seen[static_cast<std::size_t>(y)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw std::domain_error("train_softmax: at least two classes required");
  }

  Classifier clf;
  clf.options = options;
  clf.weights = Matrix(static_cast<std::size_t>(max_label) + 1, F + 1, 0.0);
  double step = options.step;
  Matrix grad;
  double loss = softmax_loss(clf.weights, features, labels, options.l2, &grad);
  clf.loss_trace.push_back(loss);
  for (std::size_t it = 0; it < options.iters; ++it) {
    bool accepted = false;
    for (int halvings = 0; halvings < 60 && !accepted; ++halvings) {
      Matrix trial = clf.weights;
      auto t = trial.data();
      const auto g = grad.data();
      for (std::size_t i = 0; i < t.size(); ++i) t[i] -= step * g[i];
      const double trial_loss = softmax_loss(trial, features, labels, options.l2);
      if (trial_loss <= loss) {
        clf.weights = std::move(trial);
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
    loss = softmax_loss(clf.weights, features, labels, options.l2, &grad);
    clf.loss_trace.push_back(loss);
  }
  return clf;
}

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// Ties go to the lowest class id.
inline Prediction predict_softmax(const Classifier& clf, std::span<const double> feature) {
  if (feature.size() != clf.num_features()) throw std::domain_error("predict_softmax: feature length mismatch");
  Prediction p;
  p.probabilities = softmax_scores(clf.weights, feature);
  normalize_from_log_inplace(p.probabilities);
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.probabilities.size(); ++c) {
    if (p.probabilities[c] > p.probabilities[best]) best = c;
  }
  p.label = static_cast<int>(best);
  return p;
}

inline double accuracy(const Classifier& clf, std::span<const std::vector<double>> features,
                       std::span<const int> labels) {
  if (features.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (predict_softmax(clf, features[i]).label == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, a seeded shuffle; the first ceil(n/2) members go to training.
/// Both index lists come back sorted.
inline Split stratified_split(std::span<const int> labels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  Split split;
  for (int c : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_train = (members.size() + 1) / 2;
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
  std::vector<double> mean;
  Matrix components;                // dims x n_features, unit rows (zero rows past the rank)
  std::vector<double> eigenvalues;  // variance along each component
  Matrix projected;                 // n_samples x dims
};

/// Projects mean-centered data onto the leading eigenvectors of the sample
/// covariance. Eigenpairs come from power iteration with deflation; once the
/// remaining variance is numerically zero the leftover components are zero.
inline PcaResult pca_project(std::span<const std::vector<double>> data, std::size_t dims) {
  if (data.size() < 2) throw std::domain_error("pca_project: need at least two vectors");
  const std::size_t F = data.front().size();
  if (dims > F) throw std::domain_error("pca_project: dims exceeds vector length");
  for (const auto& x : data) {
    if (x.size() != F) throw std::domain_error("pca_project: vector lengths differ");
  }
  const double n = static_cast<double>(data.size());

  PcaResult out;
  out.mean.assign(F, 0.0);
  for (const auto& x : data) {
    for (std::size_t j = 0; j < F; ++j) out.mean[j] += x[j] / n;
  }
  Matrix cov(F, F, 0.0);
  for (const auto& x : data) {
    for (std::size_t a = 0; a < F; ++a) {
      const double da = x[a] - out.mean[a];
      for (std::size_t b = 0; b < F; ++b) cov(a, b) += da * (x[b] - out.mean[b]) / (n - 1.0);
    }
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < F; ++a) trace += cov(a, a);

  out.components = Matrix(dims, F, 0.0);
  out.eigenvalues.assign(dims, 0.0);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(F), w(F);
  for (std::size_t c = 0; c < dims; ++c) {
    for (double& x : v) x = gauss(rng);
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0) break;
      for (double& x : v) x /= norm;
      for (std::size_t a = 0; a < F; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < F; ++b) acc += cov(a, b) * v[b];
        w[a] = acc;
      }
      double next = 0.0, diff = 0.0;
      for (std::size_t a = 0; a < F; ++a) next += v[a] * w[a];
      double wnorm = 0.0;
      for (double x : w) wnorm += x * x;
      wnorm = std::sqrt(wnorm);
      if (wnorm == 0.0) {
        lambda = 0.0;
        break;
      }
      for (std::size_t a = 0; a < F; ++a) diff += std::abs(w[a] / wnorm - v[a]);
      v = w;
      lambda = next;
      if (diff < 1e-13 * static_cast<double>(F)) break;
    }
    if (lambda <= 1e-12 * std::max(trace, 1e-300)) break;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    // Rayleigh quotient of the final unit vector.
    double rq = 0.0;
    for (std::size_t a = 0; a < F; ++a) {
      for (std::size_t b = 0; b < F; ++b) rq += v[a] * cov(a, b) * v[b];
    }
    // Fix the sign so the largest-magnitude entry is positive.
    std::size_t big = 0;
    for (std::size_t a = 1; a < F; ++a) {
      if (std::abs(v[a]) > std::abs(v[big])) big = a;
    }
    if (v[big] < 0.0) {
      for (double& x : v) x = -x;
    }
    std::copy(v.begin(), v.end(), out.components.row(c).begin());
    out.eigenvalues[c] = rq;
    for (std::size_t a = 0; a < F; ++a) {
      for (std::size_t b = 0; b < F; ++b) cov(a, b) -= rq * v[a] * v[b];
    }
  }

  out.projected = Matrix(data.size(), dims, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < dims; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < F; ++j) acc += (data[i][j] - out.mean[j]) * out.components(c, j);
      out.projected(i, c) = acc;
    }
  }
  return out;
}

}  // namespace ibtm
