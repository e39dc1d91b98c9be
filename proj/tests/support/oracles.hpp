#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library's numerics.

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

using Bag = std::vector<std::pair<std::size_t, double>>;  // word id, count

/// Textbook mean-field LDA (Blei, Ng & Jordan) with a smoothed topic-word
/// Dirichlet, written from scratch. Document states persist across EM
/// iterations; each document cycle recomputes all word responsibilities from
/// the current gamma, then gamma, and stops when the mean absolute change of
/// the responsibilities drops below doc_tol.
class Lda {
 public:
  Lda(std::vector<Bag> docs, std::size_t K, std::size_t V, double alpha, double sigma,
      std::vector<std::vector<double>> lambda, double doc_tol, std::size_t max_doc_iters)
      : docs_(std::move(docs)),
        K_(K),
        V_(V),
        alpha_(alpha),
        sigma_(sigma),
        lambda_(std::move(lambda)),
        doc_tol_(doc_tol),
        max_doc_iters_(max_doc_iters) {
    for (const auto& doc : docs_) {
      gamma_.emplace_back(K_, alpha_);
      phi_.emplace_back(doc.size(), std::vector<double>(K_, 1.0 / static_cast<double>(K_)));
    }
  }

  void em_iteration() {
    // E[log beta_kv] under the current lambda
    std::vector<std::vector<double>> elog_beta(K_, std::vector<double>(V_));
    for (std::size_t k = 0; k < K_; ++k) {
      const double total = std::accumulate(lambda_[k].begin(), lambda_[k].end(), 0.0);
      for (std::size_t v = 0; v < V_; ++v) {
        elog_beta[k][v] = boost::math::digamma(lambda_[k][v]) - boost::math::digamma(total);
      }
    }
    for (std::size_t m = 0; m < docs_.size(); ++m) e_step(m, elog_beta);

    for (std::size_t k = 0; k < K_; ++k) std::fill(lambda_[k].begin(), lambda_[k].end(), sigma_);
    for (std::size_t m = 0; m < docs_.size(); ++m) {
      for (std::size_t n = 0; n < docs_[m].size(); ++n) {
        const auto [v, c] = docs_[m][n];
        for (std::size_t k = 0; k < K_; ++k) lambda_[k][v] += c * phi_[m][n][k];
      }
    }
  }

  const std::vector<std::vector<double>>& lambda() const { return lambda_; }
  const std::vector<std::vector<double>>& gamma() const { return gamma_; }

 private:
  void e_step(std::size_t m, const std::vector<std::vector<double>>& elog_beta) {
    const auto& doc = docs_[m];
    auto& gamma = gamma_[m];
    auto& phi = phi_[m];
    for (std::size_t cycle = 0; cycle < max_doc_iters_; ++cycle) {
      const double gsum = std::accumulate(gamma.begin(), gamma.end(), 0.0);
      std::vector<double> elog_theta(K_);
      for (std::size_t k = 0; k < K_; ++k) {
        elog_theta[k] = boost::math::digamma(gamma[k]) - boost::math::digamma(gsum);
      }
      double change = 0.0;
      for (std::size_t n = 0; n < doc.size(); ++n) {
        std::vector<double> w(K_);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K_; ++k) {
          w[k] = elog_theta[k] + elog_beta[k][doc[n].first];
          top = std::max(top, w[k]);
        }
        double z = 0.0;
        for (double& x : w) {
          x = std::exp(x - top);
          z += x;
        }
        for (std::size_t k = 0; k < K_; ++k) {
          const double p = w[k] / z;
          change += std::abs(p - phi[n][k]);
          phi[n][k] = p;
        }
      }
      for (std::size_t k = 0; k < K_; ++k) {
        gamma[k] = alpha_;
        for (std::size_t n = 0; n < doc.size(); ++n) gamma[k] += doc[n].second * phi[n][k];
      }
      const double entries = static_cast<double>(doc.size() * K_);
      if (doc.empty() || change / entries < doc_tol_) break;
    }
  }

  std::vector<Bag> docs_;
  std::size_t K_, V_;
  double alpha_, sigma_;
  std::vector<std::vector<double>> lambda_;
  double doc_tol_;
  std::size_t max_doc_iters_;
  std::vector<std::vector<double>> gamma_;
  std::vector<std::vector<std::vector<double>>> phi_;
};

/// log B(a) for a Dirichlet parameter vector, via lgamma.
inline double log_beta_fn(const std::vector<double>& a) {
  double s = 0.0, t = 0.0;
  for (double x : a) {
    s += std::lgamma(x);
    t += x;
  }
  return s - std::lgamma(t);
}

/// Exact log p(w) of a one-view, one-document corpus under the model with
/// K = 1 shared and T = 1 private topic, summing over every assignment of
/// the token sequence to the two topics. theta and kappa are degenerate;
/// the partition is Beta(iota_a, iota_b) and both topic-word distributions
/// are Dirichlet(sigma) over V words, which integrate to Polya terms.
inline double exact_log_marginal(const std::vector<std::size_t>& tokens, std::size_t V, double sigma, double iota_a,
                                 double iota_b) {
  const std::size_t N = tokens.size();
  double total = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << N); ++mask) {
    std::vector<double> shared(V, sigma), priv(V, sigma);
    double n_shared = 0.0, n_priv = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      if (mask & (std::size_t{1} << n)) {
        shared[tokens[n]] += 1.0;
        n_shared += 1.0;
      } else {
        priv[tokens[n]] += 1.0;
        n_priv += 1.0;
      }
    }
    const std::vector<double> prior(V, sigma);
    const double log_p = log_beta_fn({iota_a + n_shared, iota_b + n_priv}) - log_beta_fn({iota_a, iota_b}) +
                         log_beta_fn(shared) - log_beta_fn(prior) + log_beta_fn(priv) - log_beta_fn(prior);
    total += std::exp(log_p);
  }
  return std::log(total);
}

/// Minimum total cost over all permutations (n! enumeration).
inline double brute_force_assignment_cost(const std::vector<std::vector<double>>& cost) {
  std::vector<std::size_t> perm(cost.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += cost[i][perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Shared responsibility of word 0 in the one-shared, one-private example with
/// gamma = [1], delta = [1], r = (1, 1), shared word row [3, 1] and private
/// row [1, 1]. With psi(n + 1) - psi(n) = 1/n:
///   shared  = (psi(1) - psi(1)) + (psi(1) - psi(2)) + (psi(3) - psi(4)) = -1 - 1/3
///   private = (psi(1) - psi(1)) + (psi(1) - psi(2)) + (psi(1) - psi(2)) = -2
inline double scalar_responsibility_example() {
  const double shared = -1.0 - 1.0 / 3.0;
  const double priv = -2.0;
  return 1.0 / (1.0 + std::exp(priv - shared));
}

}  // namespace oracle
