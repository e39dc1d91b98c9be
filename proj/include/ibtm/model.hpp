#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ibtm/matrix.hpp"
#include "ibtm/numerics.hpp"

namespace ibtm {

/// Beta(a, b) parameters, used both for the partition priors and for their
/// variational posteriors.
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  bool operator==(const BetaParams&) const = default;
};

/// Fixed model constants. One entry per view in every per-view vector.
struct Hyperparams {
  std::size_t K = 1;                   // shared topics
  std::vector<std::size_t> T;          // private topics per view
  std::vector<std::size_t> V;          // vocabulary size per view
  double alpha_s = 0.8;                // Dirichlet on shared document proportions
  std::vector<double> alpha_p;         // Dirichlet on private document proportions
  std::vector<double> sigma_s;         // Dirichlet on shared topic-word distributions
  std::vector<double> sigma_p;         // Dirichlet on private topic-word distributions
  std::vector<BetaParams> iota;        // Beta on the shared/private partition

  std::size_t num_views() const noexcept { return V.size(); }
  std::size_t topics_in_view(std::size_t d) const noexcept { return K + T[d]; }

  /// Same alpha/sigma/iota for every view.
  static Hyperparams uniform(std::size_t K, std::vector<std::size_t> T, std::vector<std::size_t> V,
                             double alpha = 0.8, double sigma = 0.6, BetaParams iota = {5.0, 5.0}) {
    Hyperparams h;
    const std::size_t D = V.size();
    h.K = K;
    h.T = std::move(T);
    h.V = std::move(V);
    h.alpha_s = alpha;
    h.alpha_p.assign(D, alpha);
    h.sigma_s.assign(D, sigma);
    h.sigma_p.assign(D, sigma);
    h.iota.assign(D, iota);
    h.validate();
    return h;
  }

  void validate() const {
    const std::size_t D = V.size();
    if (D < 1) throw std::domain_error("Hyperparams: at least one view required");
    if (K < 1) throw std::domain_error("Hyperparams: K must be >= 1");
    if (T.size() != D || alpha_p.size() != D || sigma_s.size() != D || sigma_p.size() != D ||
        iota.size() != D) {
      throw std::domain_error("Hyperparams: per-view fields must all have one entry per view");
    }
    auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
    if (!positive(alpha_s)) throw std::domain_error("Hyperparams: alpha_s must be > 0");
    for (std::size_t d = 0; d < D; ++d) {
      if (V[d] < 2) throw std::domain_error("Hyperparams: vocabulary size must be >= 2");
      if (!positive(alpha_p[d]) || !positive(sigma_s[d]) || !positive(sigma_p[d]) ||
          !positive(iota[d].a) || !positive(iota[d].b)) {
        throw std::domain_error("Hyperparams: all concentration parameters must be > 0");
      }
    }
  }

  bool operator==(const Hyperparams&) const = default;
};

/// The degenerate configuration with no private topics: one LDA over the
/// concatenated views (a single LDA when D = 1).
inline Hyperparams reduce_to_lda(Hyperparams hyper) {
  std::fill(hyper.T.begin(), hyper.T.end(), 0);
  return hyper;
}

struct WordCount {
  std::uint32_t word = 0;
  double count = 0.0;
  bool operator==(const WordCount&) const = default;
};

/// Bag-of-words document: per view, distinct word ids in increasing order
/// with nonnegative (possibly fractional) counts.
struct Document {
  std::vector<std::vector<WordCount>> views;
  std::optional<int> label;

  double total(std::size_t d) const {
    double s = 0.0;
    for (const auto& wc : views[d]) s += wc.count;
    return s;
  }

  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::vector<std::size_t> V;  // vocabulary size per view
  std::vector<Document> docs;

  std::size_t num_views() const noexcept { return V.size(); }
  std::size_t size() const noexcept { return docs.size(); }

  bool operator==(const Corpus&) const = default;
};

/// Checks word bounds, ordering and count signs for one document.
inline void validate_document(const Document& doc, std::span<const std::size_t> V) {
  if (doc.views.size() != V.size()) throw std::domain_error("document view count mismatch");
  for (std::size_t d = 0; d < V.size(); ++d) {
    std::int64_t prev = -1;
    for (const auto& wc : doc.views[d]) {
      if (wc.word >= V[d]) {
        throw std::domain_error("word id " + std::to_string(wc.word) + " out of vocabulary for view " +
                                std::to_string(d + 1));
      }
      if (static_cast<std::int64_t>(wc.word) <= prev) {
        throw std::domain_error("word ids must be distinct and increasing");
      }
      if (!(wc.count >= 0.0) || !std::isfinite(wc.count)) {
        throw std::domain_error("word counts must be finite and >= 0");
      }
      prev = wc.word;
    }
  }
}

inline void validate_corpus(const Corpus& corpus, const Hyperparams& hyper) {
  if (corpus.docs.empty()) throw std::domain_error("corpus is empty");
  if (corpus.V != hyper.V) throw std::domain_error("corpus vocabulary sizes do not match hyperparameters");
  for (const auto& doc : corpus.docs) validate_document(doc, corpus.V);
}

/// Variational Dirichlet parameters over every per-topic word distribution.
/// shared[d] is K x V_d, priv[d] is T_d x V_d.
struct GlobalParams {
  std::vector<Matrix> shared;
  std::vector<Matrix> priv;

  bool operator==(const GlobalParams&) const = default;
};

inline void validate_globals(const GlobalParams& g, const Hyperparams& hyper) {
  const std::size_t D = hyper.num_views();
  if (g.shared.size() != D || g.priv.size() != D) throw std::domain_error("globals: view count mismatch");
  for (std::size_t d = 0; d < D; ++d) {
    if (g.shared[d].rows() != hyper.K || g.shared[d].cols() != hyper.V[d] ||
        g.priv[d].rows() != hyper.T[d] || g.priv[d].cols() != hyper.V[d]) {
      throw std::domain_error("globals: block shape does not match hyperparameters");
    }
  }
}

/// Per-document variational state.
///
/// resp[d] has one row per distinct word of view d (in document order) and
/// K + T_d columns; the first K columns are the shared topics.
struct DocState {
  std::vector<double> gamma;
  std::vector<std::vector<double>> delta;
  std::vector<BetaParams> r;
  std::vector<Matrix> resp;

  bool operator==(const DocState&) const = default;
};

/// Fresh state: Dirichlets at their priors, partitions at iota, uniform
/// responsibilities.
inline DocState initial_doc_state(const Document& doc, const Hyperparams& hyper) {
  const std::size_t D = hyper.num_views();
  DocState s;
  s.gamma.assign(hyper.K, hyper.alpha_s);
  s.delta.resize(D);
  s.r.resize(D);
  s.resp.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    s.delta[d].assign(hyper.T[d], hyper.alpha_p[d]);
    s.r[d] = hyper.iota[d];
    const std::size_t cols = hyper.topics_in_view(d);
    s.resp[d] = Matrix(doc.views[d].size(), cols, 1.0 / static_cast<double>(cols));
  }
  return s;
}

struct TokenAssignment {
  std::uint32_t word = 0;
  std::uint32_t topic = 0;  // < K shared, >= K private (K + t)
  bool operator==(const TokenAssignment&) const = default;
};

/// Latent values drawn by the sampler, kept for recovery scoring.
struct GroundTruth {
  std::vector<Matrix> shared_topics;   // per view, K x V_d
  std::vector<Matrix> private_topics;  // per view, T_d x V_d
  Matrix theta;                        // M x K
  std::vector<Matrix> private_props;   // per view, M x T_d
  std::vector<std::vector<double>> partition;                       // per view, M values
  std::vector<std::vector<std::vector<TokenAssignment>>> tokens;    // [view][doc] in draw order

  bool operator==(const GroundTruth&) const = default;
};

namespace detail {

inline void sample_dirichlet(std::mt19937_64& rng, std::span<const double> alpha, std::span<double> out) {
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> g(alpha[i], 1.0);
    out[i] = g(rng);
    total += out[i];
  }
  if (total <= 0.0) {
    // All draws underflowed; fall back to a point mass on a uniform index.
    std::uniform_int_distribution<std::size_t> pick(0, alpha.size() - 1);
    std::fill(out.begin(), out.end(), 0.0);
    out[pick(rng)] = 1.0;
    return;
  }
  for (double& v : out) v /= total;
}

inline void sample_dirichlet(std::mt19937_64& rng, double alpha, std::span<double> out) {
  std::vector<double> a(out.size(), alpha);
  sample_dirichlet(rng, a, out);
}

inline double sample_beta(std::mt19937_64& rng, BetaParams p) {
  std::gamma_distribution<double> ga(p.a, 1.0), gb(p.b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  double v = x / (x + y);
  if (!(v > 0.0)) v = std::numeric_limits<double>::min();
  if (!(v < 1.0)) v = std::nextafter(1.0, 0.0);
  return v;
}

/// Inverse-CDF draw from unnormalized nonnegative weights.
inline std::size_t sample_categorical(std::mt19937_64& rng, std::span<const double> w) {
  double total = 0.0;
  for (double v : w) total += v;
  std::uniform_real_distribution<double> u(0.0, total);
  const double x = u(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last_positive = i;
    if (x < acc) return i;
  }
  return last_positive;
}

inline std::vector<WordCount> to_bag(std::span<const TokenAssignment> toks, std::size_t vocab) {
  std::vector<double> counts(vocab, 0.0);
  for (const auto& t : toks) counts[t.word] += 1.0;
  std::vector<WordCount> bag;
  for (std::size_t v = 0; v < vocab; ++v) {
    if (counts[v] > 0.0) bag.push_back({static_cast<std::uint32_t>(v), counts[v]});
  }
  return bag;
}

}  // namespace detail

/// Per-document shared-topic Dirichlet prior. Empty means the symmetric
/// alpha_s of the hyperparameters.
struct ClassProfile {
  std::vector<double> shared_alpha;
};

/// Fixed topic-word distributions for the sampler. A view whose matrix is
/// empty (0 rows) draws that block from its Dirichlet prior instead.
struct TopicOverrides {
  std::vector<Matrix> shared;  // per view, K x V_d or empty
  std::vector<Matrix> priv;    // per view, T_d x V_d or empty
};

/// Structured ground truth: topic j of a view (shared topics first, then
/// private) puts `peak_mass` uniformly on its own contiguous block of words
/// and spreads the rest uniformly over the remaining vocabulary. Blocks are
/// V / (K + T_d) words wide; leftover words only receive background mass.
inline TopicOverrides banded_topics(const Hyperparams& hyper, double peak_mass = 0.8) {
  hyper.validate();
  if (!(peak_mass > 0.0 && peak_mass <= 1.0)) throw std::domain_error("banded_topics: peak_mass must be in (0, 1]");
  TopicOverrides out;
  for (std::size_t d = 0; d < hyper.num_views(); ++d) {
    const std::size_t n_topics = hyper.topics_in_view(d);
    const std::size_t V = hyper.V[d];
    const std::size_t width = V / n_topics;
    if (width < 1 || width == V) throw std::domain_error("banded_topics: vocabulary too small for the topic count");
    Matrix block(n_topics, V);
    for (std::size_t j = 0; j < n_topics; ++j) {
      const double peak = peak_mass / static_cast<double>(width);
      const double rest = (1.0 - peak_mass) / static_cast<double>(V - width);
      for (std::size_t v = 0; v < V; ++v) block(j, v) = (v / width == j && v < n_topics * width) ? peak : rest;
    }
    Matrix shared(hyper.K, V), priv(hyper.T[d], V);
    for (std::size_t k = 0; k < hyper.K; ++k) std::copy(block.row(k).begin(), block.row(k).end(), shared.row(k).begin());
    for (std::size_t t = 0; t < hyper.T[d]; ++t) {
      std::copy(block.row(hyper.K + t).begin(), block.row(hyper.K + t).end(), priv.row(t).begin());
    }
    out.shared.push_back(std::move(shared));
    out.priv.push_back(std::move(priv));
  }
  return out;
}

/// Draws a corpus from the generative model.
///
/// Topic blocks given in `topics` are used as-is instead of being drawn.
/// Draw order: topic-word distributions (per view: shared rows then private
/// rows), then per document theta, then per view the private proportions,
/// the partition value and the tokens. Each token picks a topic from
/// [rho * theta; (1 - rho) * kappa] and then a word from that topic. Views
/// without private topics use rho = 1.
///
/// When profiles is nonempty, document m belongs to class m % profiles.size()
/// and draws theta from that class's Dirichlet; the class id becomes the label.
inline std::pair<Corpus, GroundTruth> sample_corpus(const Hyperparams& hyper, std::size_t num_docs,
                                                    std::span<const std::size_t> tokens_per_view,
                                                    std::uint64_t seed,
                                                    std::span<const ClassProfile> profiles = {},
                                                    const TopicOverrides* topics = nullptr) {
  hyper.validate();
  const std::size_t D = hyper.num_views();
  if (num_docs < 1) throw std::domain_error("sample_corpus: num_docs must be >= 1");
  if (tokens_per_view.size() != D) throw std::domain_error("sample_corpus: one token count per view required");
  for (const auto& p : profiles) {
    if (!p.shared_alpha.empty() && p.shared_alpha.size() != hyper.K) {
      throw std::domain_error("sample_corpus: class profile length must equal K");
    }
  }

  if (topics != nullptr) {
    if (topics->shared.size() != D || topics->priv.size() != D) {
      throw std::domain_error("sample_corpus: topic overrides need one entry per view");
    }
    for (std::size_t d = 0; d < D; ++d) {
      const Matrix& s = topics->shared[d];
      const Matrix& p = topics->priv[d];
      if ((s.rows() != 0 && (s.rows() != hyper.K || s.cols() != hyper.V[d])) ||
          (p.rows() != 0 && (p.rows() != hyper.T[d] || p.cols() != hyper.V[d]))) {
        throw std::domain_error("sample_corpus: topic override shape mismatch");
      }
      for (const Matrix* m : {&s, &p}) {
        for (std::size_t r = 0; r < m->rows(); ++r) {
          double total = 0.0;
          for (double v : m->row(r)) {
            if (!(v >= 0.0)) throw std::domain_error("sample_corpus: topic override entries must be >= 0");
            total += v;
          }
          if (std::abs(total - 1.0) > 1e-12) throw std::domain_error("sample_corpus: topic override rows must sum to 1");
        }
      }
    }
  }

  std::mt19937_64 rng(seed);
  GroundTruth truth;
  truth.shared_topics.resize(D);
  truth.private_topics.resize(D);
  truth.private_props.resize(D);
  truth.partition.assign(D, std::vector<double>(num_docs, 1.0));
  truth.tokens.assign(D, std::vector<std::vector<TokenAssignment>>(num_docs));

  for (std::size_t d = 0; d < D; ++d) {
    if (topics != nullptr && topics->shared[d].rows() != 0) {
      truth.shared_topics[d] = topics->shared[d];
    } else {
      truth.shared_topics[d] = Matrix(hyper.K, hyper.V[d]);
      for (std::size_t k = 0; k < hyper.K; ++k) {
        detail::sample_dirichlet(rng, hyper.sigma_s[d], truth.shared_topics[d].row(k));
      }
    }
    if (topics != nullptr && topics->priv[d].rows() != 0) {
      truth.private_topics[d] = topics->priv[d];
    } else {
      truth.private_topics[d] = Matrix(hyper.T[d], hyper.V[d]);
      for (std::size_t t = 0; t < hyper.T[d]; ++t) {
        detail::sample_dirichlet(rng, hyper.sigma_p[d], truth.private_topics[d].row(t));
      }
    }
    truth.private_props[d] = Matrix(num_docs, hyper.T[d]);
  }
  truth.theta = Matrix(num_docs, hyper.K);

  Corpus corpus;
  corpus.V = hyper.V;
  corpus.docs.resize(num_docs);

  std::vector<double> mixture;
  for (std::size_t m = 0; m < num_docs; ++m) {
    Document& doc = corpus.docs[m];
    doc.views.resize(D);
    const ClassProfile* profile = profiles.empty() ? nullptr : &profiles[m % profiles.size()];
    if (profile != nullptr) doc.label = static_cast<int>(m % profiles.size());
    if (profile != nullptr && !profile->shared_alpha.empty()) {
      detail::sample_dirichlet(rng, profile->shared_alpha, truth.theta.row(m));
    } else {
      detail::sample_dirichlet(rng, hyper.alpha_s, truth.theta.row(m));
    }

    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t Td = hyper.T[d];
      auto kappa = truth.private_props[d].row(m);
      double rho = 1.0;
      if (Td > 0) {
        detail::sample_dirichlet(rng, hyper.alpha_p[d], kappa);
        rho = detail::sample_beta(rng, hyper.iota[d]);
      }
      truth.partition[d][m] = rho;

      mixture.assign(hyper.K + Td, 0.0);
      for (std::size_t k = 0; k < hyper.K; ++k) mixture[k] = rho * truth.theta(m, k);
      for (std::size_t t = 0; t < Td; ++t) mixture[hyper.K + t] = (1.0 - rho) * kappa[t];

      auto& toks = truth.tokens[d][m];
      toks.reserve(tokens_per_view[d]);
      for (std::size_t n = 0; n < tokens_per_view[d]; ++n) {
        const std::size_t z = detail::sample_categorical(rng, mixture);
        const auto topic_row = z < hyper.K ? truth.shared_topics[d].row(z)
                                           : truth.private_topics[d].row(z - hyper.K);
        const std::size_t w = detail::sample_categorical(rng, topic_row);
        toks.push_back({static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(z)});
      }
      doc.views[d] = detail::to_bag(toks, hyper.V[d]);
    }
  }
  return {std::move(corpus), std::move(truth)};
}

}  // namespace ibtm
