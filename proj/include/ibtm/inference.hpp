#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibtm/assignment.hpp"
#include "ibtm/matrix.hpp"
#include "ibtm/model.hpp"
#include "ibtm/numerics.hpp"
#include "ibtm/parallel.hpp"

namespace ibtm {

struct FitConfig {
  std::size_t max_em_iters = 200;
  double em_rel_tol = 1e-5;
  std::size_t max_doc_iters = 100;
  double doc_tol = 1e-4;  // mean absolute responsibility change
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double init_scale = 0.1;  // width of the uniform perturbation added to sigma at init

  // Warm-up at the start of train_from: warmup_iters untraced iterations
  // with responsibilities tempered by an inverse temperature rising linearly
  // from anneal_start to 1 over the first anneal_iters of them.
  std::size_t warmup_iters = 60;
  std::size_t anneal_iters = 40;
  double anneal_start = 0.3;

  // Staged initialization for multi-view models (see staged_init).
  bool staged = true;
  std::size_t stage_max_iters = 100;
  double stage_rel_tol = 1e-5;

  // Independent initializations (seed, seed + 1, ...); the run with the
  // highest final ELBO is kept.
  std::size_t restarts = 1;

  void validate() const {
    if (max_em_iters < 1 || max_doc_iters < 1 || stage_max_iters < 1) {
      throw std::domain_error("FitConfig: iteration caps must be >= 1");
    }
    if (!(em_rel_tol > 0.0) || !(doc_tol > 0.0) || !(stage_rel_tol > 0.0)) {
      throw std::domain_error("FitConfig: tolerances must be > 0");
    }
    if (!(init_scale >= 0.0)) throw std::domain_error("FitConfig: init_scale must be >= 0");
    if (anneal_iters > warmup_iters) throw std::domain_error("FitConfig: anneal_iters must not exceed warmup_iters");
    if (!(anneal_start > 0.0 && anneal_start <= 1.0)) throw std::domain_error("FitConfig: anneal_start must be in (0, 1]");
    if (restarts < 1) throw std::domain_error("FitConfig: restarts must be >= 1");
  }

  /// Plain coordinate ascent from the random initialization.
  FitConfig without_warmup() const {
    FitConfig c = *this;
    c.warmup_iters = 0;
    c.anneal_iters = 0;
    c.staged = false;
    return c;
  }
};

struct Model {
  Hyperparams hyper;
  GlobalParams globals;
  std::vector<double> elbo_trace;

  bool operator==(const Model&) const = default;
};

/// Views participating in an E-step, as a per-view mask.
class ViewSet {
 public:
  ViewSet() = default;
  static ViewSet all(std::size_t num_views) {
    ViewSet s;
    s.mask_.assign(num_views, true);
    return s;
  }
  /// From zero-based view indices.
  static ViewSet of(std::size_t num_views, std::span<const std::size_t> views) {
    ViewSet s;
    s.mask_.assign(num_views, false);
    for (std::size_t v : views) {
      if (v >= num_views) throw std::domain_error("view index " + std::to_string(v + 1) + " does not exist");
      s.mask_[v] = true;
    }
    return s;
  }
  std::size_t num_views() const noexcept { return mask_.size(); }
  bool contains(std::size_t d) const noexcept { return d < mask_.size() && mask_[d]; }
  bool empty() const noexcept { return std::find(mask_.begin(), mask_.end(), true) == mask_.end(); }

 private:
  std::vector<bool> mask_;
};

/// Random initial word parameters: sigma plus U(0, scale) per entry, except
/// the shared block of every view after the first, which stays exactly at
/// sigma. Leaving one shared block flat breaks the rotational symmetry only
/// once across views.
inline GlobalParams init_globals(const Hyperparams& hyper, std::uint64_t seed, double scale = 0.1) {
  hyper.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, scale);
  const std::size_t D = hyper.num_views();
  GlobalParams g;
  g.shared.resize(D);
  g.priv.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    g.shared[d] = Matrix(hyper.K, hyper.V[d], hyper.sigma_s[d]);
    if (d == 0) {
      for (double& v : g.shared[d].data()) v += noise(rng);
    }
    g.priv[d] = Matrix(hyper.T[d], hyper.V[d], hyper.sigma_p[d]);
    for (double& v : g.priv[d].data()) v += noise(rng);
  }
  return g;
}

/// E_q[log word probability] for every topic row, precomputed once per
/// E-step since globals are frozen while documents are processed.
struct ExpectedLogTopics {
  std::vector<Matrix> shared;
  std::vector<Matrix> priv;

  static ExpectedLogTopics from(const GlobalParams& g) {
    ExpectedLogTopics e;
    for (const auto& m : g.shared) e.shared.push_back(dirichlet_log_expectation_rows(m));
    for (const auto& m : g.priv) e.priv.push_back(dirichlet_log_expectation_rows(m));
    return e;
  }
};

namespace detail {

inline double beta_log_expectation_first(BetaParams p) { return digamma(p.a) - digamma(p.a + p.b); }
inline double beta_log_expectation_second(BetaParams p) { return digamma(p.b) - digamma(p.a + p.b); }

inline void check_vocab(const Document& doc, const Hyperparams& hyper, std::size_t view) {
  if (view >= hyper.num_views() || view >= doc.views.size()) throw std::domain_error("view index out of range");
  for (const auto& wc : doc.views[view]) {
    if (wc.word >= hyper.V[view]) {
      throw std::domain_error("word id " + std::to_string(wc.word) + " out of vocabulary");
    }
  }
}

}  // namespace detail

/// Responsibilities of one view given the current document Dirichlets and
/// partition. Shared topic i scores E[log theta_i] + E[log rho] + E[log beta_iv];
/// private topic t scores E[log kappa_t] + E[log(1 - rho)] + E[log zeta_tv].
/// Views without private topics drop the (constant) rho term.
/// An inverse temperature below 1 flattens the result (used only in warm-up).
inline Matrix update_token_responsibilities(const Document& doc, const DocState& state,
                                            const ExpectedLogTopics& elog, const Hyperparams& hyper,
                                            std::size_t view, double inverse_temperature = 1.0) {
  detail::check_vocab(doc, hyper, view);
  const std::size_t K = hyper.K;
  const std::size_t Td = hyper.T[view];
  const auto elog_theta = dirichlet_log_expectation(state.gamma);
  std::vector<double> elog_kappa;
  double elog_rho = 0.0, elog_one_minus_rho = 0.0;
  if (Td > 0) {
    elog_kappa = dirichlet_log_expectation(state.delta[view]);
    elog_rho = detail::beta_log_expectation_first(state.r[view]);
    elog_one_minus_rho = detail::beta_log_expectation_second(state.r[view]);
  }

  const auto& words = doc.views[view];
  Matrix resp(words.size(), K + Td);
  for (std::size_t n = 0; n < words.size(); ++n) {
    const std::uint32_t v = words[n].word;
    auto row = resp.row(n);
    for (std::size_t i = 0; i < K; ++i) row[i] = elog_theta[i] + elog_rho + elog.shared[view](i, v);
    for (std::size_t t = 0; t < Td; ++t) {
      row[K + t] = elog_kappa[t] + elog_one_minus_rho + elog.priv[view](t, v);
    }
    if (inverse_temperature != 1.0) {
      for (double& x : row) x *= inverse_temperature;
    }
    normalize_from_log_inplace(row);
  }
  return resp;
}

inline Matrix update_token_responsibilities(const Document& doc, const DocState& state, const GlobalParams& globals,
                                            const Hyperparams& hyper, std::size_t view) {
  validate_globals(globals, hyper);
  return update_token_responsibilities(doc, state, ExpectedLogTopics::from(globals), hyper, view);
}

struct DocTopicParams {
  std::vector<double> gamma;
  std::vector<std::vector<double>> delta;
};

/// gamma_k = alpha_s + sum over present views and words of count * resp_k;
/// delta of each present view accumulates its private block the same way.
/// Absent views keep delta at its prior.
inline DocTopicParams update_doc_topic_params(const Document& doc, const DocState& state, const Hyperparams& hyper,
                                              const ViewSet& views) {
  const std::size_t K = hyper.K;
  DocTopicParams out;
  out.gamma.assign(K, hyper.alpha_s);
  out.delta.resize(hyper.num_views());
  for (std::size_t d = 0; d < hyper.num_views(); ++d) {
    out.delta[d].assign(hyper.T[d], hyper.alpha_p[d]);
    if (!views.contains(d)) continue;
    const auto& words = doc.views[d];
    for (std::size_t n = 0; n < words.size(); ++n) {
      const double c = words[n].count;
      const auto row = state.resp[d].row(n);
      for (std::size_t k = 0; k < K; ++k) out.gamma[k] += c * row[k];
      for (std::size_t t = 0; t < hyper.T[d]; ++t) out.delta[d][t] += c * row[K + t];
    }
  }
  return out;
}

inline DocTopicParams update_doc_topic_params(const Document& doc, const DocState& state, const Hyperparams& hyper) {
  return update_doc_topic_params(doc, state, hyper, ViewSet::all(hyper.num_views()));
}

/// r = (iota_1 + count-weighted shared mass, iota_2 + count-weighted private mass).
inline BetaParams update_partition_params(const Document& doc, const DocState& state, const Hyperparams& hyper,
                                          std::size_t view) {
  const std::size_t K = hyper.K;
  BetaParams r = hyper.iota[view];
  const auto& words = doc.views[view];
  for (std::size_t n = 0; n < words.size(); ++n) {
    const double c = words[n].count;
    const auto row = state.resp[view].row(n);
    double shared = 0.0, priv = 0.0;
    for (std::size_t k = 0; k < K; ++k) shared += row[k];
    for (std::size_t t = K; t < row.size(); ++t) priv += row[t];
    r.a += c * shared;
    r.b += c * priv;
  }
  return r;
}

/// Coordinate ascent on one document starting from `state`: responsibilities,
/// then document Dirichlets, then partitions, until the mean absolute
/// responsibility change drops below doc_tol. Returns the number of cycles.
inline std::size_t refine_document(const Document& doc, const ExpectedLogTopics& elog, const Hyperparams& hyper,
                                   const FitConfig& config, const ViewSet& views, DocState& state,
                                   double inverse_temperature = 1.0) {
  if (views.empty()) throw std::domain_error("e-step: at least one view must be present");
  const std::size_t D = hyper.num_views();
  std::size_t cycles = 0;
  while (cycles < config.max_doc_iters) {
    ++cycles;
    double change = 0.0;
    std::size_t entries = 0;
    for (std::size_t d = 0; d < D; ++d) {
      if (!views.contains(d)) continue;
      Matrix fresh = update_token_responsibilities(doc, state, elog, hyper, d, inverse_temperature);
      const auto old = state.resp[d].data();
      const auto now = fresh.data();
      for (std::size_t i = 0; i < now.size(); ++i) change += std::abs(now[i] - old[i]);
      entries += now.size();
      state.resp[d] = std::move(fresh);
    }
    auto params = update_doc_topic_params(doc, state, hyper, views);
    state.gamma = std::move(params.gamma);
    for (std::size_t d = 0; d < D; ++d) {
      if (!views.contains(d)) continue;
      state.delta[d] = std::move(params.delta[d]);
      state.r[d] = update_partition_params(doc, state, hyper, d);
    }
    if (entries == 0 || change / static_cast<double>(entries) < config.doc_tol) break;
  }
  return cycles;
}

/// Fresh per-document E-step restricted to `views`. Absent views keep their
/// prior-valued state and contribute nothing to gamma.
inline DocState e_step_document(const Document& doc, const ExpectedLogTopics& elog, const Hyperparams& hyper,
                                const FitConfig& config, const ViewSet& views) {
  if (views.empty()) throw std::domain_error("e-step: at least one view must be present");
  DocState state = initial_doc_state(doc, hyper);
  refine_document(doc, elog, hyper, config, views, state);
  return state;
}

inline DocState e_step_document(const Document& doc, const GlobalParams& globals, const Hyperparams& hyper,
                                const FitConfig& config, const ViewSet& views) {
  validate_globals(globals, hyper);
  validate_document(doc, hyper.V);
  return e_step_document(doc, ExpectedLogTopics::from(globals), hyper, config, views);
}

/// Conjugate accumulation: sigma + sum over documents of count * responsibility.
inline GlobalParams m_step(const Corpus& corpus, std::span<const DocState> states, const Hyperparams& hyper) {
  if (states.size() != corpus.docs.size()) throw std::domain_error("m_step: one state per document required");
  if (corpus.V != hyper.V) throw std::domain_error("m_step: corpus does not match hyperparameters");
  const std::size_t D = hyper.num_views();
  const std::size_t K = hyper.K;
  GlobalParams g;
  g.shared.resize(D);
  g.priv.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    g.shared[d] = Matrix(K, hyper.V[d], hyper.sigma_s[d]);
    g.priv[d] = Matrix(hyper.T[d], hyper.V[d], hyper.sigma_p[d]);
  }
  for (std::size_t m = 0; m < corpus.docs.size(); ++m) {
    const Document& doc = corpus.docs[m];
    const DocState& s = states[m];
    if (s.resp.size() != D) throw std::domain_error("m_step: state view count mismatch");
    for (std::size_t d = 0; d < D; ++d) {
      const auto& words = doc.views[d];
      if (s.resp[d].rows() != words.size() || s.resp[d].cols() != hyper.topics_in_view(d)) {
        throw std::domain_error("m_step: responsibility shape mismatch");
      }
      for (std::size_t n = 0; n < words.size(); ++n) {
        const double c = words[n].count;
        const std::uint32_t v = words[n].word;
        const auto row = s.resp[d].row(n);
        for (std::size_t k = 0; k < K; ++k) g.shared[d](k, v) += c * row[k];
        for (std::size_t t = 0; t < hyper.T[d]; ++t) g.priv[d](t, v) += c * row[K + t];
      }
    }
  }
  return g;
}

namespace detail {

/// E_q[log Dir(x | prior)] - E_q[log Dir(x | post)] with symmetric prior.
inline double dirichlet_kl_term(double prior, std::span<const double> post, std::span<const double> elog) {
  double v = -log_multivariate_beta(prior, post.size()) + log_multivariate_beta(post);
  for (std::size_t i = 0; i < post.size(); ++i) v += (prior - post[i]) * elog[i];
  return v;
}

inline double beta_kl_term(BetaParams prior, BetaParams post) {
  const double elog_a = beta_log_expectation_first(post);
  const double elog_b = beta_log_expectation_second(post);
  const double prior_lb = std::lgamma(prior.a) + std::lgamma(prior.b) - std::lgamma(prior.a + prior.b);
  const double post_lb = std::lgamma(post.a) + std::lgamma(post.b) - std::lgamma(post.a + post.b);
  return -prior_lb + post_lb + (prior.a - post.a) * elog_a + (prior.b - post.b) * elog_b;
}

}  // namespace detail

/// Terms of the ELBO that depend only on the global word parameters.
inline double global_elbo(const GlobalParams& globals, const ExpectedLogTopics& elog, const Hyperparams& hyper) {
  double total = 0.0;
  for (std::size_t d = 0; d < hyper.num_views(); ++d) {
    for (std::size_t k = 0; k < hyper.K; ++k) {
      total += detail::dirichlet_kl_term(hyper.sigma_s[d], globals.shared[d].row(k), elog.shared[d].row(k));
    }
    for (std::size_t t = 0; t < hyper.T[d]; ++t) {
      total += detail::dirichlet_kl_term(hyper.sigma_p[d], globals.priv[d].row(t), elog.priv[d].row(t));
    }
  }
  return total;
}

/// Per-document ELBO contribution: document Dirichlets, partition Betas,
/// topic assignments through the concatenated mixture, word likelihoods and
/// responsibility entropies. Views without private topics carry no partition.
inline double document_elbo(const Document& doc, const DocState& state, const ExpectedLogTopics& elog,
                            const Hyperparams& hyper) {
  const std::size_t K = hyper.K;
  const auto elog_theta = dirichlet_log_expectation(state.gamma);
  double total = detail::dirichlet_kl_term(hyper.alpha_s, state.gamma, elog_theta);
  for (std::size_t d = 0; d < hyper.num_views(); ++d) {
    const std::size_t Td = hyper.T[d];
    std::vector<double> elog_kappa;
    double elog_rho = 0.0, elog_one_minus_rho = 0.0;
    if (Td > 0) {
      elog_kappa = dirichlet_log_expectation(state.delta[d]);
      total += detail::dirichlet_kl_term(hyper.alpha_p[d], state.delta[d], elog_kappa);
      total += detail::beta_kl_term(hyper.iota[d], state.r[d]);
      elog_rho = detail::beta_log_expectation_first(state.r[d]);
      elog_one_minus_rho = detail::beta_log_expectation_second(state.r[d]);
    }
    const auto& words = doc.views[d];
    for (std::size_t n = 0; n < words.size(); ++n) {
      const double c = words[n].count;
      const std::uint32_t v = words[n].word;
      const auto row = state.resp[d].row(n);
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        if (row[k] <= 0.0) continue;
        acc += row[k] * (elog_theta[k] + elog_rho + elog.shared[d](k, v) - std::log(row[k]));
      }
      for (std::size_t t = 0; t < Td; ++t) {
        const double p = row[K + t];
        if (p <= 0.0) continue;
        acc += p * (elog_kappa[t] + elog_one_minus_rho + elog.priv[d](t, v) - std::log(p));
      }
      total += c * acc;
    }
  }
  return total;
}

inline double compute_elbo(const Corpus& corpus, std::span<const DocState> states, const GlobalParams& globals,
                           const Hyperparams& hyper, std::size_t threads = 1) {
  if (states.size() != corpus.docs.size()) throw std::domain_error("compute_elbo: one state per document required");
  validate_globals(globals, hyper);
  const auto elog = ExpectedLogTopics::from(globals);
  std::vector<double> per_doc(corpus.docs.size());
  parallel_for(corpus.docs.size(), threads,
               [&](std::size_t m) { per_doc[m] = document_elbo(corpus.docs[m], states[m], elog, hyper); });
  double total = global_elbo(globals, elog, hyper);
  for (double v : per_doc) total += v;  // fixed document order
  return total;
}

struct TrainResult {
  Model model;
  std::vector<DocState> states;  // final per-document states
  std::vector<std::vector<double>> traces;  // every EM trace run, stage fits and discarded restarts included
};

namespace detail {

/// Tempered iterations over all views; not traced.
inline void warm_up(const Corpus& corpus, const Hyperparams& hyper, const FitConfig& config, GlobalParams& globals,
                    std::vector<DocState>& states) {
  const ViewSet all = ViewSet::all(hyper.num_views());
  for (std::size_t it = 0; it < config.warmup_iters; ++it) {
    double beta = 1.0;
    if (it < config.anneal_iters) {
      beta = config.anneal_start +
             (1.0 - config.anneal_start) * static_cast<double>(it) / static_cast<double>(config.anneal_iters);
    }
    const auto elog = ExpectedLogTopics::from(globals);
    parallel_for(corpus.size(), config.threads, [&](std::size_t m) {
      refine_document(corpus.docs[m], elog, hyper, config, all, states[m], beta);
    });
    globals = m_step(corpus, states, hyper);
  }
}

/// Pearson correlation, 0 when either side is constant.
inline double safe_correlation(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Batch variational EM from the given initial word parameters. After the
/// optional warm-up, each iteration runs the E-step over all documents
/// (warm-started from the previous iteration's states), the M-step, and then
/// records the ELBO. Stops when the relative ELBO change falls below
/// em_rel_tol or after max_em_iters. Only these iterations are traced, so the
/// trace is nondecreasing.
inline TrainResult train_from(const Corpus& corpus, const Hyperparams& hyper, const FitConfig& config,
                              GlobalParams initial) {
  hyper.validate();
  config.validate();
  validate_corpus(corpus, hyper);
  validate_globals(initial, hyper);
  const ViewSet all = ViewSet::all(hyper.num_views());

  TrainResult out;
  out.model.hyper = hyper;
  out.model.globals = std::move(initial);
  out.states.reserve(corpus.size());
  for (const auto& doc : corpus.docs) out.states.push_back(initial_doc_state(doc, hyper));

  detail::warm_up(corpus, hyper, config, out.model.globals, out.states);

  for (std::size_t it = 0; it < config.max_em_iters; ++it) {
    const auto elog = ExpectedLogTopics::from(out.model.globals);
    parallel_for(corpus.size(), config.threads, [&](std::size_t m) {
      refine_document(corpus.docs[m], elog, hyper, config, all, out.states[m]);
    });
    out.model.globals = m_step(corpus, out.states, hyper);
    const double elbo = compute_elbo(corpus, out.states, out.model.globals, hyper, config.threads);
    out.model.elbo_trace.push_back(elbo);
    if (it > 0) {
      const double prev = out.model.elbo_trace[it - 1];
      if (std::abs(elbo - prev) <= config.em_rel_tol * std::abs(prev)) break;
    }
  }
  out.traces = {out.model.elbo_trace};
  return out;
}

/// Initial word parameters from independent single-view fits.
///
/// Every view is first fitted alone as a model with K + T_d shared topics and
/// no private ones. A shared topic is used in the same documents in every
/// view (through theta), a private one is not, so view 0's topics are matched
/// to each other view's by maximum total correlation of per-document usage
/// (expected counts), and the K view-0 topics with the highest summed matched
/// correlation, together with their partners, seed the shared blocks. The
/// remaining topics of each view seed its private block.
inline GlobalParams staged_init(const Corpus& corpus, const Hyperparams& hyper, const FitConfig& config,
                                std::vector<std::vector<double>>* traces = nullptr) {
  hyper.validate();
  config.validate();
  validate_corpus(corpus, hyper);
  const std::size_t D = hyper.num_views();
  const std::size_t M = corpus.size();

  std::vector<Matrix> topics(D), usage(D);  // usage: topic x document
  for (std::size_t d = 0; d < D; ++d) {
    Hyperparams single;
    single.K = hyper.topics_in_view(d);
    single.T = {0};
    single.V = {hyper.V[d]};
    single.alpha_s = hyper.alpha_s;
    single.alpha_p = {hyper.alpha_p[d]};
    single.sigma_s = {hyper.sigma_s[d]};
    single.sigma_p = {hyper.sigma_p[d]};
    single.iota = {hyper.iota[d]};
    Corpus view_corpus;
    view_corpus.V = {hyper.V[d]};
    view_corpus.docs.reserve(M);
    for (const auto& doc : corpus.docs) view_corpus.docs.push_back(Document{{doc.views[d]}, std::nullopt});

    FitConfig stage = config;
    stage.seed = config.seed ^ (0x9e3779b97f4a7c15ULL * (d + 1));
    stage.max_em_iters = config.stage_max_iters;
    stage.em_rel_tol = config.stage_rel_tol;
    TrainResult fit = train_from(view_corpus, single, stage, init_globals(single, stage.seed, stage.init_scale));
    if (traces) traces->push_back(fit.model.elbo_trace);
    topics[d] = std::move(fit.model.globals.shared[0]);
    usage[d] = Matrix(single.K, M);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t j = 0; j < single.K; ++j) usage[d](j, m) = fit.states[m].gamma[j] - hyper.alpha_s;
    }
  }

  const std::size_t n0 = hyper.topics_in_view(0);
  constexpr std::size_t kUnmatched = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> partner(D, std::vector<std::size_t>(n0, kUnmatched));
  std::vector<double> score(n0, 0.0);
  for (std::size_t j = 0; j < n0; ++j) partner[0][j] = j;
  for (std::size_t d = 1; d < D; ++d) {
    const std::size_t nd = hyper.topics_in_view(d);
    const std::size_t n = std::max(n0, nd);
    Matrix corr(n0, nd);
    Matrix cost(n, n, 0.0);
    for (std::size_t i = 0; i < n0; ++i) {
      for (std::size_t j = 0; j < nd; ++j) {
        corr(i, j) = detail::safe_correlation(usage[0].row(i), usage[d].row(j));
        cost(i, j) = -corr(i, j);
      }
    }
    const auto assignment = solve_assignment(cost);
    for (std::size_t i = 0; i < n0; ++i) {
      if (assignment[i] < nd) {
        partner[d][i] = assignment[i];
        score[i] += corr(i, assignment[i]);
      } else {
        score[i] -= 2.0;  // below any matched correlation
      }
    }
  }
  std::vector<std::size_t> order(n0);
  for (std::size_t j = 0; j < n0; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  GlobalParams g;
  g.shared.resize(D);
  g.priv.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t nd = hyper.topics_in_view(d);
    std::vector<std::size_t> chosen(hyper.K, kUnmatched);
    std::vector<bool> used(nd, false);
    for (std::size_t k = 0; k < hyper.K; ++k) {
      const std::size_t j = partner[d][order[k]];
      if (j != kUnmatched && !used[j]) {
        chosen[k] = j;
        used[j] = true;
      }
    }
    std::size_t next_free = 0;
    for (std::size_t k = 0; k < hyper.K; ++k) {
      if (chosen[k] != kUnmatched) continue;
      while (used[next_free]) ++next_free;
      chosen[k] = next_free;
      used[next_free] = true;
    }
    g.shared[d] = Matrix(hyper.K, hyper.V[d]);
    for (std::size_t k = 0; k < hyper.K; ++k) {
      std::copy_n(topics[d].row(chosen[k]).begin(), hyper.V[d], g.shared[d].row(k).begin());
    }
    g.priv[d] = Matrix(hyper.T[d], hyper.V[d]);
    std::size_t t = 0;
    for (std::size_t j = 0; j < nd; ++j) {
      if (used[j]) continue;
      std::copy_n(topics[d].row(j).begin(), hyper.V[d], g.priv[d].row(t).begin());
      ++t;
    }
  }
  return g;
}

/// Runs config.restarts independent fits (seeds seed, seed + 1, ...) and
/// keeps the one with the highest final ELBO; ties keep the earliest.
/// Multi-view models start from staged_init when config.staged is set, and
/// then skip the warm-up; otherwise each fit starts from init_globals.
inline TrainResult train_with_states(const Corpus& corpus, const Hyperparams& hyper, const FitConfig& config) {
  config.validate();
  const bool staged = config.staged && hyper.num_views() > 1;
  TrainResult best;
  std::vector<std::vector<double>> traces;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    FitConfig run = config;
    run.seed = config.seed + r;
    TrainResult res;
    if (staged) {
      GlobalParams init = staged_init(corpus, hyper, run, &traces);
      run.warmup_iters = 0;
      run.anneal_iters = 0;
      res = train_from(corpus, hyper, run, std::move(init));
    } else {
      res = train_from(corpus, hyper, run, init_globals(hyper, run.seed, run.init_scale));
    }
    traces.push_back(res.model.elbo_trace);
    if (r == 0 || res.model.elbo_trace.back() > best.model.elbo_trace.back()) best = std::move(res);
  }
  best.traces = std::move(traces);
  return best;
}

inline Model train(const Corpus& corpus, const Hyperparams& hyper, const FitConfig& config) {
  return train_with_states(corpus, hyper, config).model;
}

/// Test-time E-step for every document with the model's globals frozen.
inline std::vector<DocState> infer_states(const Corpus& corpus, const Model& model, const ViewSet& views,
                                          const FitConfig& config) {
  validate_corpus(corpus, model.hyper);
  validate_globals(model.globals, model.hyper);
  if (views.empty()) throw std::domain_error("fold-in: at least one view must be present");
  const auto elog = ExpectedLogTopics::from(model.globals);
  std::vector<DocState> states(corpus.size());
  parallel_for(corpus.size(), config.threads, [&](std::size_t m) {
    states[m] = e_step_document(corpus.docs[m], elog, model.hyper, config, views);
  });
  return states;
}

/// Normalized gamma: expected shared topic proportions.
inline std::vector<double> shared_representation(const DocState& state) {
  std::vector<double> out(state.gamma);
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

/// Normalized delta of one view: expected private topic proportions.
inline std::vector<double> private_representation(const DocState& state, std::size_t view) {
  std::vector<double> out(state.delta.at(view));
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

/// Posterior mean of the partition value of one view.
inline double partition_estimate(const DocState& state, std::size_t view) {
  const BetaParams r = state.r.at(view);
  return r.a / (r.a + r.b);
}

inline std::vector<double> fold_in(const Document& doc, const Model& model, const ViewSet& views,
                                   const FitConfig& config) {
  if (views.empty()) throw std::domain_error("fold-in: at least one view must be present");
  return shared_representation(e_step_document(doc, model.globals, model.hyper, config, views));
}

}  // namespace ibtm
