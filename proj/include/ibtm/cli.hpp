#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ibtm/eval.hpp"
#include "ibtm/inference.hpp"
#include "ibtm/io.hpp"
#include "ibtm/model.hpp"

namespace ibtm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or runtime error
inline constexpr int kExitUsage = 2;

/// Bad flag values or combinations.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered `key=value` lines printed on stdout after every command.
class Manifest {
 public:
  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream s;
    if constexpr (std::is_floating_point_v<T>) {
      s << ibtm::detail::format_shortest(value);
    } else {
      s << value;
    }
    entries_.emplace_back(key, s.str());
  }
  void print(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

namespace detail {

using ibtm::detail::parse_double;
using ibtm::detail::parse_int;
using ibtm::detail::split;

inline std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  for (auto part : split(text, ',')) {
    const auto v = parse_int<std::size_t>(part);
    if (!v) throw UsageError(flag + ": expected comma-separated nonnegative integers, got '" + text + "'");
    out.push_back(*v);
  }
  return out;
}

/// `a:b` pairs separated by commas.
inline std::vector<BetaParams> parse_iota(const std::string& text) {
  std::vector<BetaParams> out;
  for (auto part : split(text, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string_view::npos) throw UsageError("--iota: expected a:b pairs, got '" + text + "'");
    const auto a = parse_double(part.substr(0, colon));
    const auto b = parse_double(part.substr(colon + 1));
    if (!a || !b) throw UsageError("--iota: expected a:b pairs, got '" + text + "'");
    out.push_back({*a, *b});
  }
  return out;
}

/// One value for every view, or a single value repeated.
template <typename T>
std::vector<T> per_view(std::vector<T> values, std::size_t D, const std::string& flag) {
  if (values.size() == 1 && D > 1) values.assign(D, values.front());
  if (values.size() != D) {
    throw UsageError(flag + ": expected 1 or " + std::to_string(D) + " values, got " + std::to_string(values.size()));
  }
  return values;
}

inline std::string sizes_text(const std::vector<std::size_t>& xs) {
  return ibtm::detail::join(xs, ',', [](std::size_t v) { return std::to_string(v); });
}

inline std::string iota_text(const std::vector<BetaParams>& xs) {
  return ibtm::detail::join(xs, ',', [](BetaParams p) {
    return ibtm::detail::format_shortest(p.a) + ":" + ibtm::detail::format_shortest(p.b);
  });
}

inline Hyperparams build_hyper(std::size_t K, std::vector<std::size_t> T, std::vector<std::size_t> V, double alpha,
                               double sigma, const std::vector<BetaParams>& iota) {
  const std::size_t D = V.size();
  Hyperparams h = Hyperparams::uniform(K, per_view(std::move(T), D, "--T"), std::move(V), alpha, sigma);
  h.iota = per_view(iota, D, "--iota");
  return h;
}

/// Zero-based view indices from a 1-based list such as "1,2".
inline ViewSet parse_views(const std::string& text, std::size_t D) {
  if (text.empty()) return ViewSet::all(D);
  std::vector<std::size_t> zero_based;
  for (std::size_t v : parse_sizes(text, "--views")) {
    if (v < 1 || v > D) throw ValidationError("--views: view " + std::to_string(v) + " does not exist");
    zero_based.push_back(v - 1);
  }
  return ViewSet::of(D, zero_based);
}

inline std::vector<int> require_labels(const Representations& reps, const std::string& what) {
  std::vector<int> labels;
  for (const auto& l : reps.labels) {
    if (!l) throw ValidationError(what + ": every row needs a label");
    labels.push_back(*l);
  }
  return labels;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::size_t docs = 0;
  std::string tokens, T, V;
  std::size_t K = 0;
  std::string iota = "5:5";
  double alpha = 0.8;
  double sigma = 0.6;
  std::uint64_t seed = 0;
  std::string topics = "prior";
  double peak = 0.8;
  std::size_t classes = 0;
  double class_low = 0.2;
  double class_high = 4.0;
  std::string out, truth;
};

inline Manifest cmd_generate(const GenerateArgs& a) {
  detail::Stopwatch clock;
  auto V = detail::parse_sizes(a.V, "--V");
  const std::size_t D = V.size();
  auto tokens = detail::per_view(detail::parse_sizes(a.tokens, "--tokens"), D, "--tokens");
  Hyperparams h = detail::build_hyper(a.K, detail::parse_sizes(a.T, "--T"), V, a.alpha, a.sigma,
                                      detail::parse_iota(a.iota));
  if (a.docs < 1) throw UsageError("--docs must be >= 1");
  if (a.topics != "prior" && a.topics != "banded") throw UsageError("--topics must be 'prior' or 'banded'");
  std::vector<ClassProfile> profiles;
  for (std::size_t c = 0; c < a.classes; ++c) {
    ClassProfile p;
    p.shared_alpha.assign(h.K, a.class_low);
    for (std::size_t k = c; k < h.K; k += a.classes) p.shared_alpha[k] = a.class_high;
    profiles.push_back(std::move(p));
  }
  TopicOverrides banded;
  if (a.topics == "banded") banded = banded_topics(h, a.peak);
  auto [corpus, truth] =
      sample_corpus(h, a.docs, tokens, a.seed, profiles, a.topics == "banded" ? &banded : nullptr);
  save_corpus(corpus, a.out);
  save_truth(truth, a.truth);

  Manifest m;
  m.add("command", "generate");
  m.add("docs", a.docs);
  m.add("tokens", detail::sizes_text(tokens));
  m.add("K", h.K);
  m.add("T", detail::sizes_text(h.T));
  m.add("V", detail::sizes_text(h.V));
  m.add("iota", detail::iota_text(h.iota));
  m.add("alpha", a.alpha);
  m.add("sigma", a.sigma);
  m.add("topics", a.topics);
  if (a.topics == "banded") m.add("peak", a.peak);
  m.add("classes", a.classes);
  m.add("seed", a.seed);
  m.add("out", a.out);
  m.add("truth", a.truth);
  m.add("wall_clock_s", clock.seconds());
  return m;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string corpus, out, trace;
  std::size_t K = 0;
  std::string T;
  bool lda = false;
  double alpha = 0.8;
  double sigma = 0.6;
  std::string iota = "5:5";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t restarts = 1;
  std::size_t max_iters = 200;
  double tol = 1e-5;
  bool no_staged = false;
};

inline Manifest cmd_train(const TrainArgs& a) {
  detail::Stopwatch clock;
  if (a.T.empty() && !a.lda) throw UsageError("--T is required unless --lda is given");
  const Corpus corpus = load_corpus(a.corpus);
  const std::size_t D = corpus.num_views();
  std::vector<std::size_t> T = a.T.empty() ? std::vector<std::size_t>(D, 0) : detail::parse_sizes(a.T, "--T");
  if (T.size() != 1 && T.size() != D) {
    throw ValidationError("--T has " + std::to_string(T.size()) + " entries but the corpus has " + std::to_string(D) +
                          " views");
  }
  const auto iota = detail::parse_iota(a.iota);
  if (iota.size() != 1 && iota.size() != D) throw ValidationError("--iota does not match the corpus view count");
  Hyperparams h = detail::build_hyper(a.K, T, corpus.V, a.alpha, a.sigma, iota);
  if (a.lda) h = reduce_to_lda(h);

  FitConfig cfg;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.restarts = a.restarts;
  cfg.max_em_iters = a.max_iters;
  cfg.em_rel_tol = a.tol;
  cfg.staged = !a.no_staged;
  const Model model = train(corpus, h, cfg);
  save_model(model, a.out);

  const std::string trace_path = a.trace.empty() ? a.out + ".trace.csv" : a.trace;
  auto trace = ibtm::detail::open_output(trace_path);
  trace << "iteration,elbo\n";
  for (std::size_t i = 0; i < model.elbo_trace.size(); ++i) {
    trace << (i + 1) << ',' << ibtm::detail::format_exact(model.elbo_trace[i]) << '\n';
  }
  ibtm::detail::finish_output(trace, trace_path);

  Manifest m;
  m.add("command", "train");
  m.add("corpus", a.corpus);
  m.add("docs", corpus.size());
  m.add("K", h.K);
  m.add("T", detail::sizes_text(h.T));
  m.add("V", detail::sizes_text(h.V));
  m.add("alpha", a.alpha);
  m.add("sigma", a.sigma);
  m.add("iota", detail::iota_text(h.iota));
  m.add("lda", a.lda ? "true" : "false");
  m.add("staged", cfg.staged ? "true" : "false");
  m.add("restarts", a.restarts);
  m.add("max_iters", a.max_iters);
  m.add("tol", a.tol);
  m.add("threads", a.threads);
  m.add("seed", a.seed);
  m.add("out", a.out);
  m.add("trace", trace_path);
  m.add("iterations", model.elbo_trace.size());
  m.add("final_elbo", model.elbo_trace.back());
  m.add("wall_clock_s", clock.seconds());
  return m;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string model, corpus, out;
  std::string views;
  std::string space = "shared";
  std::size_t threads = 1;
};

inline Manifest cmd_infer(const InferArgs& a) {
  detail::Stopwatch clock;
  const Model model = load_model(a.model);
  const Corpus corpus = load_corpus(a.corpus);
  const std::size_t D = model.hyper.num_views();
  if (corpus.V != model.hyper.V) throw ValidationError("corpus vocabulary sizes do not match the model");
  const ViewSet views = detail::parse_views(a.views, D);

  std::optional<std::size_t> private_view;
  if (a.space != "shared") {
    if (!a.space.starts_with("private:")) throw UsageError("--space must be 'shared' or 'private:<view>'");
    const auto v = ibtm::detail::parse_int<std::size_t>(std::string_view(a.space).substr(8));
    if (!v || *v < 1 || *v > D) throw ValidationError("--space: view does not exist");
    if (!views.contains(*v - 1)) throw ValidationError("--space: view " + std::to_string(*v) + " is not in --views");
    if (model.hyper.T[*v - 1] == 0) throw ValidationError("--space: view has no private topics");
    private_view = *v - 1;
  }

  FitConfig cfg;
  cfg.threads = a.threads;
  const auto states = infer_states(corpus, model, views, cfg);
  Representations reps;
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    reps.doc_ids.push_back(m);
    reps.labels.push_back(corpus.docs[m].label);
    reps.rows.push_back(private_view ? private_representation(states[m], *private_view)
                                     : shared_representation(states[m]));
  }
  const std::size_t dims = private_view ? model.hyper.T[*private_view] : model.hyper.K;
  save_representations(reps, dims, a.out);

  Manifest m;
  m.add("command", "infer");
  m.add("model", a.model);
  m.add("corpus", a.corpus);
  m.add("views", a.views.empty() ? std::string("all") : a.views);
  m.add("space", a.space);
  m.add("threads", a.threads);
  m.add("out", a.out);
  m.add("rows", reps.size());
  m.add("dims", dims);
  m.add("wall_clock_s", clock.seconds());
  return m;
}

// ---------------------------------------------------------------------------
// eval

struct RecoveryArgs {
  std::string truth, model, corpus;
  std::size_t threads = 1;
};

inline Manifest cmd_eval_recovery(const RecoveryArgs& a) {
  detail::Stopwatch clock;
  const GroundTruth truth = load_truth(a.truth);
  const Model model = load_model(a.model);
  const Hyperparams& h = model.hyper;
  const std::size_t D = h.num_views();
  if (truth.shared_topics.size() != D) throw ValidationError("ground truth and model have different view counts");

  Manifest m;
  m.add("command", "eval recovery");
  m.add("truth", a.truth);
  m.add("model", a.model);
  double worst = 0.0;
  for (std::size_t d = 0; d < D; ++d) {
    const std::string v = std::to_string(d + 1);
    const double s = match_topics(truth.shared_topics[d], normalize_rows(model.globals.shared[d])).mean_tv();
    m.add("shared_tv_" + v, s);
    worst = std::max(worst, s);
    if (h.T[d] > 0) {
      const double p = match_topics(truth.private_topics[d], normalize_rows(model.globals.priv[d])).mean_tv();
      m.add("private_tv_" + v, p);
      worst = std::max(worst, p);
    }
  }
  m.add("max_block_tv", worst);

  if (!a.corpus.empty()) {
    const Corpus corpus = load_corpus(a.corpus);
    if (corpus.size() != truth.theta.rows()) throw ValidationError("corpus and ground truth differ in document count");
    FitConfig cfg;
    cfg.threads = a.threads;
    const auto states = infer_states(corpus, model, ViewSet::all(D), cfg);
    for (std::size_t d = 0; d < D; ++d) {
      if (h.T[d] == 0) continue;
      std::vector<double> est;
      for (const auto& s : states) est.push_back(partition_estimate(s, d));
      m.add("partition_corr_" + std::to_string(d + 1), partition_recovery_corr(truth.partition[d], est));
    }
  }
  m.add("wall_clock_s", clock.seconds());
  return m;
}

struct ClassifyArgs {
  std::string train, test;
  std::uint64_t seed = 0;
  double l2 = 1e-3;
  std::size_t iters = 500;
};

inline Manifest cmd_eval_classify(const ClassifyArgs& a) {
  detail::Stopwatch clock;
  const Representations all = load_representations(a.train);
  const auto labels = detail::require_labels(all, a.train);
  std::vector<std::vector<double>> xtr, xte;
  std::vector<int> ytr, yte;
  if (a.test.empty()) {
    const Split split = stratified_split(labels, a.seed);
    for (std::size_t i : split.train) {
      xtr.push_back(all.rows[i]);
      ytr.push_back(labels[i]);
    }
    for (std::size_t i : split.test) {
      xte.push_back(all.rows[i]);
      yte.push_back(labels[i]);
    }
  } else {
    xtr = all.rows;
    ytr = labels;
    const Representations test = load_representations(a.test);
    if (test.dims() != all.dims()) throw ValidationError("train and test representations differ in dimension");
    xte = test.rows;
    yte = detail::require_labels(test, a.test);
  }
  if (xte.empty()) throw ValidationError("no test rows");
  SoftmaxOptions opts;
  opts.l2 = a.l2;
  opts.iters = a.iters;
  const Classifier clf = train_softmax(xtr, ytr, opts);

  Manifest m;
  m.add("command", "eval classify");
  m.add("train", a.train);
  m.add("test", a.test.empty() ? std::string("split") : a.test);
  m.add("seed", a.seed);
  m.add("l2", a.l2);
  m.add("iters", a.iters);
  m.add("train_size", xtr.size());
  m.add("test_size", xte.size());
  m.add("accuracy", accuracy(clf, xte, yte));
  m.add("wall_clock_s", clock.seconds());
  return m;
}

struct PcaArgs {
  std::string reps, out;
  std::size_t dims = 3;
};

inline Manifest cmd_eval_pca(const PcaArgs& a) {
  detail::Stopwatch clock;
  const Representations reps = load_representations(a.reps);
  if (reps.size() < 2) throw ValidationError("PCA needs at least two rows");
  const PcaResult pca = pca_project(reps.rows, std::min(a.dims, reps.dims()));
  const std::size_t dims = pca.components.rows();
  Representations out;
  out.doc_ids = reps.doc_ids;
  out.labels = reps.labels;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    auto row = pca.projected.row(i);
    out.rows.emplace_back(row.begin(), row.end());
  }
  save_representations(out, dims, a.out);

  Manifest m;
  m.add("command", "eval pca");
  m.add("reps", a.reps);
  m.add("out", a.out);
  m.add("dims", dims);
  for (std::size_t j = 0; j < dims; ++j) m.add("eigenvalue_" + std::to_string(j), pca.eigenvalues[j]);
  m.add("wall_clock_s", clock.seconds());
  return m;
}

// ---------------------------------------------------------------------------

/// Full command line, argv[0] included. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shared/private multi-view topic model"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Sample a synthetic corpus and its ground truth");
  g->add_option("--docs", gen.docs, "Number of documents")->required();
  g->add_option("--tokens", gen.tokens, "Tokens per view, e.g. 100,100")->required();
  g->add_option("--K", gen.K, "Shared topics")->required();
  g->add_option("--T", gen.T, "Private topics per view, e.g. 5,5")->required();
  g->add_option("--V", gen.V, "Vocabulary size per view, e.g. 50,50")->required();
  g->add_option("--iota", gen.iota, "Partition prior a:b per view")->capture_default_str();
  g->add_option("--alpha", gen.alpha, "Dirichlet prior on topic proportions")->capture_default_str();
  g->add_option("--sigma", gen.sigma, "Dirichlet prior on topic-word distributions")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--topics", gen.topics, "prior (Dirichlet draws) or banded")->capture_default_str();
  g->add_option("--peak", gen.peak, "Mass of a banded topic on its own block")->capture_default_str();
  g->add_option("--classes", gen.classes, "Labelled classes with their own shared-topic profile")->capture_default_str();
  g->add_option("--class-low", gen.class_low)->capture_default_str();
  g->add_option("--class-high", gen.class_high)->capture_default_str();
  g->add_option("--out", gen.out, "Corpus file")->required();
  g->add_option("--truth", gen.truth, "Ground-truth file")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit a model by variational EM");
  t->add_option("--corpus", tr.corpus)->required();
  t->add_option("--out", tr.out, "Model file")->required();
  t->add_option("--trace", tr.trace, "ELBO trace CSV (default <out>.trace.csv)");
  t->add_option("--K", tr.K, "Shared topics")->required();
  t->add_option("--T", tr.T, "Private topics per view");
  t->add_flag("--lda", tr.lda, "No private topics");
  t->add_option("--alpha", tr.alpha)->capture_default_str();
  t->add_option("--sigma", tr.sigma)->capture_default_str();
  t->add_option("--iota", tr.iota)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--threads", tr.threads)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--restarts", tr.restarts)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--max-iters", tr.max_iters)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--tol", tr.tol, "Relative ELBO change that stops EM")->capture_default_str();
  t->add_flag("--no-staged", tr.no_staged, "Start from random word parameters");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Fold documents into a trained model");
  i->add_option("--model", inf.model)->required();
  i->add_option("--corpus", inf.corpus)->required();
  i->add_option("--out", inf.out, "Representation CSV")->required();
  i->add_option("--views", inf.views, "Observed views, 1-based (default all)");
  i->add_option("--space", inf.space, "shared or private:<view>")->capture_default_str();
  i->add_option("--threads", inf.threads)->capture_default_str()->check(CLI::PositiveNumber);

  auto* e = app.add_subcommand("eval", "Evaluate models and representations");
  e->require_subcommand(1);
  RecoveryArgs rec;
  auto* er = e->add_subcommand("recovery", "Compare a model with synthetic ground truth");
  er->add_option("--truth", rec.truth)->required();
  er->add_option("--model", rec.model)->required();
  er->add_option("--corpus", rec.corpus, "Also report partition correlations");
  er->add_option("--threads", rec.threads)->capture_default_str()->check(CLI::PositiveNumber);
  ClassifyArgs cls;
  auto* ec = e->add_subcommand("classify", "Softmax regression on representations");
  ec->add_option("--train", cls.train)->required();
  ec->add_option("--test", cls.test, "Test CSV (default: stratified half of --train)");
  ec->add_option("--seed", cls.seed)->capture_default_str();
  ec->add_option("--l2", cls.l2)->capture_default_str();
  ec->add_option("--iters", cls.iters)->capture_default_str();
  PcaArgs pca;
  auto* ep = e->add_subcommand("pca", "Project representations onto principal components");
  ep->add_option("--reps", pca.reps)->required();
  ep->add_option("--out", pca.out)->required();
  ep->add_option("--dims", pca.dims)->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    Manifest m;
    if (*g) m = cmd_generate(gen);
    if (*t) m = cmd_train(tr);
    if (*i) m = cmd_infer(inf);
    if (*er) m = cmd_eval_recovery(rec);
    if (*ec) m = cmd_eval_classify(cls);
    if (*ep) m = cmd_eval_pca(pca);
    m.add("exit_code", kExitOk);
    m.print(out);
    return kExitOk;
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& ex) {
    err << "parse error: " << ex.what() << '\n';
  } catch (const ValidationError& ex) {
    err << "validation error: " << ex.what() << '\n';
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
  }
  return kExitFailure;
}

}  // namespace ibtm::cli
