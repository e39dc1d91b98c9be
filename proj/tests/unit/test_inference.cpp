#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ibtm/inference.hpp"
#include "oracles.hpp"
#include "random_cases.hpp"

using namespace ibtm;

namespace {

Hyperparams one_shared_one_private() { return Hyperparams::uniform(1, {1}, {2}, 1.0, 1.0, {1.0, 1.0}); }

GlobalParams rows(const Hyperparams& h, std::vector<double> shared, std::vector<double> priv) {
  GlobalParams g = init_globals(h, 0, 0.0);
  std::copy(shared.begin(), shared.end(), g.shared[0].row(0).begin());
  std::copy(priv.begin(), priv.end(), g.priv[0].row(0).begin());
  return g;
}

DocState unit_state(const Document& doc, const Hyperparams& h) {
  DocState s = initial_doc_state(doc, h);
  s.gamma = {1.0};
  s.delta[0] = {1.0};
  s.r[0] = {1.0, 1.0};
  return s;
}

Corpus small_corpus(std::uint64_t seed, std::size_t docs = 40) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const std::vector<std::size_t> n{30, 30};
  return sample_corpus(h, docs, n, seed).first;
}

}  // namespace

// ---------------------------------------------------------------------------
// token responsibilities

TEST(Responsibilities, SingleSharedTopicTakesEverything) {
  const auto h = Hyperparams::uniform(1, {0}, {4});
  const Document doc{{{{0, 2.0}, {3, 1.0}}}, std::nullopt};
  const GlobalParams g = init_globals(h, 1);
  const Matrix r = update_token_responsibilities(doc, initial_doc_state(doc, h), g, h, 0);
  ASSERT_EQ(r.rows(), 2u);
  ASSERT_EQ(r.cols(), 1u);
  EXPECT_EQ(r(0, 0), 1.0);
  EXPECT_EQ(r(1, 0), 1.0);
}

TEST(Responsibilities, SymmetricBranchesSplitEvenly) {
  const auto h = one_shared_one_private();
  const Document doc{{{{0, 1.0}}}, std::nullopt};
  const Matrix r = update_token_responsibilities(doc, unit_state(doc, h), rows(h, {1, 1}, {1, 1}), h, 0);
  EXPECT_NEAR(r(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(r(0, 1), 0.5, 1e-15);
}

TEST(Responsibilities, ScalarOracle) {
  const auto h = one_shared_one_private();
  const Document doc{{{{0, 1.0}}}, std::nullopt};
  const Matrix r = update_token_responsibilities(doc, unit_state(doc, h), rows(h, {3, 1}, {1, 1}), h, 0);
  const double expected = oracle::scalar_responsibility_example();
  EXPECT_NEAR(expected, 0.6608, 5e-5);
  EXPECT_NEAR(r(0, 0), expected, 1e-10);
  EXPECT_NEAR(r(0, 1), 1.0 - expected, 1e-10);
}

TEST(Responsibilities, OutOfVocabularyThrows) {
  const auto h = one_shared_one_private();
  const Document doc{{{{2, 1.0}}}, std::nullopt};
  EXPECT_THROW(update_token_responsibilities(doc, unit_state(Document{{{}}, std::nullopt}, h),
                                             rows(h, {1, 1}, {1, 1}), h, 0),
               std::domain_error);
}

TEST(Responsibilities, MassConservationProperty) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const auto c = testsupport::random_case(rng);
    const std::string err = testsupport::check_invariants(c);
    ASSERT_TRUE(err.empty()) << "case " << i << ": " << err;
  }
}

TEST(PartitionParams, CountsSharedAndPrivateMass) {
  const auto h = Hyperparams::uniform(1, {1}, {3}, 0.8, 0.6, {2.0, 3.0});
  const Document doc{{{{0, 2.0}, {2, 4.0}}}, std::nullopt};
  DocState s = initial_doc_state(doc, h);
  s.resp[0](0, 0) = 0.25;
  s.resp[0](0, 1) = 0.75;
  s.resp[0](1, 0) = 1.0;
  s.resp[0](1, 1) = 0.0;
  const BetaParams r = update_partition_params(doc, s, h, 0);
  EXPECT_DOUBLE_EQ(r.a, 2.0 + 0.5 + 4.0);
  EXPECT_DOUBLE_EQ(r.b, 3.0 + 1.5);
  const auto p = update_doc_topic_params(doc, s, h);
  EXPECT_DOUBLE_EQ(p.gamma[0], 0.8 + 4.5);
  EXPECT_DOUBLE_EQ(p.delta[0][0], 0.8 + 1.5);
}

// ---------------------------------------------------------------------------
// document E-step

TEST(EStep, EmptyDocumentKeepsPriors) {
  const auto h = Hyperparams::uniform(3, {2}, {5});
  const Document doc{{{}}, std::nullopt};
  const DocState s = e_step_document(doc, init_globals(h, 3), h, FitConfig{}, ViewSet::all(1));
  EXPECT_EQ(s.gamma, std::vector<double>(3, 0.8));
  EXPECT_EQ(s.r[0], (BetaParams{5.0, 5.0}));
}

TEST(EStep, MissingViewIsIgnored) {
  const auto h = Hyperparams::uniform(3, {2, 2}, {8, 8});
  const Corpus c = sample_corpus(h, 1, std::vector<std::size_t>{20, 20}, 5).first;
  const GlobalParams g = init_globals(h, 4, 1.0);
  const std::vector<std::size_t> first{0};
  const DocState partial = e_step_document(c.docs[0], g, h, FitConfig{}, ViewSet::of(2, first));
  Document truncated = c.docs[0];
  truncated.views[1].clear();
  const DocState reference = e_step_document(truncated, g, h, FitConfig{}, ViewSet::all(2));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(partial.gamma[k], reference.gamma[k], 1e-12);
  EXPECT_EQ(partial.r[1], h.iota[1]);
  EXPECT_EQ(partial.delta[1], std::vector<double>(2, 0.8));
}

TEST(EStep, RequiresAView) {
  const auto h = Hyperparams::uniform(2, {1}, {5});
  const Document doc{{{{1, 1.0}}}, std::nullopt};
  const std::vector<std::size_t> none;
  EXPECT_THROW(e_step_document(doc, init_globals(h, 0), h, FitConfig{}, ViewSet::of(1, none)), std::domain_error);
  const std::vector<std::size_t> missing{1};
  EXPECT_THROW(ViewSet::of(1, missing), std::domain_error);
}

TEST(EStep, ShiftsMassTowardsMatchingTopic) {
  const auto h = Hyperparams::uniform(2, {0}, {4});
  GlobalParams g = init_globals(h, 0, 0.0);
  g.shared[0](0, 0) = 50.0;  // topic 0 favors word 0
  g.shared[0](1, 3) = 50.0;  // topic 1 favors word 3
  const Document doc{{{{0, 10.0}}}, std::nullopt};
  const DocState s = e_step_document(doc, g, h, FitConfig{}, ViewSet::all(1));
  EXPECT_GT(s.gamma[0], 9.0);
  EXPECT_LT(s.gamma[1], 2.0);
}

TEST(EStep, SharedTopicRelabelingPermutesState) {
  const auto h = Hyperparams::uniform(3, {2, 1}, {6, 5});
  const Corpus c = sample_corpus(h, 1, std::vector<std::size_t>{25, 25}, 17).first;
  const GlobalParams g = init_globals(h, 8, 5.0);
  const std::vector<std::size_t> perm{2, 0, 1};
  GlobalParams p = g;
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t k = 0; k < 3; ++k) {
      std::copy_n(g.shared[d].row(perm[k]).begin(), h.V[d], p.shared[d].row(k).begin());
    }
  }
  FitConfig cfg;
  cfg.doc_tol = 1e-12;
  cfg.max_doc_iters = 1000;
  const DocState a = e_step_document(c.docs[0], g, h, cfg, ViewSet::all(2));
  const DocState b = e_step_document(c.docs[0], p, h, cfg, ViewSet::all(2));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(b.gamma[k], a.gamma[perm[k]], 1e-9);
  const std::vector<DocState> sa{a}, sb{b};
  EXPECT_NEAR(compute_elbo(c, sa, g, h), compute_elbo(c, sb, p, h), 1e-9);
}

// ---------------------------------------------------------------------------
// ELBO

TEST(Elbo, BoundsExactMarginal) {
  const auto h = Hyperparams::uniform(1, {1}, {2}, 0.8, 0.6, {2.0, 1.5});
  const double exact = oracle::exact_log_marginal({0, 1}, 2, 0.6, 2.0, 1.5);
  const Corpus corpus{{2}, {Document{{{{0, 1.0}, {1, 1.0}}}, std::nullopt}}};
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.05, 4.0);
  for (int i = 0; i < 200; ++i) {
    GlobalParams g = init_globals(h, 0, 0.0);
    for (auto* blocks : {&g.shared, &g.priv}) {
      for (double& x : (*blocks)[0].data()) x = u(rng);
    }
    DocState s = initial_doc_state(corpus.docs[0], h);
    s.gamma = {u(rng)};
    s.delta[0] = {u(rng)};
    s.r[0] = {u(rng), u(rng)};
    for (std::size_t n = 0; n < 2; ++n) {
      const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      s.resp[0](n, 0) = p;
      s.resp[0](n, 1) = 1.0 - p;
    }
    const std::vector<DocState> states{s};
    EXPECT_LE(compute_elbo(corpus, states, g, h), exact + 1e-12);
  }
  FitConfig cfg = FitConfig{}.without_warmup();
  cfg.em_rel_tol = 1e-12;
  cfg.max_em_iters = 500;
  const Model m = train(corpus, h, cfg);
  EXPECT_LE(m.elbo_trace.back(), exact + 1e-12);
  EXPECT_GT(m.elbo_trace.back(), exact - 1.0);
}

TEST(Elbo, ThreadCountDoesNotChangeValue) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const Corpus c = small_corpus(3);
  const GlobalParams g = init_globals(h, 5, 2.0);
  std::vector<DocState> states;
  for (const auto& doc : c.docs) states.push_back(e_step_document(doc, g, h, FitConfig{}, ViewSet::all(2)));
  EXPECT_EQ(compute_elbo(c, states, g, h, 1), compute_elbo(c, states, g, h, 4));
}

// ---------------------------------------------------------------------------
// training

TEST(Train, TraceIsMonotone) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const Corpus c = small_corpus(11);
  FitConfig restarts;
  restarts.restarts = 3;
  for (const FitConfig& cfg : {FitConfig{}, FitConfig{}.without_warmup(), restarts}) {
    const TrainResult res = train_with_states(c, h, cfg);
    ASSERT_GE(res.model.elbo_trace.size(), 2u);
    EXPECT_EQ(res.traces.size(), cfg.staged ? cfg.restarts * 3 : cfg.restarts);
    for (const auto& trace : res.traces) EXPECT_TRUE(testsupport::is_monotone(trace));
  }
  const Model lda = train(c, reduce_to_lda(h), FitConfig{});
  EXPECT_TRUE(testsupport::is_monotone(lda.elbo_trace));
}

TEST(Train, MatchesIndependentLdaOracle) {
  const auto h = Hyperparams::uniform(3, {0}, {30});
  const Corpus c = sample_corpus(h, 20, std::vector<std::size_t>{40}, 21).first;
  const GlobalParams init = init_globals(h, 77);

  std::vector<oracle::Bag> docs;
  for (const auto& doc : c.docs) {
    oracle::Bag bag;
    for (const auto& wc : doc.views[0]) bag.emplace_back(wc.word, wc.count);
    docs.push_back(bag);
  }
  std::vector<std::vector<double>> lambda(3);
  for (std::size_t k = 0; k < 3; ++k) lambda[k].assign(init.shared[0].row(k).begin(), init.shared[0].row(k).end());
  FitConfig cfg = FitConfig{}.without_warmup();
  cfg.em_rel_tol = 1e-300;
  oracle::Lda ref(docs, 3, 30, h.alpha_s, h.sigma_s[0], lambda, cfg.doc_tol, cfg.max_doc_iters);

  for (std::size_t it = 1; it <= 5; ++it) {
    ref.em_iteration();
    cfg.max_em_iters = it;
    const TrainResult res = train_from(c, h, cfg, init);
    ASSERT_EQ(res.model.elbo_trace.size(), it);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t v = 0; v < 30; ++v) {
        ASSERT_NEAR(res.model.globals.shared[0](k, v), ref.lambda()[k][v], 1e-10) << "iteration " << it;
      }
    }
    for (std::size_t m = 0; m < c.size(); ++m) {
      for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_NEAR(res.states[m].gamma[k], ref.gamma()[m][k], 1e-10) << "iteration " << it;
      }
    }
  }
}

TEST(Train, ThreadCountDoesNotChangeModel) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const Corpus c = small_corpus(12);
  FitConfig one;
  FitConfig four;
  four.threads = 4;
  EXPECT_EQ(train(c, h, one), train(c, h, four));
}

TEST(Train, SeedReproducesModel) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const Corpus c = small_corpus(13);
  FitConfig cfg;
  cfg.seed = 5;
  EXPECT_EQ(train(c, h, cfg), train(c, h, cfg));
}

TEST(Train, RestartsKeepHighestElbo) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const Corpus c = small_corpus(14);
  FitConfig cfg;
  cfg.seed = 30;
  cfg.restarts = 3;
  const Model best = train(c, h, cfg);
  double top = -std::numeric_limits<double>::infinity();
  for (std::uint64_t s = 30; s < 33; ++s) {
    FitConfig single;
    single.seed = s;
    top = std::max(top, train(c, h, single).elbo_trace.back());
  }
  EXPECT_EQ(best.elbo_trace.back(), top);
}

TEST(Train, RejectsMismatchedCorpus) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 13});
  EXPECT_THROW(train(small_corpus(1), h, FitConfig{}), std::domain_error);
}

TEST(FitConfig, Validation) {
  FitConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_em_iters = 0;
  EXPECT_THROW(c.validate(), std::domain_error);
  c = FitConfig{};
  c.anneal_iters = c.warmup_iters + 1;
  EXPECT_THROW(c.validate(), std::domain_error);
  c = FitConfig{};
  c.restarts = 0;
  EXPECT_THROW(c.validate(), std::domain_error);
}

TEST(InitGlobals, DeterministicAndBounded) {
  const auto h = Hyperparams::uniform(2, {2, 1}, {6, 7});
  const GlobalParams a = init_globals(h, 9, 0.1);
  EXPECT_EQ(a, init_globals(h, 9, 0.1));
  EXPECT_NE(a, init_globals(h, 10, 0.1));
  for (double x : a.shared[1].data()) EXPECT_EQ(x, 0.6);
  for (double x : a.shared[0].data()) {
    EXPECT_GE(x, 0.6);
    EXPECT_LT(x, 0.7);
  }
}

TEST(StagedInit, ProducesValidParameters) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 13});
  const Corpus c = small_corpus(15);
  EXPECT_THROW(staged_init(c, h, FitConfig{}), std::domain_error);
  const auto h2 = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const GlobalParams g = staged_init(c, h2, FitConfig{});
  EXPECT_NO_THROW(validate_globals(g, h2));
  for (const auto* blocks : {&g.shared, &g.priv}) {
    for (const auto& m : *blocks) {
      for (double x : m.data()) EXPECT_GT(x, 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// fold-in

TEST(FoldIn, ReturnsDistributionOverSharedTopics) {
  const auto h = Hyperparams::uniform(2, {1, 1}, {12, 12});
  const Corpus c = small_corpus(16);
  const Model m = train(c, h, FitConfig{});
  const auto rep = fold_in(c.docs[0], m, ViewSet::all(2), FitConfig{});
  ASSERT_EQ(rep.size(), 2u);
  EXPECT_NEAR(rep[0] + rep[1], 1.0, 1e-12);
  const auto states = infer_states(c, m, ViewSet::all(2), FitConfig{});
  const auto again = shared_representation(states[0]);
  EXPECT_EQ(rep, again);
  EXPECT_GT(partition_estimate(states[0], 0), 0.0);
  EXPECT_LT(partition_estimate(states[0], 0), 1.0);
}
