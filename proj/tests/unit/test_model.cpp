#include <gtest/gtest.h>

#include <numeric>
#include <vector>

#include "ibtm/model.hpp"

using namespace ibtm;

namespace {

double row_sum(std::span<const double> r) { return std::accumulate(r.begin(), r.end(), 0.0); }

}  // namespace

TEST(Hyperparams, UniformDefaults) {
  const auto h = Hyperparams::uniform(5, {5, 3}, {50, 40});
  EXPECT_EQ(h.num_views(), 2u);
  EXPECT_EQ(h.topics_in_view(1), 8u);
  EXPECT_DOUBLE_EQ(h.alpha_s, 0.8);
  EXPECT_DOUBLE_EQ(h.alpha_p[1], 0.8);
  EXPECT_DOUBLE_EQ(h.sigma_s[0], 0.6);
  EXPECT_DOUBLE_EQ(h.sigma_p[1], 0.6);
  EXPECT_EQ(h.iota[0], (BetaParams{5.0, 5.0}));
}

TEST(Hyperparams, RejectsInvalid) {
  EXPECT_THROW(Hyperparams::uniform(0, {1}, {10}), std::domain_error);
  EXPECT_THROW(Hyperparams::uniform(2, {1, 1}, {10}), std::domain_error);
  EXPECT_THROW(Hyperparams::uniform(2, {1}, {1}), std::domain_error);
  EXPECT_THROW(Hyperparams::uniform(2, {1}, {10}, -0.5), std::domain_error);
  EXPECT_THROW(Hyperparams::uniform(2, {1}, {10}, 0.8, 0.6, {0.0, 1.0}), std::domain_error);
  EXPECT_THROW(Hyperparams::uniform(2, {}, {}), std::domain_error);
}

TEST(Hyperparams, ReduceToLdaZeroesPrivateTopics) {
  const auto h = reduce_to_lda(Hyperparams::uniform(4, {2, 3}, {20, 30}));
  EXPECT_EQ(h.T, (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(h.K, 4u);
  EXPECT_EQ(h.V, (std::vector<std::size_t>{20, 30}));
}

TEST(ValidateDocument, CatchesBadBags) {
  const std::vector<std::size_t> V{5};
  EXPECT_NO_THROW(validate_document(Document{{{{0, 1.0}, {4, 2.5}}}, std::nullopt}, V));
  EXPECT_NO_THROW(validate_document(Document{{{}}, std::nullopt}, V));
  EXPECT_THROW(validate_document(Document{{{{5, 1.0}}}, std::nullopt}, V), std::domain_error);
  EXPECT_THROW(validate_document(Document{{{{2, 1.0}, {2, 1.0}}}, std::nullopt}, V), std::domain_error);
  EXPECT_THROW(validate_document(Document{{{{3, 1.0}, {1, 1.0}}}, std::nullopt}, V), std::domain_error);
  EXPECT_THROW(validate_document(Document{{{{1, -1.0}}}, std::nullopt}, V), std::domain_error);
  EXPECT_THROW(validate_document(Document{{{}, {}}, std::nullopt}, V), std::domain_error);
}

TEST(InitialDocState, ShapesAndPriors) {
  const auto h = Hyperparams::uniform(3, {2, 0}, {10, 10}, 0.8, 0.6, {4.0, 2.0});
  const Document doc{{{{1, 2.0}, {3, 1.0}}, {{0, 1.0}}}, std::nullopt};
  const DocState s = initial_doc_state(doc, h);
  EXPECT_EQ(s.gamma, std::vector<double>(3, 0.8));
  EXPECT_EQ(s.delta[0], std::vector<double>(2, 0.8));
  EXPECT_TRUE(s.delta[1].empty());
  EXPECT_EQ(s.r[0], (BetaParams{4.0, 2.0}));
  EXPECT_EQ(s.resp[0].rows(), 2u);
  EXPECT_EQ(s.resp[0].cols(), 5u);
  EXPECT_EQ(s.resp[1].cols(), 3u);
  EXPECT_DOUBLE_EQ(s.resp[0](0, 0), 0.2);
}

TEST(SampleCorpus, DeterministicForSeed) {
  const auto h = Hyperparams::uniform(3, {2, 2}, {20, 15});
  const std::vector<std::size_t> n{30, 20};
  const auto a = sample_corpus(h, 10, n, 42);
  const auto b = sample_corpus(h, 10, n, 42);
  const auto c = sample_corpus(h, 10, n, 43);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.first, c.first);
}

TEST(SampleCorpus, CountsMatchTokensAndTruthIsConsistent) {
  const auto h = Hyperparams::uniform(3, {2, 1}, {20, 15});
  const std::vector<std::size_t> n{30, 25};
  const auto [corpus, truth] = sample_corpus(h, 12, n, 9);
  ASSERT_EQ(corpus.size(), 12u);
  EXPECT_NO_THROW(validate_corpus(corpus, h));
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    EXPECT_NEAR(row_sum(truth.theta.row(m)), 1.0, 1e-12);
    for (std::size_t d = 0; d < 2; ++d) {
      EXPECT_DOUBLE_EQ(corpus.docs[m].total(d), static_cast<double>(n[d]));
      EXPECT_NEAR(row_sum(truth.private_props[d].row(m)), 1.0, 1e-12);
      EXPECT_GT(truth.partition[d][m], 0.0);
      EXPECT_LT(truth.partition[d][m], 1.0);
      std::vector<double> counts(h.V[d], 0.0);
      for (const auto& t : truth.tokens[d][m]) {
        EXPECT_LT(t.topic, h.topics_in_view(d));
        counts[t.word] += 1.0;
      }
      for (const auto& wc : corpus.docs[m].views[d]) EXPECT_DOUBLE_EQ(counts[wc.word], wc.count);
    }
  }
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t k = 0; k < h.K; ++k) EXPECT_NEAR(row_sum(truth.shared_topics[d].row(k)), 1.0, 1e-12);
    for (std::size_t t = 0; t < h.T[d]; ++t) EXPECT_NEAR(row_sum(truth.private_topics[d].row(t)), 1.0, 1e-12);
  }
}

TEST(SampleCorpus, NoPrivateTopicsMeansPartitionOne) {
  const auto h = Hyperparams::uniform(2, {0, 0}, {10, 10});
  const std::vector<std::size_t> n{15, 15};
  const auto [corpus, truth] = sample_corpus(h, 5, n, 1);
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t m = 0; m < 5; ++m) {
      EXPECT_EQ(truth.partition[d][m], 1.0);
      for (const auto& t : truth.tokens[d][m]) EXPECT_LT(t.topic, 2u);
    }
  }
}

TEST(SampleCorpus, ClassProfilesSetLabels) {
  const auto h = Hyperparams::uniform(2, {1}, {10});
  std::vector<ClassProfile> profiles{{{5.0, 0.1}}, {{0.1, 5.0}}, {{}}};
  const std::vector<std::size_t> n{10};
  const auto [corpus, truth] = sample_corpus(h, 7, n, 3, profiles);
  for (std::size_t m = 0; m < 7; ++m) EXPECT_EQ(corpus.docs[m].label, static_cast<int>(m % 3));
  std::vector<ClassProfile> bad{{{1.0, 1.0, 1.0}}};
  EXPECT_THROW(sample_corpus(h, 3, n, 3, bad), std::domain_error);
}

TEST(BandedTopics, PeakMassOnOwnBlock) {
  const auto h = Hyperparams::uniform(2, {2}, {40});
  const TopicOverrides o = banded_topics(h, 0.9);
  ASSERT_EQ(o.shared[0].rows(), 2u);
  ASSERT_EQ(o.priv[0].rows(), 2u);
  // four topics, blocks of ten words; shared topics come first
  for (std::size_t j = 0; j < 4; ++j) {
    const auto row = j < 2 ? o.shared[0].row(j) : o.priv[0].row(j - 2);
    EXPECT_NEAR(row_sum(row), 1.0, 1e-12);
    double block = 0.0;
    for (std::size_t w = 10 * j; w < 10 * (j + 1); ++w) block += row[w];
    EXPECT_NEAR(block, 0.9, 1e-12);
  }
}

TEST(SampleCorpus, OverridesAreUsedAndChecked) {
  const auto h = Hyperparams::uniform(2, {2}, {40});
  const TopicOverrides o = banded_topics(h, 0.9);
  const std::vector<std::size_t> n{20};
  const auto [corpus, truth] = sample_corpus(h, 4, n, 8, {}, &o);
  EXPECT_EQ(truth.shared_topics[0], o.shared[0]);
  EXPECT_EQ(truth.private_topics[0], o.priv[0]);

  TopicOverrides bad = o;
  bad.shared[0](0, 0) += 0.5;
  EXPECT_THROW(sample_corpus(h, 4, n, 8, {}, &bad), std::domain_error);
  bad = o;
  bad.priv[0] = Matrix(3, 40, 1.0 / 40.0);
  EXPECT_THROW(sample_corpus(h, 4, n, 8, {}, &bad), std::domain_error);
}
