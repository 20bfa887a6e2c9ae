#include "ecml/eval.hpp"

#include <gtest/gtest.h>

#include <random>

#include "eval_oracle.hpp"
#include "test_util.hpp"

using namespace ecml;

namespace {

ScoredPairs scored(std::vector<double> pos, std::vector<double> neg) {
  std::vector<double> s;
  std::vector<bool> y;
  for (double v : pos) {
    s.push_back(v);
    y.push_back(true);
  }
  for (double v : neg) {
    s.push_back(v);
    y.push_back(false);
  }
  return ScoredPairs(std::move(s), std::move(y));
}

ScoredPairs random_scored(std::size_t n, std::mt19937_64& rng, bool coarse) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> s;
  std::vector<bool> y;
  for (std::size_t k = 0; k < n; ++k) {
    const bool m = k < 2 ? k == 0 : coin(rng);
    double v = g(rng) + (m ? 0.0 : 1.0);
    if (coarse) v = std::round(v * 4.0) / 4.0;  // many ties
    s.push_back(v);
    y.push_back(m);
  }
  return ScoredPairs(std::move(s), std::move(y));
}

}  // namespace

TEST(ScorePairs, SquaredEuclideanAndValidation) {
  RowMatrix x(3, 2);
  x << 0, 0, 3, 4, 0, 0;
  const FeatureMatrix f(x);
  auto dist = [](const auto& a, const auto& b) { return (a - b).squaredNorm(); };
  const auto s = score_pairs(dist, f, PairSet({{0, 1, false}, {0, 2, true}}));
  EXPECT_EQ(s.scores()[0], 25.0);
  EXPECT_EQ(s.scores()[1], 0.0);
  EXPECT_THROW(score_pairs(dist, f, PairSet()), ValidationError);
  EXPECT_THROW(score_pairs(dist, f, PairSet({{0, 1, true}})), ValidationError);
}

TEST(ComputeEer, PerfectSeparation) {
  const auto r = compute_eer(scored({1, 2}, {3, 4}));
  EXPECT_EQ(r.eer, 0.0);
  EXPECT_EQ(r.threshold, 2.5);
  EXPECT_FALSE(r.degenerate);
}

TEST(ComputeEer, InterleavedFourPairs) {
  // Matched {1,3}, unmatched {2,4}: for t in (2,3] FAR = FRR = 1/2, which the
  // brute-force sweep confirms.
  const auto s = scored({1, 3}, {2, 4});
  const auto r = compute_eer(s);
  const auto o = ecml::testing::brute_force_eer(s.scores(), s.matched());
  EXPECT_EQ(r.eer, 0.5);
  EXPECT_EQ(o.eer, 0.5);
  EXPECT_EQ(r.threshold, 2.5);
}

TEST(ComputeEer, InterpolatesAcrossSignChange) {
  const auto s = scored({1, 2, 5}, {3, 4});
  const auto r = compute_eer(s);
  const auto o = ecml::testing::brute_force_eer(s.scores(), s.matched());
  EXPECT_NEAR(r.eer, o.eer, 1e-12);
  EXPECT_NEAR(r.threshold, o.threshold, 1e-12);
  // At t in (2,3]: FAR 0, FRR 1/3; at t in (3,4]: FAR 1/2, FRR 1/3. The
  // crossing lies a = (1/3)/(1/2) = 2/3 of the way: EER = 1/3.
  EXPECT_NEAR(r.eer, 1.0 / 3.0, 1e-12);
}

TEST(ComputeEer, AllScoresIdenticalIsDegenerate) {
  const auto r = compute_eer(scored({1, 1}, {1, 1, 1}));
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.eer, 0.5);
}

TEST(ComputeEer, InvertedScoresAreNotFlipped) {
  EXPECT_EQ(compute_eer(scored({3, 4}, {1, 2})).eer, 1.0);
}

TEST(ComputeEer, MatchesBruteForce) {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 30; ++k) {
    const auto s = random_scored(10 + static_cast<std::size_t>(k) * 17, rng, k % 2 == 0);
    const auto r = compute_eer(s);
    const auto o = ecml::testing::brute_force_eer(s.scores(), s.matched());
    EXPECT_NEAR(r.eer, o.eer, 1e-9);
    EXPECT_NEAR(r.threshold, o.threshold, 1e-9);
  }
}

TEST(ComputeEer, RandomLabelsGiveChance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> s;
  std::vector<bool> y;
  for (int k = 0; k < 10000; ++k) {
    s.push_back(u(rng));
    y.push_back(coin(rng));
  }
  EXPECT_NEAR(compute_eer(ScoredPairs(s, y)).eer, 0.5, 0.02);
}

TEST(ComputeEer, RankStatistic) {
  std::mt19937_64 rng(8);
  const auto s = random_scored(500, rng, false);
  std::vector<double> t;
  for (double v : s.scores()) t.push_back(std::exp(v) * 3.0 + 1.0);
  EXPECT_NEAR(compute_eer(s).eer, compute_eer(ScoredPairs(t, s.matched())).eer, 1e-12);
}

TEST(ComputeEer, RocFarIsMonotone) {
  std::mt19937_64 rng(9);
  const auto r = compute_eer(random_scored(300, rng, true));
  for (std::size_t k = 1; k < r.roc.size(); ++k) {
    EXPECT_GE(r.roc[k].far, r.roc[k - 1].far);
    EXPECT_LE(r.roc[k].frr, r.roc[k - 1].frr);
    EXPECT_GT(r.roc[k].threshold, r.roc[k - 1].threshold);
  }
}

// ---------------------------------------------------------------------------

TEST(KlDivergence, IdenticalDistributionsNearZero) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> pos, neg;
  for (int k = 0; k < 100000; ++k) {
    pos.push_back(g(rng));
    neg.push_back(g(rng));
  }
  EXPECT_LE(kl_divergence(scored(pos, neg), 100), 0.01);
}

TEST(KlDivergence, GaussianShiftNearAnalytic) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> pos, neg;
  for (int k = 0; k < 100000; ++k) {
    pos.push_back(g(rng));
    neg.push_back(3.0 + g(rng));
  }
  EXPECT_NEAR(kl_divergence(scored(pos, neg), 100), 4.5, 0.15 * 4.5);
}

TEST(KlDivergence, AsymmetricOnSkewedData) {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  std::normal_distribution<double> g(2.0, 0.3);
  std::vector<double> a, b;
  for (int k = 0; k < 20000; ++k) {
    a.push_back(e(rng));
    b.push_back(g(rng));
  }
  EXPECT_GT(std::abs(kl_divergence(scored(a, b)) - kl_divergence(scored(b, a))), 0.1);
}

TEST(KlDivergence, InvariantUnderSharedAffineRescale) {
  std::mt19937_64 rng(4);
  const auto s = random_scored(2000, rng, false);
  std::vector<double> t;
  for (double v : s.scores()) t.push_back(7.0 * v - 3.0);
  EXPECT_NEAR(kl_divergence(s, 50), kl_divergence(ScoredPairs(t, s.matched()), 50), 1e-9);
}

TEST(KlDivergence, Preconditions) {
  EXPECT_THROW(kl_divergence(scored({1}, {1})), ValidationError);
  EXPECT_THROW(kl_divergence(scored({1}, {2}), 0), ValidationError);
}

// ---------------------------------------------------------------------------

TEST(EvalReport, TextRoundTripIsLossless) {
  std::mt19937_64 rng(5);
  const auto r = evaluate(random_scored(700, rng, false), 64);
  const auto text = report_to_text(r);
  EXPECT_NE(text.find("kl_direction=pos||neg"), std::string::npos);
  EXPECT_EQ(report_from_text(text), r);
  EXPECT_THROW(report_from_text("eer=0.1\n"), FormatError);
}

TEST(EvalReport, RocCsv) {
  const auto r = evaluate(scored({1, 2}, {3, 4}));
  const auto csv = roc_to_csv(r.roc);
  EXPECT_EQ(csv.substr(0, 18), "threshold,far,frr\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(r.roc.size() + 1));
}

TEST(RepeatSummary, SampleStandardDeviation) {
  const auto s = summarize_eers({0.1, 0.2, 0.3});
  EXPECT_NEAR(s.mean, 0.2, 1e-15);
  EXPECT_NEAR(s.stddev, 0.1, 1e-15);
}
