#include "ecml/cascade.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "test_util.hpp"

using namespace ecml;

namespace {

std::vector<double> clamped_spectrum(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  for (auto& x : v) x = std::max(x, 0.0);
  std::sort(v.begin(), v.end());
  return v;
}

struct Data {
  FeatureMatrix features;
  PairSet pairs;
};

Data synthetic(std::size_t dim, std::uint64_t seed, std::size_t ids = 20, std::size_t per_id = 10) {
  auto d = gen_synthetic({.identities = ids, .samples_per_id = per_id, .dim = dim, .intra_spread = 1.0,
                          .inter_spread = 1.0, .seed = seed});
  auto pairs = sample_pairs(d.labels, 600, 0.5, seed + 1);
  return {std::move(d.features), std::move(pairs)};
}

// Returns M = I regardless of the statistics.
struct IdentityLearner {
  MetricModel operator()(const DifferenceStats& s) const {
    const auto d = static_cast<Eigen::Index>(s.dim());
    return MetricModel(Matrix::Identity(d, d), LearnerKind::rmml);
  }
};

}  // namespace

TEST(Mcd, Identity) {
  const auto p = mcd(Matrix::Identity(5, 5));
  EXPECT_EQ(p.clamped_count, 0u);
  EXPECT_LE((p.p * p.p.transpose() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mcd, ClampsNegativeDiagonal) {
  Matrix m = Matrix::Zero(2, 2);
  m.diagonal() << 4, -1;
  const auto p = mcd(m);
  EXPECT_EQ(p.clamped_count, 1u);
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 4;
  EXPECT_LE((p.p * p.p.transpose() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mcd, JitterAroundZeroIsNotCounted) {
  Matrix m = Matrix::Zero(3, 3);
  m.diagonal() << 1, -1e-12, -1e-3;
  EXPECT_EQ(mcd(m).clamped_count, 1u);
}

TEST(Mcd, SpectrumOfReconstructionIsClampedSpectrum) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const Matrix m = ecml::testing::random_symmetric(16, rng);
    const auto p = mcd(m);
    const Matrix rec = p.p * p.p.transpose();
    const auto want = clamped_spectrum(m);
    const auto got = clamped_spectrum(rec);
    Eigen::SelfAdjointEigenSolver<Matrix> es(rec, Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-8);
  }
}

TEST(Mcd, ExactForPsdInput) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const Matrix m = ecml::testing::random_spd(12, rng);
    const auto p = mcd(m);
    EXPECT_EQ(p.clamped_count, 0u);
    EXPECT_LE((p.p * p.p.transpose() - m).norm(), 1e-8 * m.norm());
  }
}

TEST(Mcd, RejectsNonFinite) {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(mcd(m), NumericalError);
}

TEST(SqrtNormalize, SignedSquareRoot) {
  RowMatrix x(1, 4);
  x << 4, -9, 0, 2;
  const RowMatrix y = sqrt_normalize(x);
  EXPECT_EQ(y(0, 0), 2.0);
  EXPECT_EQ(y(0, 1), -3.0);
  EXPECT_EQ(y(0, 2), 0.0);
  const RowMatrix twice = sqrt_normalize(y);
  EXPECT_NEAR(twice(0, 3), std::pow(2.0, 0.25), 1e-15);
  EXPECT_NEAR(twice(0, 1), -std::pow(9.0, 0.25), 1e-15);
}

TEST(GroupCounts, HalvesPerStage) {
  EXPECT_EQ(group_counts(3), (std::vector<std::size_t>{8, 4, 2}));
  EXPECT_EQ(group_counts(1), (std::vector<std::size_t>{2}));
  EXPECT_EQ(group_counts(5), (std::vector<std::size_t>{32, 16, 8, 4, 2}));
  EXPECT_THROW(group_counts(0), ValidationError);
}

// ---------------------------------------------------------------------------

TEST(FitStage, SingleGroupIdentityMetricPreservesDistancesBeforeNormalization) {
  auto d = synthetic(6, 1);
  const auto fit = fit_stage(d.features, d.pairs, 1, IdentityLearner{}, 3);
  ASSERT_EQ(fit.model.projections.size(), 1u);
  const Matrix& p = fit.model.projections[0].p;
  EXPECT_LE((p * p.transpose() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
  // Undo the normalization to recover the projected features and compare
  // pairwise distances with the input.
  const RowMatrix z = fit.output.data().unaryExpr([](double v) { return v < 0 ? -v * v : v * v; });
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) {
      const double a = (d.features.row(i) - d.features.row(j)).squaredNorm();
      const double b = (z.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(j))).squaredNorm();
      EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, a));
    }
}

TEST(FitStage, DeterministicGivenSeed) {
  auto d = synthetic(16, 2);
  const LearnerSpec rmml{LearnerKind::rmml, 0.1};
  const auto a = fit_stage(d.features, d.pairs, 4, rmml, 9);
  const auto b = fit_stage(d.features, d.pairs, 4, rmml, 9);
  EXPECT_EQ(a.model.permutation, b.model.permutation);
  EXPECT_EQ(a.output, b.output);
  EXPECT_NE(a.model.permutation, fit_stage(d.features, d.pairs, 4, rmml, 10).model.permutation);
}

TEST(FitStage, ShapesAndPermutation) {
  auto d = synthetic(16, 3);
  const auto fit = fit_stage(d.features, d.pairs, 4, LearnerSpec{LearnerKind::rmml, 0.1}, 1);
  EXPECT_EQ(fit.model.group_count, 4u);
  EXPECT_EQ(fit.model.group_dim, 4u);
  ASSERT_EQ(fit.model.projections.size(), 4u);
  for (const auto& p : fit.model.projections) EXPECT_EQ(p.p.rows(), 4);
  EXPECT_EQ(fit.output.dim(), 16u);
  EXPECT_NO_THROW(fit.model.validate());
}

TEST(FitStage, PadsBeforePermuting) {
  auto d = synthetic(10, 4);
  const auto fit = fit_stage(d.features, d.pairs, 4, LearnerSpec{LearnerKind::rmml, 0.1}, 17);
  EXPECT_EQ(fit.model.padded_dim(), 12u);
  EXPECT_EQ(fit.output.dim(), 12u);
  std::vector<std::uint32_t> sorted = fit.model.permutation;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::uint32_t> iota(12);
  std::iota(iota.begin(), iota.end(), 0u);
  EXPECT_EQ(sorted, iota);
}

TEST(FitStage, GroupProjectionsDependOnlyOnTheirSlice) {
  // Refit each group standalone from its slice; projections must agree.
  auto d = synthetic(16, 5);
  const LearnerSpec rmml{LearnerKind::rmml, 0.1};
  const auto fit = fit_stage(d.features, d.pairs, 4, rmml, 21);
  for (std::size_t g = 4; g-- > 0;) {
    RowMatrix slice(static_cast<Eigen::Index>(d.features.count()), 4);
    for (int c = 0; c < 4; ++c) slice.col(c) = d.features.data().col(fit.model.permutation[g * 4 + c]);
    const auto proj = mcd(rmml(accumulate_stats(FeatureMatrix(slice), d.pairs)).matrix());
    EXPECT_EQ(proj.p, fit.model.projections[g].p);
  }
}

TEST(FitStage, KissmeFailureNamesTheGroup) {
  auto d = synthetic(8, 6);
  RowMatrix x = d.features.data();
  x.col(3).setZero();  // one group's covariance becomes singular
  try {
    fit_stage(FeatureMatrix(x), d.pairs, 2, LearnerSpec{LearnerKind::kissme, 0}, 0);
    FAIL();
  } catch (const SingularCovariance& e) {
    EXPECT_NE(std::string(e.what()).find("group "), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------

TEST(FitCascade, ZeroStagesIsThePlainLearner) {
  auto d = synthetic(8, 7);
  const LearnerSpec rmml{LearnerKind::rmml, 0.5};
  const auto model = fit_cascade(d.features, d.pairs, 0, rmml, 1);
  EXPECT_TRUE(model.stages.empty());
  EXPECT_EQ(model.metric().matrix(), rmml(accumulate_stats(d.features, d.pairs)).matrix());
  EXPECT_EQ(transform(model, d.features), d.features);
}

TEST(FitCascade, ThreeStagesFollowGroupRule) {
  auto d = synthetic(32, 8);
  const auto model = fit_cascade(d.features, d.pairs, 3, LearnerSpec{LearnerKind::rmml, 0.1}, 1);
  ASSERT_EQ(model.stages.size(), 3u);
  EXPECT_EQ(model.stages[0].group_count, 8u);
  EXPECT_EQ(model.stages[1].group_count, 4u);
  EXPECT_EQ(model.stages[2].group_count, 2u);
  EXPECT_EQ(model.metric().dim(), 32u);
  EXPECT_EQ(model.seed, 1u);
  EXPECT_EQ(model.learner, LearnerKind::rmml);
  EXPECT_NO_THROW(model.validate());
}

TEST(FitCascade, StageDimensionsNeverShrink) {
  // 14 pads to 16; with at most two zero columns no group of four is left with
  // a single live coordinate (for which RMML's C vanishes identically).
  auto d = synthetic(14, 9);
  const auto model = fit_cascade(d.features, d.pairs, 2, LearnerSpec{LearnerKind::rmml, 0.1}, 4);
  EXPECT_EQ(model.stages[0].padded_dim(), 16u);  // 4 groups
  EXPECT_EQ(model.stages[1].padded_dim(), 16u);  // 2 groups
  EXPECT_EQ(transform(model, d.features).dim(), 16u);
}

TEST(FitCascade, SingleLiveCoordinateGroupIsReported) {
  // D=1 gives C = 1/1 - 1/1 = 0 regardless of the data.
  auto d = synthetic(1, 12);
  EXPECT_THROW(fit_cascade(d.features, d.pairs, 0, LearnerSpec{LearnerKind::rmml, 0.1}, 0), NumericalError);
}

TEST(FitCascade, TransformReplaysTrainingOutputsBitwise) {
  auto d = synthetic(16, 10);
  const LearnerSpec rmml{LearnerKind::rmml, 0.1};
  const auto model = fit_cascade(d.features, d.pairs, 2, rmml, 5);
  auto s1 = fit_stage(d.features, d.pairs, 4, rmml, stage_seed(5, 0));
  auto s2 = fit_stage(s1.output, d.pairs, 2, rmml, stage_seed(5, 1));
  EXPECT_EQ(transform(model, d.features), s2.output);
}

TEST(FitCascade, FailurePropagatesWithStage) {
  auto d = synthetic(8, 11);
  RowMatrix x = d.features.data();
  x.col(0).setZero();
  try {
    fit_cascade(FeatureMatrix(x), d.pairs, 1, LearnerSpec{LearnerKind::kissme, 0}, 0);
    FAIL();
  } catch (const SingularCovariance& e) {
    EXPECT_NE(std::string(e.what()).find("stage 1/1"), std::string::npos) << e.what();
  }
}

TEST(CascadeDistance, BasicProperties) {
  auto d = synthetic(16, 12);
  const auto model = fit_cascade(d.features, d.pairs, 2, LearnerSpec{LearnerKind::rmml, 0.1}, 5);
  const auto x = d.features.row(0);
  const auto y = d.features.row(15);
  EXPECT_EQ(cascade_distance(model, x, x), 0.0);
  EXPECT_NEAR(cascade_distance(model, x, y), cascade_distance(model, y, x), 1e-12);
  EXPECT_THROW(cascade_distance(model, Vector::Zero(3), Vector::Zero(3)), ValidationError);

  const auto plain = fit_cascade(d.features, d.pairs, 0, LearnerSpec{LearnerKind::rmml, 0.0}, 0);
  EXPECT_NEAR(cascade_distance(plain, x, y), (x - y).squaredNorm(), 1e-12);
}

TEST(CascadeDistance, IdenticalSamplesMapIdentically) {
  auto d = synthetic(8, 13);
  RowMatrix x = d.features.data();
  x.row(1) = x.row(0);
  const FeatureMatrix f(x);
  const auto model = fit_cascade(f, d.pairs, 2, LearnerSpec{LearnerKind::rmml, 0.1}, 2);
  const auto z = transform(model, f);
  EXPECT_EQ(z.data().row(0), z.data().row(1));
}

TEST(CascadeDistance, RankingInvariantUnderFeatureScaling) {
  // Scaling by c rescales every stage output by a fixed power of c, so the
  // RMML metrics are unchanged and distances scale by a common factor.
  auto d = synthetic(16, 14);
  const LearnerSpec rmml{LearnerKind::rmml, 0.1};
  const FeatureMatrix scaled(RowMatrix(d.features.data() * 9.0));
  const auto a = fit_cascade(d.features, d.pairs, 3, rmml, 3);
  const auto b = fit_cascade(scaled, d.pairs, 3, rmml, 3);
  std::vector<double> da, db;
  for (const auto& p : d.pairs) {
    da.push_back(cascade_distance(a, d.features.row(p.i), d.features.row(p.j)));
    db.push_back(cascade_distance(b, scaled.row(p.i), scaled.row(p.j)));
  }
  std::vector<std::size_t> ia(da.size()), ib(db.size());
  std::iota(ia.begin(), ia.end(), std::size_t{0});
  std::iota(ib.begin(), ib.end(), std::size_t{0});
  std::stable_sort(ia.begin(), ia.end(), [&](auto l, auto r) { return da[l] < da[r]; });
  std::stable_sort(ib.begin(), ib.end(), [&](auto l, auto r) { return db[l] < db[r]; });
  EXPECT_EQ(ia, ib);
}
