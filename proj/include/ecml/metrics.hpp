#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>

#include "ecml/error.hpp"
#include "ecml/features.hpp"
#include "ecml/linalg.hpp"

namespace ecml {

// Second moments of pair differences d = x_i - x_j, split by label.
// sum_pos = A A^T over matched differences, sum_neg = B B^T over unmatched.
struct DifferenceStats {
  Matrix sum_pos;
  Matrix sum_neg;
  double tr_pos = 0.0;  // sum of d^T d over matched pairs
  double tr_neg = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  DifferenceStats() = default;
  explicit DifferenceStats(std::size_t dim)
      : sum_pos(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))),
        sum_neg(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))) {}

  std::size_t dim() const { return static_cast<std::size_t>(sum_pos.rows()); }

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& diff, bool matched) {
    const Vector d = diff.derived().template cast<double>().reshaped();
    if (static_cast<std::size_t>(d.size()) != dim()) {
      throw ValidationError("difference of size " + std::to_string(d.size()) +
                            " added to stats of dim " + std::to_string(dim()));
    }
    if (matched) {
      sum_pos.noalias() += d * d.transpose();
      tr_pos += d.squaredNorm();
      ++n_pos;
    } else {
      sum_neg.noalias() += d * d.transpose();
      tr_neg += d.squaredNorm();
      ++n_neg;
    }
  }

  // Partial accumulations over disjoint pair subsets merge by addition.
  DifferenceStats& operator+=(const DifferenceStats& o) {
    if (o.dim() != dim()) throw ValidationError("cannot merge stats of different dimension");
    sum_pos += o.sum_pos;
    sum_neg += o.sum_neg;
    tr_pos += o.tr_pos;
    tr_neg += o.tr_neg;
    n_pos += o.n_pos;
    n_neg += o.n_neg;
    return *this;
  }
};

inline DifferenceStats accumulate_stats(const FeatureMatrix& features, const PairSet& pairs) {
  pairs.validate(features.count());
  const auto d = static_cast<Eigen::Index>(features.dim());
  const auto n_pos = static_cast<Eigen::Index>(pairs.positives());
  const auto n_neg = static_cast<Eigen::Index>(pairs.negatives());
  // Difference matrices, one difference per row.
  RowMatrix a(n_pos, d), b(n_neg, d);
  Eigen::Index ia = 0, ib = 0;
  const auto& x = features.data();
  for (const auto& p : pairs) {
    const auto i = static_cast<Eigen::Index>(p.i), j = static_cast<Eigen::Index>(p.j);
    if (p.matched) {
      a.row(ia++) = x.row(i) - x.row(j);
    } else {
      b.row(ib++) = x.row(i) - x.row(j);
    }
  }
  DifferenceStats s(features.dim());
  s.sum_pos = symmetrize(a.transpose() * a);
  s.sum_neg = symmetrize(b.transpose() * b);
  s.tr_pos = a.squaredNorm();
  s.tr_neg = b.squaredNorm();
  s.n_pos = static_cast<std::size_t>(n_pos);
  s.n_neg = static_cast<std::size_t>(n_neg);
  return s;
}

// ---------------------------------------------------------------------------

enum class LearnerKind : std::uint8_t { rmml = 0, kissme = 1, genuine_baseline = 2 };

inline std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::rmml: return "rmml";
    case LearnerKind::kissme: return "kissme";
    case LearnerKind::genuine_baseline: return "genuine-baseline";
  }
  return "unknown";
}

inline LearnerKind parse_learner(std::string_view s) {
  if (s == "rmml") return LearnerKind::rmml;
  if (s == "kissme") return LearnerKind::kissme;
  if (s == "genuine-baseline" || s == "genuine") return LearnerKind::genuine_baseline;
  throw ValidationError("unknown learner '" + std::string(s) + "' (rmml, kissme, genuine-baseline)");
}

// A learned Mahalanobis matrix; dist(x, y) = (x-y)^T M (x-y).
class MetricModel {
 public:
  MetricModel(Matrix m, LearnerKind learner, double lambda = 0.0, double rho = 0.0)
      : m_(std::move(m)), learner_(learner), lambda_(lambda), rho_(rho) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) throw ValidationError("metric matrix must be square");
    if (!m_.allFinite()) throw NumericalError("metric matrix has non-finite entries");
    m_ = symmetrize(m_);
  }

  const Matrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  LearnerKind learner() const { return learner_; }
  double lambda() const { return lambda_; }
  double rho() const { return rho_; }

  template <typename A, typename B>
  double distance(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
    const Vector d = (x.derived() - y.derived()).reshaped();
    return d.dot(m_ * d);
  }

 private:
  Matrix m_;
  LearnerKind learner_;
  double lambda_;
  double rho_;
};

namespace detail {

inline void require_counts(const DifferenceStats& s, bool need_neg) {
  if (s.n_pos < 1) throw ValidationError("statistics contain no matched pairs");
  if (need_neg && s.n_neg < 1) throw ValidationError("statistics contain no unmatched pairs");
}

inline constexpr double kMaxCondition = 1e12;

// Inverse of a symmetric covariance through its spectral factorization.
// Refuses matrices that are not positive definite or whose condition number
// exceeds kMaxCondition.
inline Matrix checked_spd_inverse(const Matrix& cov, std::string_view which) {
  const auto eig = symmetric_eigen(symmetrize(cov));
  const double lo = eig.values.minCoeff();
  const double hi = eig.values.maxCoeff();
  if (!(hi > 0.0) || !(lo > 0.0) || hi / lo > kMaxCondition) {
    std::ostringstream os;
    os << "singular covariance " << which << " (" << cov.rows() << "x" << cov.cols()
       << ", eigenvalue range [" << lo << ", " << hi << "]";
    if (hi > 0.0 && lo > 0.0) os << ", condition number " << hi / lo;
    os << ", limit " << kMaxCondition << ")";
    throw SingularCovariance(os.str());
  }
  return eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
}

}  // namespace detail

// Closed-form RMML. With C = sum_neg/tr_neg - sum_pos/tr_pos, returns
// I + lambda * C / rho, where rho is the mean absolute eigenvalue of C.
// (The plain mean is always zero because tr(C) = 1 - 1.) No covariance is
// inverted on this path.
inline MetricModel fit_rmml(const DifferenceStats& s, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  detail::require_counts(s, true);
  if (!(s.tr_pos > 0.0)) {
    throw NumericalError("degenerate statistics: all matched pairs have zero difference (tr_pos = 0)");
  }
  if (!(s.tr_neg > 0.0)) {
    throw NumericalError("degenerate statistics: all unmatched pairs have zero difference (tr_neg = 0)");
  }
  const Matrix c = symmetrize(s.sum_neg / s.tr_neg - s.sum_pos / s.tr_pos);
  const double rho = symmetric_eigenvalues(c).cwiseAbs().mean();
  if (!(rho >= 1e-12)) {
    throw NumericalError("degenerate statistics: normalizer rho below 1e-12 (matched and unmatched "
                         "difference spectra coincide)");
  }
  const auto d = c.rows();
  return MetricModel(Matrix::Identity(d, d) + lambda * (c / rho), LearnerKind::rmml, lambda, rho);
}

// KISSME: inv(sum_pos/n_pos) - inv(sum_neg/n_neg).
inline MetricModel fit_kissme(const DifferenceStats& s) {
  detail::require_counts(s, true);
  const Matrix inv_pos = detail::checked_spd_inverse(s.sum_pos / static_cast<double>(s.n_pos), "of matched differences");
  const Matrix inv_neg = detail::checked_spd_inverse(s.sum_neg / static_cast<double>(s.n_neg), "of unmatched differences");
  return MetricModel(inv_pos - inv_neg, LearnerKind::kissme);
}

// Mahalanobis matrix of genuine pairs: inv(sum_pos/n_pos).
inline MetricModel fit_genuine_baseline(const DifferenceStats& s) {
  detail::require_counts(s, false);
  return MetricModel(detail::checked_spd_inverse(s.sum_pos / static_cast<double>(s.n_pos), "of matched differences"),
                     LearnerKind::genuine_baseline);
}

// lambda * g1 + g2 with
//   g1 = tr(sum_pos M)/tr_pos - tr(sum_neg M)/tr_neg
//   g2 = 1/2 ||M - I||_F^2
// M need not be symmetric; the trace terms are evaluated as tr(S M).
inline double objective(const DifferenceStats& s, const Matrix& m, double lambda) {
  if (m.rows() != static_cast<Eigen::Index>(s.dim()) || m.cols() != m.rows()) {
    throw ValidationError("objective: matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", stats have dim " + std::to_string(s.dim()));
  }
  // tr(S M) = sum_ij S_ji M_ij = sum_ij S_ij M_ij for symmetric S.
  const double g1 = s.sum_pos.cwiseProduct(m).sum() / s.tr_pos - s.sum_neg.cwiseProduct(m).sum() / s.tr_neg;
  const double g2 = 0.5 * (m - Matrix::Identity(m.rows(), m.cols())).squaredNorm();
  return lambda * g1 + g2;
}

inline Matrix objective_gradient(const DifferenceStats& s, const Matrix& m, double lambda) {
  return lambda * (s.sum_pos / s.tr_pos - s.sum_neg / s.tr_neg) + (m - Matrix::Identity(m.rows(), m.cols()));
}

// ---------------------------------------------------------------------------

// Anything mapping difference statistics to a metric can drive a cascade.
template <typename L>
concept MetricLearner = requires(const L& learner, const DifferenceStats& s) {
  { learner(s) } -> std::convertible_to<MetricModel>;
};

// One of the built-in learners plus its lambda (used by rmml only).
struct LearnerSpec {
  LearnerKind kind = LearnerKind::rmml;
  double lambda = 0.5;

  MetricModel operator()(const DifferenceStats& s) const {
    switch (kind) {
      case LearnerKind::rmml: return fit_rmml(s, lambda);
      case LearnerKind::kissme: return fit_kissme(s);
      case LearnerKind::genuine_baseline: return fit_genuine_baseline(s);
    }
    throw ValidationError("unknown learner");
  }
};

inline constexpr double kDefaultLambda = 0.5;
inline constexpr double kDefaultCascadeLambda = 0.1;

}  // namespace ecml
