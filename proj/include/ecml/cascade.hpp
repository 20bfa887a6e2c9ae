#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ecml/error.hpp"
#include "ecml/features.hpp"
#include "ecml/linalg.hpp"
#include "ecml/metrics.hpp"

namespace ecml {

// P with P P^T = M after clamping negative eigenvalues of M to zero.
struct Projection {
  Matrix p;
  std::size_t clamped_count = 0;

  std::size_t dim() const { return static_cast<std::size_t>(p.rows()); }
};

// Eigenvalues in (-kClampJitter, 0) are zeroed without being counted.
inline constexpr double kClampJitter = 1e-10;

// Modified Cholesky decomposition: M = Q L Q^T, P = Q sqrt(max(L, 0)).
// Columns follow ascending eigenvalues with the sign convention of
// symmetric_eigen().
inline Projection mcd(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1) throw ValidationError("mcd needs a square matrix");
  SymmetricEigen eig;
  try {
    eig = symmetric_eigen(symmetrize(m));
  } catch (Error& e) {
    e.prepend("mcd");
    throw;
  }
  Projection out;
  Vector root(eig.values.size());
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    const double v = eig.values(k);
    if (v <= -kClampJitter) ++out.clamped_count;
    root(k) = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  out.p = eig.vectors * root.asDiagonal();
  return out;
}

// sgn(v) |v|^(1/2), elementwise.
inline RowMatrix sqrt_normalize(const RowMatrix& x) {
  return x.unaryExpr([](double v) { return v < 0.0 ? -std::sqrt(-v) : std::sqrt(v); });
}

inline FeatureMatrix sqrt_normalize(const FeatureMatrix& f) { return FeatureMatrix(sqrt_normalize(f.data())); }

// Ensemble group counts 2^(L-l+1) for l = 1..L.
inline std::vector<std::size_t> group_counts(std::size_t stages) {
  if (stages < 1) throw ValidationError("group_counts needs L >= 1");
  if (stages > 62) throw ValidationError("stage count too large");
  std::vector<std::size_t> out;
  for (std::size_t l = 1; l <= stages; ++l) out.push_back(std::size_t{1} << (stages - l + 1));
  return out;
}

struct StageModel {
  std::size_t input_dim = 0;  // before padding
  std::size_t group_count = 0;
  std::size_t group_dim = 0;
  // Column `c` of group `g` reads padded input column permutation[g*group_dim + c].
  std::vector<std::uint32_t> permutation;
  std::vector<Projection> projections;

  std::size_t padded_dim() const { return group_count * group_dim; }

  void validate() const {
    if (group_count < 1 || group_dim < 1) throw ValidationError("stage has empty groups");
    if (padded_dim() < input_dim || padded_dim() - input_dim >= group_count) {
      throw ValidationError("stage padding inconsistent with its input dimension");
    }
    if (permutation.size() != padded_dim()) throw ValidationError("stage permutation has wrong size");
    std::vector<bool> seen(padded_dim(), false);
    for (auto v : permutation) {
      if (v >= padded_dim() || seen[v]) throw ValidationError("stage permutation is not a bijection");
      seen[v] = true;
    }
    if (projections.size() != group_count) throw ValidationError("stage has wrong number of projections");
    for (const auto& pr : projections) {
      if (pr.dim() != group_dim || pr.p.cols() != pr.p.rows()) {
        throw ValidationError("stage projection has wrong shape");
      }
    }
  }
};

struct CascadeModel {
  std::size_t input_dim = 0;
  LearnerKind learner = LearnerKind::rmml;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<StageModel> stages;
  std::optional<MetricModel> final_metric;

  std::size_t stage_count() const { return stages.size(); }
  std::size_t output_dim() const { return stages.empty() ? input_dim : stages.back().padded_dim(); }
  const MetricModel& metric() const {
    if (!final_metric) throw ValidationError("cascade model has no final metric");
    return *final_metric;
  }

  void validate() const {
    std::size_t d = input_dim;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (stages[s].input_dim != d) {
        throw ValidationError("stage " + std::to_string(s + 1) + " expects dim " +
                              std::to_string(stages[s].input_dim) + ", previous stage yields " +
                              std::to_string(d));
      }
      stages[s].validate();
      d = stages[s].padded_dim();
    }
    if (metric().dim() != d) throw ValidationError("final metric dimension does not match cascade output");
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline RowMatrix gather_group(const RowMatrix& padded, const StageModel& st, std::size_t g) {
  RowMatrix out(padded.rows(), static_cast<Eigen::Index>(st.group_dim));
  for (std::size_t c = 0; c < st.group_dim; ++c) {
    out.col(static_cast<Eigen::Index>(c)) = padded.col(st.permutation[g * st.group_dim + c]);
  }
  return out;
}

inline RowMatrix pad_columns(const RowMatrix& x, std::size_t padded) {
  if (static_cast<std::size_t>(x.cols()) == padded) return x;
  RowMatrix out = RowMatrix::Zero(x.rows(), static_cast<Eigen::Index>(padded));
  out.leftCols(x.cols()) = x;
  return out;
}

inline RowMatrix project_group(const RowMatrix& group, const Projection& pr) {
  return sqrt_normalize(RowMatrix(group * pr.p));
}

}  // namespace detail

// pad -> permute -> per-group projection -> sqrt normalization -> concatenate.
inline RowMatrix apply_stage(const StageModel& st, const RowMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != st.input_dim) {
    throw ValidationError("stage expects dim " + std::to_string(st.input_dim) + ", got " +
                          std::to_string(x.cols()));
  }
  const RowMatrix padded = detail::pad_columns(x, st.padded_dim());
  RowMatrix out(x.rows(), static_cast<Eigen::Index>(st.padded_dim()));
  for (std::size_t g = 0; g < st.group_count; ++g) {
    out.middleCols(static_cast<Eigen::Index>(g * st.group_dim), static_cast<Eigen::Index>(st.group_dim)) =
        detail::project_group(detail::gather_group(padded, st, g), st.projections[g]);
  }
  return out;
}

// Uniform permutation of [0, n), Fisher-Yates.
inline std::vector<std::uint32_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  std::mt19937_64 rng(seed);
  for (std::size_t k = n; k > 1; --k) {
    std::swap(perm[k - 1], perm[detail::uniform_below(rng, k)]);
  }
  return perm;
}

struct StageFit {
  StageModel model;
  FeatureMatrix output;
};

// Fits one ensemble stage. Groups see disjoint column slices, so each group
// fit depends only on its own slice.
template <MetricLearner Learner>
StageFit fit_stage(const FeatureMatrix& features, const PairSet& pairs, std::size_t n_groups,
                   const Learner& learner, std::uint64_t seed) {
  if (n_groups < 1) throw ValidationError("stage needs at least one group");
  pairs.validate_for_fit(features.count());
  StageModel st;
  st.input_dim = features.dim();
  st.group_count = n_groups;
  st.group_dim = (features.dim() + n_groups - 1) / n_groups;
  st.permutation = shuffled_indices(st.padded_dim(), seed);

  const RowMatrix padded = detail::pad_columns(features.data(), st.padded_dim());
  st.projections.resize(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    try {
      // Group slices may hold zero-padded columns only in rare layouts; those
      // surface as learner errors for that group.
      const FeatureMatrix slice(detail::gather_group(padded, st, g));
      const MetricModel metric = learner(accumulate_stats(slice, pairs));
      st.projections[g] = mcd(metric.matrix());
    } catch (Error& e) {
      e.prepend("group " + std::to_string(g + 1) + "/" + std::to_string(n_groups));
      throw;
    }
  }
  RowMatrix out = apply_stage(st, features.data());
  return {std::move(st), FeatureMatrix(std::move(out))};
}

inline std::uint64_t stage_seed(std::uint64_t seed, std::size_t stage) {
  return detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(stage)));
}

// L ensemble stages with group counts 2^L, ..., 2, then one ungrouped metric
// on the last stage's output. L = 0 is the plain learner.
inline CascadeModel fit_cascade(const FeatureMatrix& features, const PairSet& pairs, std::size_t stages,
                                const LearnerSpec& learner, std::uint64_t seed) {
  pairs.validate_for_fit(features.count());
  CascadeModel model;
  model.input_dim = features.dim();
  model.learner = learner.kind;
  model.lambda = learner.lambda;
  model.seed = seed;
  FeatureMatrix current = features;
  if (stages > 0) {
    const auto counts = group_counts(stages);
    for (std::size_t s = 0; s < stages; ++s) {
      try {
        auto fit = fit_stage(current, pairs, counts[s], learner, stage_seed(seed, s));
        model.stages.push_back(std::move(fit.model));
        current = std::move(fit.output);
      } catch (Error& e) {
        e.prepend("stage " + std::to_string(s + 1) + "/" + std::to_string(stages));
        throw;
      }
    }
  }
  try {
    model.final_metric = learner(accumulate_stats(current, pairs));
  } catch (Error& e) {
    e.prepend("final metric");
    throw;
  }
  return model;
}

inline FeatureMatrix transform(const CascadeModel& model, const FeatureMatrix& features) {
  if (features.dim() != model.input_dim) {
    throw ValidationError("cascade expects dim " + std::to_string(model.input_dim) + ", got " +
                          std::to_string(features.dim()));
  }
  if (model.stages.empty()) return features;
  RowMatrix x = features.data();
  for (const auto& st : model.stages) x = apply_stage(st, x);
  return FeatureMatrix(std::move(x));
}

template <typename A, typename B>
double cascade_distance(const CascadeModel& model, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim || static_cast<std::size_t>(y.size()) != model.input_dim) {
    throw ValidationError("cascade_distance expects vectors of dim " + std::to_string(model.input_dim));
  }
  RowMatrix probe(2, static_cast<Eigen::Index>(model.input_dim));
  probe.row(0) = x.derived().reshaped().transpose();
  probe.row(1) = y.derived().reshaped().transpose();
  for (const auto& st : model.stages) probe = apply_stage(st, probe);
  return model.metric().distance(probe.row(0), probe.row(1));
}

}  // namespace ecml
