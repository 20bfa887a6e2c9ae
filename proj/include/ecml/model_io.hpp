#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecml/bytes.hpp"
#include "ecml/cascade.hpp"
#include "ecml/error.hpp"
#include "ecml/features.hpp"

namespace ecml {

// Everything needed to score new features: optional PCA, then the cascade.
struct ModelFile {
  std::optional<PcaModel> pca;
  CascadeModel cascade;

  std::size_t input_dim() const { return pca ? pca->input_dim() : cascade.input_dim; }
};

// Layout, all integers and floats little-endian:
//   "ECML" u32 version
//   u8 learner, f64 lambda, u64 seed, u64 input_dim, u32 L
//   L x { u32 N_l, u32 D_g, u32[N_l*D_g] permutation,
//         N_l x f64[D_g*D_g] P (row-major), N_l x u32 clamped }
//   u64 final_dim, u8 final learner, f64 final lambda, f64 final rho,
//   f64[final_dim^2] M (row-major)
//   u8 has_pca; if 1: u64 D, u64 k, f64[D] mean, f64[D*k] basis (row-major)
inline constexpr std::string_view kModelMagic = "ECML";
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void write_matrix(bytes::Writer& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

inline Matrix read_matrix(bytes::Reader& rd, std::uint64_t rows, std::uint64_t cols) {
  if (cols != 0 && rows > (rd.size() - rd.position()) / 8 / cols) rd.need(rows * cols * 8);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rd.f64();
  return m;
}

inline LearnerKind read_learner(bytes::Reader& rd) {
  const auto tag = rd.u8();
  if (tag > 2) throw FormatError("corrupt model: unknown learner tag " + std::to_string(tag));
  return static_cast<LearnerKind>(tag);
}

}  // namespace detail

inline std::vector<char> encode_model(const ModelFile& mf) {
  const auto& cm = mf.cascade;
  cm.validate();
  bytes::Writer w;
  w.raw(kModelMagic);
  w.u32(kModelVersion);
  w.u8(static_cast<std::uint8_t>(cm.learner));
  w.f64(cm.lambda);
  w.u64(cm.seed);
  w.u64(cm.input_dim);
  w.u32(static_cast<std::uint32_t>(cm.stages.size()));
  for (const auto& st : cm.stages) {
    w.u32(static_cast<std::uint32_t>(st.group_count));
    w.u32(static_cast<std::uint32_t>(st.group_dim));
    for (auto v : st.permutation) w.u32(v);
    for (const auto& pr : st.projections) detail::write_matrix(w, pr.p);
    for (const auto& pr : st.projections) w.u32(static_cast<std::uint32_t>(pr.clamped_count));
  }
  const auto& fm = cm.metric();
  w.u64(fm.dim());
  w.u8(static_cast<std::uint8_t>(fm.learner()));
  w.f64(fm.lambda());
  w.f64(fm.rho());
  detail::write_matrix(w, fm.matrix());
  w.u8(mf.pca ? 1 : 0);
  if (mf.pca) {
    w.u64(mf.pca->input_dim());
    w.u64(mf.pca->output_dim());
    for (Eigen::Index i = 0; i < mf.pca->mean().size(); ++i) w.f64(mf.pca->mean()(i));
    detail::write_matrix(w, mf.pca->basis());
  }
  return w.data();
}

inline ModelFile decode_model(const std::vector<char>& buf) {
  bytes::Reader rd(buf, "model file");
  if (buf.size() < 4 || rd.raw(4) != kModelMagic) throw FormatError("corrupt model: bad magic (expected ECML)");
  const auto version = rd.u32();
  if (version != kModelVersion) {
    throw FormatError("unsupported model version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelVersion) + ")");
  }
  ModelFile mf;
  auto& cm = mf.cascade;
  cm.learner = detail::read_learner(rd);
  cm.lambda = rd.f64();
  cm.seed = rd.u64();
  cm.input_dim = rd.u64();
  const auto n_stages = rd.u32();
  std::size_t dim = cm.input_dim;
  for (std::uint32_t s = 0; s < n_stages; ++s) {
    StageModel st;
    st.input_dim = dim;
    st.group_count = rd.u32();
    st.group_dim = rd.u32();
    if (st.group_count == 0 || st.group_dim == 0) {
      throw FormatError("corrupt model: stage " + std::to_string(s + 1) + " has empty groups");
    }
    const std::uint64_t padded = static_cast<std::uint64_t>(st.group_count) * st.group_dim;
    rd.need(padded * 4);
    st.permutation.resize(padded);
    for (auto& v : st.permutation) v = rd.u32();
    st.projections.resize(st.group_count);
    for (auto& pr : st.projections) pr.p = detail::read_matrix(rd, st.group_dim, st.group_dim);
    for (auto& pr : st.projections) pr.clamped_count = rd.u32();
    dim = st.padded_dim();
    cm.stages.push_back(std::move(st));
  }
  const auto final_dim = rd.u64();
  const auto final_learner = detail::read_learner(rd);
  const double final_lambda = rd.f64();
  const double final_rho = rd.f64();
  Matrix m = detail::read_matrix(rd, final_dim, final_dim);
  try {
    cm.final_metric.emplace(std::move(m), final_learner, final_lambda, final_rho);
  } catch (Error& e) {
    throw FormatError(std::string("corrupt model: ") + e.what());
  }
  if (rd.u8() == 1) {
    const auto d = rd.u64();
    const auto k = rd.u64();
    Vector mean = detail::read_matrix(rd, d, 1);
    Matrix basis = detail::read_matrix(rd, d, k);
    try {
      mf.pca.emplace(std::move(mean), std::move(basis));
    } catch (Error& e) {
      throw FormatError(std::string("corrupt model: ") + e.what());
    }
    if (mf.pca->output_dim() != cm.input_dim) throw FormatError("corrupt model: PCA output dim != cascade input dim");
  }
  if (!rd.at_end()) {
    throw FormatError("corrupt model: " + std::to_string(rd.size() - rd.position()) + " trailing bytes");
  }
  try {
    cm.validate();
  } catch (Error& e) {
    throw FormatError(std::string("corrupt model: ") + e.what());
  }
  return mf;
}

inline void save_model(const ModelFile& mf, const std::string& path) { bytes::write_file(path, encode_model(mf)); }

inline ModelFile load_model(const std::string& path) {
  try {
    return decode_model(bytes::read_file(path));
  } catch (Error& e) {
    e.prepend(path);
    throw;
  }
}

// Features in the space the final metric scores: PCA (if any) then stages.
inline FeatureMatrix model_features(const ModelFile& mf, const FeatureMatrix& raw) {
  if (raw.dim() != mf.input_dim()) {
    throw ValidationError("model expects features of dim " + std::to_string(mf.input_dim()) + ", got " +
                          std::to_string(raw.dim()));
  }
  return transform(mf.cascade, mf.pca ? apply_pca(*mf.pca, raw) : raw);
}

}  // namespace ecml
