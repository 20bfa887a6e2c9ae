#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ecml/bytes.hpp"
#include "ecml/error.hpp"
#include "ecml/linalg.hpp"

namespace ecml {

// N samples x D dimensions, row-major, every entry finite.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(RowMatrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw ValidationError("feature matrix must be at least 1x1, got " +
                            std::to_string(data_.rows()) + "x" + std::to_string(data_.cols()));
    }
    for (Eigen::Index r = 0; r < data_.rows(); ++r) {
      for (Eigen::Index c = 0; c < data_.cols(); ++c) {
        if (!std::isfinite(data_(r, c))) {
          throw ValidationError("non-finite feature value at row " + std::to_string(r) +
                                ", column " + std::to_string(c));
        }
      }
    }
  }

  std::size_t count() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }
  const RowMatrix& data() const { return data_; }
  auto row(std::size_t i) const { return data_.row(static_cast<Eigen::Index>(i)); }

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  RowMatrix data_;
};

struct Pair {
  std::size_t i = 0;
  std::size_t j = 0;
  bool matched = false;

  friend bool operator==(const Pair&, const Pair&) = default;
};

class PairSet {
 public:
  PairSet() = default;
  explicit PairSet(std::vector<Pair> pairs) : pairs_(std::move(pairs)) {}

  const std::vector<Pair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  std::size_t positives() const {
    return static_cast<std::size_t>(
        std::count_if(pairs_.begin(), pairs_.end(), [](const Pair& p) { return p.matched; }));
  }
  std::size_t negatives() const { return size() - positives(); }

  // Index bounds and i != j against a sample count.
  void validate(std::size_t n_samples) const {
    for (std::size_t k = 0; k < pairs_.size(); ++k) {
      const auto& p = pairs_[k];
      if (p.i >= n_samples || p.j >= n_samples) {
        throw ValidationError("pair " + std::to_string(k) + " (" + std::to_string(p.i) + "," +
                              std::to_string(p.j) + ") out of range for " +
                              std::to_string(n_samples) + " samples");
      }
      if (p.i == p.j) {
        throw ValidationError("pair " + std::to_string(k) + " pairs sample " +
                              std::to_string(p.i) + " with itself");
      }
    }
  }

  // Fitting additionally needs both labels present.
  void validate_for_fit(std::size_t n_samples) const {
    validate(n_samples);
    if (positives() == 0) throw ValidationError("pair set has no matched pairs");
    if (negatives() == 0) throw ValidationError("pair set has no unmatched pairs");
  }

  friend bool operator==(const PairSet&, const PairSet&) = default;

 private:
  std::vector<Pair> pairs_;
};

using Labels = std::vector<std::int64_t>;

// ---------------------------------------------------------------------------
// File formats

enum class FeatureFormat { csv, binary };

inline constexpr std::string_view kFeatureMagic = "CMF1";

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? p : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// "# dim=D count=N"
inline void parse_header(const std::string& line, std::size_t& dim, std::size_t& count,
                         bool& has_dim, bool& has_count) {
  std::istringstream is(line.substr(1));
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const auto key = tok.substr(0, eq);
    std::size_t value = 0;
    if (!parse_number(std::string_view(tok).substr(eq + 1), value)) {
      throw FormatError("bad header field '" + tok + "'");
    }
    if (key == "dim") {
      dim = value;
      has_dim = true;
    } else if (key == "count") {
      count = value;
      has_count = true;
    }
  }
}

}  // namespace detail

inline FeatureMatrix parse_features_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::size_t hdr_dim = 0, hdr_count = 0;
  bool has_dim = false, has_count = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (rows.empty()) detail::parse_header(t, hdr_dim, hdr_count, has_dim, has_count);
      continue;
    }
    const auto cells = detail::split(t, ',');
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_number(std::string_view(cells[c]), v)) {
        throw FormatError("line " + std::to_string(line_no) + ", column " + std::to_string(c) +
                          ": cannot parse '" + cells[c] + "'");
      }
      if (!std::isfinite(v)) {
        throw FormatError("non-finite value '" + cells[c] + "' at row " +
                          std::to_string(rows.size()) + ", column " + std::to_string(c));
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError("line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                        " columns, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("feature file has no samples");
  const std::size_t n = rows.size(), d = rows.front().size();
  if (has_dim && hdr_dim != d) {
    throw FormatError("dimension mismatch: header declares dim=" + std::to_string(hdr_dim) +
                      ", payload has " + std::to_string(d));
  }
  if (has_count && hdr_count != n) {
    throw FormatError("dimension mismatch: header declares count=" + std::to_string(hdr_count) +
                      ", payload has " + std::to_string(n));
  }
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return FeatureMatrix(std::move(m));
}

inline FeatureMatrix parse_features_binary(const std::vector<char>& buf) {
  bytes::Reader rd(buf, "feature file");
  if (rd.raw(4) != kFeatureMagic) throw FormatError("bad feature file magic (expected CMF1)");
  const auto n = rd.u64();
  const auto d = rd.u64();
  if (n == 0 || d == 0) throw FormatError("feature file declares an empty matrix");
  const std::uint64_t avail = rd.size() - rd.position();
  if (d > avail / 8 || n > avail / 8 / d) {
    throw FormatError("truncated feature file: header declares " + std::to_string(n) + "x" +
                      std::to_string(d) + " values, payload holds " + std::to_string(avail) +
                      " bytes");
  }
  if (avail != n * d * 8) {
    throw FormatError("dimension mismatch: header declares " + std::to_string(n) + "x" +
                      std::to_string(d) + " but payload holds " + std::to_string(avail) +
                      " bytes");
  }
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint64_t c = 0; c < d; ++c) {
      const double v = rd.f64();
      if (!std::isfinite(v)) {
        throw FormatError("non-finite value at row " + std::to_string(r) + ", column " +
                          std::to_string(c));
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return FeatureMatrix(std::move(m));
}

inline FeatureMatrix load_features(const std::string& path, FeatureFormat format) {
  if (format == FeatureFormat::binary) return parse_features_binary(bytes::read_file(path));
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open feature file: " + path);
  try {
    return parse_features_csv(in);
  } catch (Error& e) {
    e.prepend(path);
    throw;
  }
}

// Binary if the file starts with the CMF1 magic, CSV otherwise.
inline FeatureFormat detect_feature_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature file: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string_view(magic, 4) == kFeatureMagic) return FeatureFormat::binary;
  return FeatureFormat::csv;
}

inline FeatureMatrix load_features(const std::string& path) {
  return load_features(path, detect_feature_format(path));
}

inline void save_features(const FeatureMatrix& f, const std::string& path, FeatureFormat format) {
  const auto& m = f.data();
  if (format == FeatureFormat::binary) {
    bytes::Writer w;
    w.raw(kFeatureMagic);
    w.u64(f.count());
    w.u64(f.dim());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    bytes::write_file(path, w.data());
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write feature file: " + path);
  out << "# dim=" << f.dim() << " count=" << f.count() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << detail::format_double(m(r, c));
    }
    out << '\n';
  }
}

// Format from the extension: ".csv" is CSV, anything else binary.
inline FeatureFormat format_for_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0 ? FeatureFormat::csv
                                                                           : FeatureFormat::binary;
}

inline PairSet load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open pair file: " + path);
  std::vector<Pair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = detail::split(t, ',');
    std::size_t i = 0, j = 0;
    int y = 0;
    if (cells.size() != 3 || !detail::parse_number(std::string_view(cells[0]), i) ||
        !detail::parse_number(std::string_view(cells[1]), j) ||
        !detail::parse_number(std::string_view(cells[2]), y) || (y != 0 && y != 1)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 'i,j,y' with y in {0,1}");
    }
    pairs.push_back({i, j, y == 1});
  }
  return PairSet(std::move(pairs));
}

inline void save_pairs(const PairSet& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write pair file: " + path);
  for (const auto& p : pairs) out << p.i << ',' << p.j << ',' << (p.matched ? 1 : 0) << '\n';
}

inline Labels load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open label file: " + path);
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::int64_t v = 0;
    if (!detail::parse_number(std::string_view(t), v)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected an integer label");
    }
    labels.push_back(v);
  }
  return labels;
}

inline void save_labels(const Labels& labels, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write label file: " + path);
  for (auto l : labels) out << l << '\n';
}

// ---------------------------------------------------------------------------
// PCA

// Centers, does not whiten.
class PcaModel {
 public:
  PcaModel(Vector mean, Matrix basis, Vector eigenvalues = {})
      : mean_(std::move(mean)), basis_(std::move(basis)), eigenvalues_(std::move(eigenvalues)) {
    if (basis_.rows() != mean_.size() || basis_.cols() < 1 || basis_.cols() > basis_.rows()) {
      throw ValidationError("PCA basis shape " + std::to_string(basis_.rows()) + "x" +
                            std::to_string(basis_.cols()) + " does not match mean of size " +
                            std::to_string(mean_.size()));
    }
    const Matrix gram = basis_.transpose() * basis_;
    const auto k = basis_.cols();
    if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8) {
      throw ValidationError("PCA basis columns are not orthonormal");
    }
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(mean_.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(basis_.cols()); }
  const Vector& mean() const { return mean_; }
  const Matrix& basis() const { return basis_; }
  // Retained covariance eigenvalues, non-increasing; empty for loaded models.
  const Vector& eigenvalues() const { return eigenvalues_; }

 private:
  Vector mean_;
  Matrix basis_;
  Vector eigenvalues_;
};

inline PcaModel fit_pca(const FeatureMatrix& features, std::size_t k) {
  const std::size_t n = features.count(), d = features.dim();
  if (k < 1 || k > d || n < 2 || k > n - 1) {
    throw ValidationError("PCA dimension k=" + std::to_string(k) + " outside [1, min(N-1, D)] = [1, " +
                          std::to_string(std::min(n > 0 ? n - 1 : 0, d)) + "]");
  }
  const Vector mean = features.data().colwise().mean().transpose();
  const Matrix centered = features.data().rowwise() - mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const auto eig = symmetric_eigen(symmetrize(cov));
  Matrix basis(d, k);
  Vector values(k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = static_cast<Eigen::Index>(d - 1 - c);
    basis.col(static_cast<Eigen::Index>(c)) = eig.vectors.col(src);
    values(static_cast<Eigen::Index>(c)) = eig.values(src);
  }
  return PcaModel(mean, std::move(basis), std::move(values));
}

inline FeatureMatrix apply_pca(const PcaModel& model, const FeatureMatrix& features) {
  if (features.dim() != model.input_dim()) {
    throw ValidationError("PCA expects dim " + std::to_string(model.input_dim()) + ", got " +
                          std::to_string(features.dim()));
  }
  RowMatrix out = (features.data().rowwise() - model.mean().transpose()) * model.basis();
  return FeatureMatrix(std::move(out));
}

// ---------------------------------------------------------------------------
// Pairs, padding, synthetic data

namespace detail {

// Unbiased draw from [0, n).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

inline std::uint64_t pair_key(std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
}

}  // namespace detail

// Draws `count` distinct unordered pairs without replacement: round(count *
// pos_fraction) uniformly among same-identity pairs, the rest uniformly among
// cross-identity pairs. Output order is shuffled; the result depends only on
// the inputs and the seed.
inline PairSet sample_pairs(const Labels& labels, std::size_t count, double pos_fraction,
                            std::uint64_t seed) {
  if (!(pos_fraction >= 0.0 && pos_fraction <= 1.0)) {
    throw ValidationError("pos_fraction must lie in [0, 1]");
  }
  const std::size_t n = labels.size();
  if (n > (std::size_t{1} << 32)) throw ValidationError("too many samples for pair sampling");
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(count) * pos_fraction));
  const std::size_t n_neg = count - n_pos;

  std::vector<std::pair<std::size_t, std::size_t>> same;
  {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    for (std::size_t s = 0; s < n;) {
      std::size_t e = s;
      while (e < n && labels[order[e]] == labels[order[s]]) ++e;
      for (std::size_t a = s; a < e; ++a)
        for (std::size_t b = a + 1; b < e; ++b)
          same.emplace_back(std::min(order[a], order[b]), std::max(order[a], order[b]));
      s = e;
    }
    std::sort(same.begin(), same.end());
  }
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n > 0 ? n - 1 : 0) / 2;
  const std::uint64_t total_neg = total - same.size();

  if (n_pos > same.size()) {
    throw ValidationError("infeasible pair request: " + std::to_string(n_pos) +
                          " matched pairs requested, only " + std::to_string(same.size()) + " exist");
  }
  if (n_neg > total_neg) {
    throw ValidationError("infeasible pair request: " + std::to_string(n_neg) +
                          " unmatched pairs requested, only " + std::to_string(total_neg) + " exist");
  }

  std::mt19937_64 rng(seed);
  std::vector<Pair> out;
  out.reserve(count);

  // Partial Fisher-Yates over the matched candidates.
  for (std::size_t k = 0; k < n_pos; ++k) {
    const auto r = k + detail::uniform_below(rng, same.size() - k);
    std::swap(same[k], same[r]);
    out.push_back({same[k].first, same[k].second, true});
  }

  if (n_neg > 0) {
    if (2 * static_cast<std::uint64_t>(n_neg) > total_neg) {
      std::vector<std::pair<std::size_t, std::size_t>> cross;
      cross.reserve(static_cast<std::size_t>(total_neg));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (labels[i] != labels[j]) cross.emplace_back(i, j);
      for (std::size_t k = 0; k < n_neg; ++k) {
        const auto r = k + detail::uniform_below(rng, cross.size() - k);
        std::swap(cross[k], cross[r]);
        out.push_back({cross[k].first, cross[k].second, false});
      }
    } else {
      // Rejection: a uniform ordered draw conditioned on i != j, distinct
      // labels and novelty is uniform over the remaining unordered pairs.
      std::unordered_set<std::uint64_t> seen;
      seen.reserve(n_neg * 2);
      while (seen.size() < n_neg) {
        const auto i = static_cast<std::size_t>(detail::uniform_below(rng, n));
        const auto j = static_cast<std::size_t>(detail::uniform_below(rng, n));
        if (i == j || labels[i] == labels[j]) continue;
        if (!seen.insert(detail::pair_key(i, j)).second) continue;
        out.push_back({std::min(i, j), std::max(i, j), false});
      }
    }
  }

  for (std::size_t k = out.size(); k > 1; --k) {
    std::swap(out[k - 1], out[detail::uniform_below(rng, k)]);
  }
  return PairSet(std::move(out));
}

inline FeatureMatrix zero_pad(const FeatureMatrix& features, std::size_t multiple) {
  if (multiple < 1) throw ValidationError("padding multiple must be >= 1");
  const std::size_t d = features.dim();
  const std::size_t padded = (d + multiple - 1) / multiple * multiple;
  if (padded == d) return features;
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(features.count()),
                                  static_cast<Eigen::Index>(padded));
  out.leftCols(static_cast<Eigen::Index>(d)) = features.data();
  return FeatureMatrix(std::move(out));
}

inline FeatureMatrix select_rows(const FeatureMatrix& features, const std::vector<std::size_t>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features.dim()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= features.count()) throw ValidationError("row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
  }
  return FeatureMatrix(std::move(out));
}

struct SyntheticParams {
  std::size_t identities = 20;
  std::size_t samples_per_id = 10;
  std::size_t dim = 64;
  double intra_spread = 1.0;  // sigma_w
  double inter_spread = 2.0;  // sigma_b
  std::uint64_t seed = 0;
};

struct SyntheticData {
  FeatureMatrix features;
  Labels labels;
};

// Identity means ~ N(0, sigma_b^2 I); samples ~ N(mean, sigma_w^2 I).
// Samples of one identity are contiguous; labels are 0..identities-1.
inline SyntheticData gen_synthetic(const SyntheticParams& p) {
  if (p.identities < 1 || p.samples_per_id < 1 || p.dim < 1) {
    throw ValidationError("synthetic generator counts must be >= 1");
  }
  if (!(p.intra_spread > 0.0) || !(p.inter_spread > 0.0)) {
    throw ValidationError("synthetic generator spreads must be > 0");
  }
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(p.dim);
  RowMatrix x(static_cast<Eigen::Index>(p.identities * p.samples_per_id), d);
  Labels labels;
  labels.reserve(p.identities * p.samples_per_id);
  Eigen::RowVectorXd mean(d);
  Eigen::Index r = 0;
  for (std::size_t id = 0; id < p.identities; ++id) {
    for (Eigen::Index c = 0; c < d; ++c) mean(c) = p.inter_spread * normal(rng);
    for (std::size_t s = 0; s < p.samples_per_id; ++s, ++r) {
      for (Eigen::Index c = 0; c < d; ++c) x(r, c) = mean(c) + p.intra_spread * normal(rng);
      labels.push_back(static_cast<std::int64_t>(id));
    }
  }
  return {FeatureMatrix(std::move(x)), std::move(labels)};
}

}  // namespace ecml
