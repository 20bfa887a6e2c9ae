#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ecml/error.hpp"
#include "ecml/features.hpp"

namespace ecml {

// Per-pair distances with match labels. Smaller score means "more alike".
class ScoredPairs {
 public:
  ScoredPairs(std::vector<double> scores, std::vector<bool> matched)
      : scores_(std::move(scores)), matched_(std::move(matched)) {
    if (scores_.size() != matched_.size()) throw ValidationError("scores and labels differ in length");
    for (std::size_t k = 0; k < scores_.size(); ++k) {
      if (!std::isfinite(scores_[k])) throw ValidationError("score " + std::to_string(k) + " is not finite");
      matched_[k] ? ++n_pos_ : ++n_neg_;
    }
    if (n_pos_ == 0 || n_neg_ == 0) {
      throw ValidationError("scored pairs need both matched and unmatched pairs");
    }
  }

  const std::vector<double>& scores() const { return scores_; }
  const std::vector<bool>& matched() const { return matched_; }
  std::size_t size() const { return scores_.size(); }
  std::size_t positives() const { return n_pos_; }
  std::size_t negatives() const { return n_neg_; }

 private:
  std::vector<double> scores_;
  std::vector<bool> matched_;
  std::size_t n_pos_ = 0;
  std::size_t n_neg_ = 0;
};

template <typename DistanceFn>
ScoredPairs score_pairs(DistanceFn&& distance, const FeatureMatrix& features, const PairSet& pairs) {
  pairs.validate(features.count());
  std::vector<double> scores;
  std::vector<bool> labels;
  scores.reserve(pairs.size());
  labels.reserve(pairs.size());
  for (const auto& p : pairs) {
    scores.push_back(distance(features.row(p.i), features.row(p.j)));
    labels.push_back(p.matched);
  }
  return ScoredPairs(std::move(scores), std::move(labels));
}

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // unmatched pairs accepted
  double frr = 0.0;  // matched pairs rejected
};

struct EerResult {
  double eer = 0.5;
  double threshold = 0.0;
  bool degenerate = false;
  std::vector<RocPoint> roc;
};

// Decision rule: match iff score < t. Thresholds are swept over the levels
// between consecutive distinct scores (below the minimum, each midpoint,
// above the maximum). FAR - FRR is non-decreasing along the sweep; the EER
// is read where it reaches zero, interpolating linearly between the two
// bracketing levels when it jumps across zero. Scores are not re-oriented.
inline EerResult compute_eer(const ScoredPairs& scored) {
  const auto& s = scored.scores();
  const auto& y = scored.matched();
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

  const double n_pos = static_cast<double>(scored.positives());
  const double n_neg = static_cast<double>(scored.negatives());

  EerResult out;
  // Level 0: nothing accepted.
  std::size_t acc_neg = 0, acc_pos = 0;
  out.roc.push_back({s[order.front()], 0.0, 1.0});
  for (std::size_t k = 0; k < order.size();) {
    const double v = s[order[k]];
    while (k < order.size() && s[order[k]] == v) {
      y[order[k]] ? ++acc_pos : ++acc_neg;
      ++k;
    }
    const double t = k < order.size() ? v + (s[order[k]] - v) * 0.5
                                       : std::nextafter(v, std::numeric_limits<double>::infinity());
    out.roc.push_back({t, static_cast<double>(acc_neg) / n_neg, 1.0 - static_cast<double>(acc_pos) / n_pos});
  }
  out.degenerate = out.roc.size() == 2;

  for (std::size_t k = 0; k < out.roc.size(); ++k) {
    const auto& cur = out.roc[k];
    const double diff = cur.far - cur.frr;
    if (diff == 0.0) {
      out.eer = cur.far;
      out.threshold = cur.threshold;
      return out;
    }
    if (diff > 0.0) {
      // k >= 1 because level 0 has diff = -1.
      const auto& prev = out.roc[k - 1];
      const double dprev = prev.far - prev.frr;
      const double a = -dprev / (diff - dprev);
      out.eer = prev.far + a * (cur.far - prev.far);
      out.threshold = prev.threshold + a * (cur.threshold - prev.threshold);
      return out;
    }
  }
  // Unreachable: the last level has FAR = 1, FRR = 0.
  return out;
}

inline constexpr std::size_t kDefaultBins = 100;
inline constexpr double kDefaultKlPseudoCount = 0.5;

// KL(Pos || Neg) in nats between histograms of matched and unmatched scores
// over the shared range [min, max] with `bins` equal-width bins. Each bin
// count receives `pseudo_count` before normalization.
inline double kl_divergence(const ScoredPairs& scored, std::size_t bins = kDefaultBins,
                            double pseudo_count = kDefaultKlPseudoCount) {
  if (bins < 1) throw ValidationError("kl_divergence needs at least one bin");
  if (!(pseudo_count > 0.0)) throw ValidationError("kl_divergence pseudo count must be > 0");
  const auto& s = scored.scores();
  const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw ValidationError("kl_divergence needs at least two distinct scores");
  std::vector<double> pos(bins, pseudo_count), neg(bins, pseudo_count);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k < s.size(); ++k) {
    auto b = static_cast<std::size_t>((s[k] - lo) / width);
    b = std::min(b, bins - 1);
    (scored.matched()[k] ? pos : neg)[b] += 1.0;
  }
  const double zp = std::accumulate(pos.begin(), pos.end(), 0.0);
  const double zn = std::accumulate(neg.begin(), neg.end(), 0.0);
  double kl = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double p = pos[b] / zp, q = neg[b] / zn;
    kl += p * std::log(p / q);
  }
  return std::max(kl, 0.0);
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  double eer = 0.5;
  double threshold = 0.0;
  bool degenerate = false;
  double kl_pos_neg = 0.0;
  std::size_t bins = kDefaultBins;
  std::size_t pairs = 0;
  std::vector<RocPoint> roc;

  friend bool operator==(const EvalReport& a, const EvalReport& b) {
    return a.eer == b.eer && a.threshold == b.threshold && a.degenerate == b.degenerate &&
           a.kl_pos_neg == b.kl_pos_neg && a.bins == b.bins && a.pairs == b.pairs;
  }
};

inline EvalReport evaluate(const ScoredPairs& scored, std::size_t bins = kDefaultBins) {
  auto eer = compute_eer(scored);
  EvalReport r;
  r.eer = eer.eer;
  r.threshold = eer.threshold;
  r.degenerate = eer.degenerate;
  r.kl_pos_neg = eer.degenerate ? 0.0 : kl_divergence(scored, bins);
  r.bins = bins;
  r.pairs = scored.size();
  r.roc = std::move(eer.roc);
  return r;
}

// Flat key=value document.
inline std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  os << "eer=" << detail::format_double(r.eer) << '\n'
     << "threshold=" << detail::format_double(r.threshold) << '\n'
     << "kl=" << detail::format_double(r.kl_pos_neg) << '\n'
     << "kl_direction=pos||neg\n"
     << "bins=" << r.bins << '\n'
     << "pairs=" << r.pairs << '\n'
     << "degenerate=" << (r.degenerate ? 1 : 0) << '\n';
  return os.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("report line without '=': " + t);
    kv[t.substr(0, eq)] = t.substr(eq + 1);
  }
  return kv;
}

inline EvalReport report_from_text(const std::string& text) {
  const auto kv = parse_key_values(text);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("report is missing '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) {
    double v = 0.0;
    if (!detail::parse_number(std::string_view(get(key)), v)) throw FormatError("report field '" + key + "' is not a number");
    return v;
  };
  auto count = [&](const std::string& key) {
    std::size_t v = 0;
    if (!detail::parse_number(std::string_view(get(key)), v)) throw FormatError("report field '" + key + "' is not a count");
    return v;
  };
  EvalReport r;
  r.eer = num("eer");
  r.threshold = num("threshold");
  r.kl_pos_neg = num("kl");
  r.bins = count("bins");
  r.pairs = count("pairs");
  r.degenerate = count("degenerate") != 0;
  return r;
}

inline std::string roc_to_csv(const std::vector<RocPoint>& roc) {
  std::ostringstream os;
  os << "threshold,far,frr\n";
  for (const auto& p : roc) {
    os << detail::format_double(p.threshold) << ',' << detail::format_double(p.far) << ','
       << detail::format_double(p.frr) << '\n';
  }
  return os.str();
}

struct RepeatSummary {
  std::vector<double> eers;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

inline RepeatSummary summarize_eers(std::vector<double> eers) {
  RepeatSummary s;
  s.eers = std::move(eers);
  if (s.eers.empty()) return s;
  s.mean = std::accumulate(s.eers.begin(), s.eers.end(), 0.0) / static_cast<double>(s.eers.size());
  if (s.eers.size() > 1) {
    double ss = 0.0;
    for (double e : s.eers) ss += (e - s.mean) * (e - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.eers.size() - 1));
  }
  return s;
}

}  // namespace ecml
