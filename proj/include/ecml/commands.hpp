#pragma once

// Implementations behind the `ecml` command-line tool. Each command reads
// its inputs from files, writes results to files or `out`, and sends timing
// lines ("phase,seconds") to `diag` only.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ecml/cascade.hpp"
#include "ecml/error.hpp"
#include "ecml/eval.hpp"
#include "ecml/features.hpp"
#include "ecml/metrics.hpp"
#include "ecml/model_io.hpp"

namespace ecml::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kValidation = 2, kNumerical = 3 };

struct RunConfig {
  LearnerKind learner = LearnerKind::rmml;
  bool cascade = false;
  std::size_t stages = 3;
  std::optional<double> lambda;  // unset: 0.5 standalone, 0.1 in a cascade
  std::optional<std::size_t> pca_dim;
  std::uint64_t seed = 0;
  std::size_t repeats = 5;
  std::size_t bins = kDefaultBins;
  std::string features;
  std::string pairs;
  std::string model;
  std::string report;

  double effective_lambda() const { return lambda ? *lambda : (cascade ? kDefaultCascadeLambda : kDefaultLambda); }

  void validate() const {
    if (cascade && stages < 1) throw ValidationError("--cascade requires --stages >= 1");
    if (!(effective_lambda() >= 0.0)) throw ValidationError("--lambda must be >= 0");
    if (repeats < 1) throw ValidationError("--repeats must be >= 1");
    if (bins < 1) throw ValidationError("--bins must be >= 1");
  }
};

class PhaseTimer {
 public:
  PhaseTimer(std::ostream& diag, std::string phase)
      : diag_(diag), phase_(std::move(phase)), start_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    diag_ << phase_ << ',' << dt.count() << '\n';
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  std::ostream& diag_;
  std::string phase_;
  std::chrono::steady_clock::time_point start_;
};

// Model paths written by `fit`: one file for plain learners or a single
// repeat, otherwise PATH.0 ... PATH.{R-1} with seeds seed, seed+1, ...
inline std::vector<std::string> repeat_model_paths(const RunConfig& cfg) {
  if (!cfg.cascade || cfg.repeats == 1) return {cfg.model};
  std::vector<std::string> out;
  for (std::size_t r = 0; r < cfg.repeats; ++r) out.push_back(cfg.model + "." + std::to_string(r));
  return out;
}

inline void print_stage_summary(std::ostream& out, const CascadeModel& cm) {
  for (std::size_t s = 0; s < cm.stages.size(); ++s) {
    const auto& st = cm.stages[s];
    out << "stage " << s + 1 << ": groups=" << st.group_count << " group_dim=" << st.group_dim << " clamped=";
    for (std::size_t g = 0; g < st.projections.size(); ++g) out << (g ? "," : "") << st.projections[g].clamped_count;
    out << '\n';
  }
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& diag) {
  cfg.validate();
  if (cfg.features.empty() || cfg.pairs.empty() || cfg.model.empty()) {
    throw ValidationError("fit needs --features, --pairs and --model");
  }
  std::optional<FeatureMatrix> raw;
  PairSet pairs;
  {
    PhaseTimer t(diag, "load");
    raw.emplace(load_features(cfg.features));
    pairs = load_pairs(cfg.pairs);
  }
  pairs.validate_for_fit(raw->count());

  std::optional<PcaModel> pca;
  FeatureMatrix train = *raw;
  if (cfg.pca_dim) {
    PhaseTimer t(diag, "pca");
    pca.emplace(fit_pca(*raw, *cfg.pca_dim));
    train = apply_pca(*pca, *raw);
  }

  const LearnerSpec learner{cfg.learner, cfg.effective_lambda()};
  const std::size_t stages = cfg.cascade ? cfg.stages : 0;
  const auto paths = repeat_model_paths(cfg);
  for (std::size_t r = 0; r < paths.size(); ++r) {
    const std::uint64_t seed = cfg.seed + r;
    ModelFile mf{pca, {}};
    {
      PhaseTimer t(diag, paths.size() > 1 ? "fit." + std::to_string(r) : "fit");
      mf.cascade = fit_cascade(train, pairs, stages, learner, seed);
    }
    save_model(mf, paths[r]);
    out << "model=" << paths[r] << " seed=" << seed << " learner=" << to_string(cfg.learner)
        << " stages=" << stages << '\n';
    print_stage_summary(out, mf.cascade);
  }
  return kOk;
}

struct EvalOutcome {
  std::vector<EvalReport> reports;
  RepeatSummary summary;
};

inline EvalReport evaluate_model(const ModelFile& mf, const FeatureMatrix& raw, const PairSet& pairs,
                                 std::size_t bins) {
  pairs.validate(raw.count());
  const FeatureMatrix z = model_features(mf, raw);
  const auto& metric = mf.cascade.metric();
  const auto scored = score_pairs([&](const auto& a, const auto& b) { return metric.distance(a, b); }, z, pairs);
  return evaluate(scored, bins);
}

inline std::string outcome_to_text(const EvalOutcome& o) {
  if (o.reports.size() == 1) return report_to_text(o.reports.front());
  std::string text;
  for (std::size_t r = 0; r < o.reports.size(); ++r) {
    text += "model" + std::to_string(r) + ".eer=" + detail::format_double(o.reports[r].eer) + '\n';
    text += "model" + std::to_string(r) + ".kl=" + detail::format_double(o.reports[r].kl_pos_neg) + '\n';
  }
  text += "models=" + std::to_string(o.reports.size()) + '\n';
  text += "eer_mean=" + detail::format_double(o.summary.mean) + '\n';
  text += "eer_std=" + detail::format_double(o.summary.stddev) + '\n';
  return text;
}

// Scores every pair with each model. Several models (for instance cascade
// repeats differing only in seed) also yield the EER mean and sample
// standard deviation.
inline EvalOutcome cmd_eval(const std::vector<std::string>& models, const std::string& features,
                            const std::string& pairs_path, std::size_t bins, const std::string& report_path,
                            const std::string& roc_path, std::ostream& out, std::ostream& diag) {
  if (models.empty() || features.empty() || pairs_path.empty()) {
    throw ValidationError("eval needs --model, --features and --pairs");
  }
  std::optional<FeatureMatrix> raw;
  PairSet pairs;
  {
    PhaseTimer t(diag, "load");
    raw.emplace(load_features(features));
    pairs = load_pairs(pairs_path);
  }
  EvalOutcome outcome;
  std::vector<double> eers;
  for (const auto& path : models) {
    const auto mf = load_model(path);
    PhaseTimer t(diag, "eval");
    outcome.reports.push_back(evaluate_model(mf, *raw, pairs, bins));
    eers.push_back(outcome.reports.back().eer);
  }
  outcome.summary = summarize_eers(std::move(eers));
  const auto text = outcome_to_text(outcome);
  if (report_path.empty()) {
    out << text;
  } else {
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) throw ValidationError("cannot write report: " + report_path);
    f << text;
    out << text;
  }
  if (!roc_path.empty()) {
    std::ofstream f(roc_path, std::ios::trunc);
    if (!f) throw ValidationError("cannot write ROC table: " + roc_path);
    f << roc_to_csv(outcome.reports.front().roc);
  }
  return outcome;
}

inline int cmd_transform(const std::string& model, const std::string& features, const std::string& out_path,
                         std::ostream& out) {
  if (model.empty() || features.empty() || out_path.empty()) {
    throw ValidationError("transform needs --model, --features and --out");
  }
  const auto mf = load_model(model);
  const auto z = model_features(mf, load_features(features));
  save_features(z, out_path, format_for_path(out_path));
  out << "wrote " << z.count() << "x" << z.dim() << " to " << out_path << '\n';
  return kOk;
}

struct SynthConfig {
  SyntheticParams params;
  std::size_t pair_count = 1000;
  double pos_fraction = 0.5;
  std::string features;
  std::string labels;
  std::string pairs;
};

inline int cmd_synth(const SynthConfig& cfg, std::ostream& out) {
  if (cfg.features.empty()) throw ValidationError("synth needs --features");
  const auto data = gen_synthetic(cfg.params);
  save_features(data.features, cfg.features, format_for_path(cfg.features));
  if (!cfg.labels.empty()) save_labels(data.labels, cfg.labels);
  if (!cfg.pairs.empty()) {
    save_pairs(sample_pairs(data.labels, cfg.pair_count, cfg.pos_fraction, cfg.params.seed), cfg.pairs);
  }
  out << "seed=" << cfg.params.seed << '\n';
  return kOk;
}

inline int cmd_pairs(const std::string& labels, std::size_t count, double pos_fraction, std::uint64_t seed,
                     const std::string& pairs_path, std::ostream& out) {
  if (labels.empty() || pairs_path.empty()) throw ValidationError("pairs needs --labels and --pairs");
  const auto set = sample_pairs(load_labels(labels), count, pos_fraction, seed);
  save_pairs(set, pairs_path);
  out << "pairs=" << set.size() << " matched=" << set.positives() << " unmatched=" << set.negatives()
      << " seed=" << seed << '\n';
  return kOk;
}

inline void inspect_model(const ModelFile& mf, std::ostream& out) {
  const auto& cm = mf.cascade;
  out << "learner: " << to_string(cm.learner) << '\n';
  out << "lambda: " << detail::format_double(cm.lambda) << '\n';
  if (cm.metric().learner() == LearnerKind::rmml) out << "rho: " << detail::format_double(cm.metric().rho()) << '\n';
  out << "seed: " << cm.seed << '\n';
  if (mf.pca) out << "pca: " << mf.pca->input_dim() << " -> " << mf.pca->output_dim() << '\n';
  out << "input_dim: " << cm.input_dim << '\n';
  out << "stages: " << cm.stages.size() << '\n';
  if (!cm.stages.empty()) {
    out << "group_counts: ";
    for (std::size_t s = 0; s < cm.stages.size(); ++s) out << (s ? "," : "") << cm.stages[s].group_count;
    out << '\n';
  }
  print_stage_summary(out, cm);
  out << "final_dim: " << cm.metric().dim() << '\n';
}

inline int cmd_inspect(const std::string& model, std::ostream& out) {
  if (model.empty()) throw ValidationError("inspect needs --model");
  inspect_model(load_model(model), out);
  return kOk;
}

// Maps an exception escaping a command to its exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  if (dynamic_cast<const Error*>(&e)) return kValidation;
  return kInternal;
}

}  // namespace ecml::cli
