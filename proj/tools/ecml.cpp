// ecml: fit, evaluate and inspect closed-form metric learners and ensemble
// cascades from feature/pair files.
//
// Exit codes: 0 success, 1 internal error, 2 validation error (bad flags,
// files or shapes), 3 numerical failure (e.g. singular covariance).

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecml/commands.hpp"

namespace {

using namespace ecml;
using namespace ecml::cli;

void add_run_options(CLI::App* cmd, RunConfig& cfg, std::string& learner) {
  cmd->add_option("--learner", learner, "rmml | kissme | genuine-baseline")->capture_default_str();
  cmd->add_flag("--cascade", cfg.cascade, "fit an ensemble cascade instead of a single metric");
  cmd->add_option("--stages", cfg.stages, "number of ensemble stages L")->capture_default_str();
  cmd->add_option("--lambda", cfg.lambda, "RMML lambda (default 0.5 standalone, 0.1 in a cascade)");
  cmd->add_option("--pca-dim", cfg.pca_dim, "reduce features with PCA first");
  cmd->add_option("--seed", cfg.seed, "shuffle seed")->capture_default_str();
  cmd->add_option("--repeats", cfg.repeats, "cascade repeats with seeds seed..seed+R-1")->capture_default_str();
  cmd->add_option("--features", cfg.features, "feature file (CSV or CMF1 binary)");
  cmd->add_option("--pairs", cfg.pairs, "pair file (i,j,y per line)");
  cmd->add_option("--model", cfg.model, "model file to write");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-form metric learning with ensemble cascades"};
  app.set_config("--config", "", "TOML/INI config file; flags override it");
  app.require_subcommand(1);

  RunConfig fit_cfg;
  std::string fit_learner = "rmml";
  auto* fit = app.add_subcommand("fit", "learn a metric or cascade and write a model file");
  add_run_options(fit, fit_cfg, fit_learner);

  std::vector<std::string> eval_models;
  std::string eval_features, eval_pairs, eval_report, eval_roc;
  std::size_t eval_bins = kDefaultBins;
  auto* eval = app.add_subcommand("eval", "score pairs with one or more models and report EER / KL");
  eval->add_option("--model", eval_models, "model file; repeat for several models")->required();
  eval->add_option("--features", eval_features)->required();
  eval->add_option("--pairs", eval_pairs)->required();
  eval->add_option("--bins", eval_bins, "histogram bins for the KL divergence")->capture_default_str();
  eval->add_option("--report", eval_report, "write the key=value report here too");
  eval->add_option("--roc", eval_roc, "write threshold,far,frr CSV here");

  std::string tr_model, tr_features, tr_out;
  auto* trans = app.add_subcommand("transform", "map features into the final metric's space");
  trans->add_option("--model", tr_model)->required();
  trans->add_option("--features", tr_features)->required();
  trans->add_option("--out", tr_out, "output features (.csv for CSV, else binary)")->required();

  SynthConfig syn;
  auto* synth = app.add_subcommand("synth", "generate Gaussian identity clusters, labels and pairs");
  synth->add_option("--identities", syn.params.identities)->capture_default_str();
  synth->add_option("--samples-per-id", syn.params.samples_per_id)->capture_default_str();
  synth->add_option("--dim", syn.params.dim)->capture_default_str();
  synth->add_option("--intra", syn.params.intra_spread, "within-identity spread")->capture_default_str();
  synth->add_option("--inter", syn.params.inter_spread, "between-identity spread")->capture_default_str();
  synth->add_option("--seed", syn.params.seed)->capture_default_str();
  synth->add_option("--pair-count", syn.pair_count)->capture_default_str();
  synth->add_option("--pos-fraction", syn.pos_fraction)->capture_default_str();
  synth->add_option("--features", syn.features)->required();
  synth->add_option("--labels", syn.labels);
  synth->add_option("--pairs", syn.pairs);

  std::string pr_labels, pr_out;
  std::size_t pr_count = 1000;
  double pr_fraction = 0.5;
  std::uint64_t pr_seed = 0;
  auto* pairs = app.add_subcommand("pairs", "sample matched/unmatched pairs from a label file");
  pairs->add_option("--labels", pr_labels)->required();
  pairs->add_option("--count", pr_count)->capture_default_str();
  pairs->add_option("--pos-fraction", pr_fraction)->capture_default_str();
  pairs->add_option("--seed", pr_seed)->capture_default_str();
  pairs->add_option("--pairs", pr_out, "pair file to write")->required();

  std::string in_model;
  auto* inspect = app.add_subcommand("inspect", "print a model summary");
  inspect->add_option("--model", in_model)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*fit) {
      fit_cfg.learner = parse_learner(fit_learner);
      return cmd_fit(fit_cfg, std::cout, std::cerr);
    }
    if (*eval) {
      cmd_eval(eval_models, eval_features, eval_pairs, eval_bins, eval_report, eval_roc, std::cout, std::cerr);
      return kOk;
    }
    if (*trans) return cmd_transform(tr_model, tr_features, tr_out, std::cout);
    if (*synth) return cmd_synth(syn, std::cout);
    if (*pairs) return cmd_pairs(pr_labels, pr_count, pr_fraction, pr_seed, pr_out, std::cout);
    if (*inspect) return cmd_inspect(in_model, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kInternal;
}
