// grace: generate data, train, evaluate, run ablations and render reports.
//
//   grace generate --config exp.json --out data/
//   grace train    --config exp.json --data data/ --out run/
//   grace eval     --checkpoint run/checkpoint.grck --data data/ --out eval/
//   grace ablate   --config exp.json --data data/ --out ablate/
//   grace report   run/ ablate/ --out report/
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 runtime
// failure.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "grace/error.hpp"
#include "grace/harness/commands.hpp"

namespace {

using grace::ExperimentConfig;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<std::string> k_list;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> tau;
  std::optional<std::string> infonce_variant;
  std::optional<std::string> rank_heads;
  std::optional<std::string> distill_target;
  std::optional<unsigned> threads;
  std::optional<std::string> seeds;
};

std::vector<std::uint64_t> parse_list_u64(const std::string& s, const char* flag) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw grace::UsageError(std::string(flag) + ": '" + part + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw grace::UsageError(std::string(flag) + " must not be empty");
  return out;
}

// Config file first, flags on top, then validation.
ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : grace::load_config(o.config);
  nlohmann::json patch = grace::config_to_json(c);
  if (o.seed) patch["seed"] = *o.seed;
  if (o.ablation) patch["train"]["ablation"] = *o.ablation;
  if (o.k_list) {
    std::vector<long long> ks;
    for (auto v : parse_list_u64(*o.k_list, "--k-list")) ks.push_back(static_cast<long long>(v));
    patch["loss"]["k_list"] = ks;
    patch["loss"]["k_weights"] = nlohmann::json::array();
  }
  if (o.lambda1) patch["loss"]["lambda1"] = *o.lambda1;
  if (o.lambda2) patch["loss"]["lambda2"] = *o.lambda2;
  if (o.tau) patch["loss"]["tau"] = *o.tau;
  if (o.infonce_variant) patch["loss"]["infonce_variant"] = *o.infonce_variant;
  if (o.distill_target) patch["loss"]["distill_target"] = *o.distill_target;
  if (o.rank_heads) patch["train"]["model"]["rank_heads"] = *o.rank_heads;
  if (o.threads) patch["train"]["threads"] = *o.threads;
  if (o.seeds) patch["ablate"]["seeds"] = parse_list_u64(*o.seeds, "--seeds");
  c = grace::config_from_json(patch);
  c.validate();
  return c;
}

void add_config_flags(CLI::App* cmd, Overrides& o, bool training) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--threads", o.threads, "worker threads for generation and evaluation");
  if (!training) return;
  cmd->add_option("--ablation", o.ablation, "variant to train");
  cmd->add_option("--k-list", o.k_list, "comma-separated top-k list, e.g. 10,30,50,100");
  cmd->add_option("--lambda1", o.lambda1, "rank-consistency weight");
  cmd->add_option("--lambda2", o.lambda2, "contrastive weight");
  cmd->add_option("--tau", o.tau, "InfoNCE temperature");
  cmd->add_option("--infonce-variant", o.infonce_variant, "standard | literal");
  cmd->add_option("--rank-heads", o.rank_heads, "single | per_k");
  cmd->add_option("--distill-target", o.distill_target, "teacher_score | position");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grace: multi-task pre-ranking experiments"};
  app.require_subcommand(1);

  Overrides o;
  std::string out, data, checkpoint;
  bool force = false;
  std::vector<std::string> run_dirs;
  grace::EvalOptions eval_opts;
  std::optional<std::string> score;
  bool with_random_negatives = false;

  auto* gen = app.add_subcommand("generate", "synthesize a dataset and pretrained fixture");
  add_config_flags(gen, o, false);

  auto* tr = app.add_subcommand("train", "train one variant on a generated dataset");
  add_config_flags(tr, o, true);
  tr->add_option("--data", data, "generate output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  ev->add_option("--checkpoint", checkpoint, "checkpoint inside a train output directory")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--data", data, "generate output directory")->required();
  ev->add_option("--score", score, "recall headline score: ctr_cvr | ctr | rank");
  ev->add_flag("--auc-random-negatives", with_random_negatives,
               "include random negatives in AUC");
  ev->add_option("--threads", eval_opts.threads, "evaluation threads");

  auto* ab = app.add_subcommand("ablate", "train every variant for every seed");
  add_config_flags(ab, o, true);
  ab->add_option("--data", data, "generate output directory")->required();
  ab->add_option("--seeds", o.seeds, "comma-separated training seeds");

  auto* rep = app.add_subcommand("report", "merge run directories into tables");
  rep->add_option("runs", run_dirs, "train, eval or ablate output directories")->required();

  for (auto* cmd : {gen, tr, ev, ab, rep}) {
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_flag("--force", force, "allow writing into a non-empty output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      grace::cmd_generate(resolve(o), out, force);
    } else if (tr->parsed()) {
      grace::cmd_train(resolve(o), data, out, force);
    } else if (ev->parsed()) {
      if (score) {
        eval_opts.headline = grace::parse_score_kind(*score);
        if (!eval_opts.headline) throw grace::UsageError("--score must be ctr_cvr, ctr or rank");
      }
      if (with_random_negatives) eval_opts.include_random_negatives = true;
      grace::cmd_eval(checkpoint, data, eval_opts, out, force);
    } else if (ab->parsed()) {
      grace::cmd_ablate(resolve(o), data, out, force);
    } else if (rep->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      grace::cmd_report(dirs, out, force);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "grace: %s\n", e.what());
    return grace::exit_code_for(e);
  }
  return 0;
}
