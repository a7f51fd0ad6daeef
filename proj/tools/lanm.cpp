// SPDX-License-Identifier: Apache-2.0
// lanm: generate / train / eval / traverse / check / counterexample.

#include <iostream>

#include <CLI11.hpp>

#include "lanm/commands.hpp"

int main(int argc, char** argv) {
  using namespace lanm;
  CLI::App app{"Latent additive noise models: data generation, training and identifiability checks"};
  app.require_subcommand(1);

  cmd::Globals g;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string config_path;
  auto* seed_opt = app.add_option("--seed", seed, "Seed override (replaces seed and seeds in the config)");
  auto* cfg_opt = app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Allow writing into a non-empty output directory");
  app.add_flag("--dry-run", g.dry_run, "Validate inputs and exit without writing");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for multi-seed runs (LANM_THREADS caps it)");
  // Accept the global flags after the subcommand name too.
  app.fallthrough();

  auto* gen = app.add_subcommand("gen", "Generate a synthetic (or fMRI-backed) dataset");

  cmd::TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train one model per seed");
  train->add_option("--data", train_opts.data, "Dataset directory")->required();
  train->add_flag("--resume", train_opts.resume, "Continue from the checkpoint in --out");

  cmd::EvalOptions eval_opts;
  bool pnl = false;
  auto* eval = app.add_subcommand("eval", "Score checkpoints against the dataset's ground truth");
  eval->add_option("--data", eval_opts.data, "Dataset directory")->required();
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint, run directory, or parent of seed-* runs")
      ->required();
  auto* pnl_opt = eval->add_flag("--pnl", pnl, "Report Spearman columns and the monotone verdict");

  cmd::TraverseOptions trav;
  std::vector<double> range;
  auto* traverse = app.add_subcommand("traverse", "Intervene on one latent and decode");
  traverse->add_option("--data", trav.data, "Dataset directory (probe rows)")->required();
  traverse->add_option("--checkpoint", trav.checkpoint, "Checkpoint or run directory")->required();
  traverse->add_option("--node", trav.node, "Latent to intervene on (1-based)")->required();
  traverse->add_option("--range", range, "Grid bounds: lo hi")->expected(2);
  traverse->add_option("--steps", trav.steps, "Grid points");
  traverse->add_option("--probes", trav.probes, "Probe rows");

  cmd::CheckOptions check_opts;
  auto* check = app.add_subcommand("check", "Run the assumption checkers on a dataset or config");
  check->add_option("--data", check_opts.data, "Dataset directory (default: generate from --config)");

  cmd::CounterexampleOptions ce;
  auto* counter = app.add_subcommand("counterexample", "Build the observationally equivalent pair");
  counter->add_flag("--mlp2-constant", ce.mlp2_constant, "Make the invariant part a constant shift");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cmd::kUsage;
  }

  if (*seed_opt) g.seed = seed;
  if (*cfg_opt) g.config = config_path;
  if (*threads_opt) g.threads = threads;
  if (*pnl_opt) eval_opts.pnl = pnl;
  if (range.size() == 2) {
    trav.lo = range[0];
    trav.hi = range[1];
  }

  try {
    if (*gen) return cmd::cmd_gen(g);
    if (*train) return cmd::cmd_train(g, train_opts);
    if (*eval) return cmd::cmd_eval(g, eval_opts);
    if (*traverse) return cmd::cmd_traverse(g, trav);
    if (*check) return cmd::cmd_check(g, check_opts);
    if (*counter) return cmd::cmd_counterexample(g, ce);
  } catch (const lanm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmd::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmd::kNumeric;
  }
  return cmd::kUsage;
}
