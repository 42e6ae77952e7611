#include <cstdint>

#include <CLI11.hpp>

#include "tfe/cli.hpp"

// Thin argument layer; all behavior lives in the command functions.
int main(int argc, char** argv) {
  CLI::App app{"synthetic traffic flow estimation pipeline"};
  app.require_subcommand(1);

  tfe::GenerateOptions gen;
  std::uint64_t gen_seed = 0;
  CLI::App* cgen =
      app.add_subcommand("generate", "synthesize per-day trajectory CSVs");
  cgen->add_option("--config", gen.config_path, "key=value config file");
  cgen->add_option("--set", gen.overrides, "config override key=value, repeatable");
  CLI::Option* gen_seed_opt =
      cgen->add_option("--seed", gen_seed, "scenario seed override");
  cgen->add_option("--out", gen.out_dir, "output directory")->required();

  tfe::IngestOptions ing;
  double ing_rate = 0.0;
  std::uint64_t ing_seed = 0;
  CLI::App* cing = app.add_subcommand(
      "ingest", "aggregate trajectory CSVs into per-slot flow images");
  cing->add_option("--csv", ing.csv_dir, "directory holding day_*.csv files")
      ->required();
  cing->add_option("--config", ing.config_path, "key=value config file");
  cing->add_option("--set", ing.overrides, "config override key=value, repeatable");
  CLI::Option* ing_rate_opt =
      cing->add_option("--rate", ing_rate, "fraction of records kept, in (0, 1]");
  CLI::Option* ing_seed_opt =
      cing->add_option("--seed", ing_seed, "record sampling seed override");
  cing->add_option("--out", ing.out_dir, "output directory")->required();

  tfe::TrainOptions trn;
  std::uint64_t trn_seed = 0;
  CLI::App* ctrn =
      app.add_subcommand("train", "fit the estimation model on ingested data");
  ctrn->add_option("--data", trn.data_dir, "ingest output directory")->required();
  ctrn->add_option("--config", trn.config_path, "key=value config file");
  ctrn->add_option("--set", trn.overrides, "config override key=value, repeatable");
  CLI::Option* trn_seed_opt =
      ctrn->add_option("--seed", trn_seed, "training seed override");
  ctrn->add_option("--resume", trn.resume_checkpoint,
                   "checkpoint to continue from instead of a fresh start");
  ctrn->add_option("--out", trn.out_dir, "output directory")->required();

  tfe::EvaluateOptions ev;
  CLI::App* cev = app.add_subcommand(
      "evaluate", "score a checkpoint on the held-out test day");
  cev->add_option("--checkpoint", ev.checkpoint, "trained model file")->required();
  cev->add_option("--data", ev.data_dir, "ingest output directory")->required();
  cev->add_option("--config", ev.config_path, "key=value config file");
  cev->add_option("--set", ev.overrides, "config override key=value, repeatable");
  cev->add_option("--out", ev.out_dir, "output directory")->required();

  tfe::SweepOptions swp;
  std::uint64_t swp_seed = 0;
  CLI::App* cswp = app.add_subcommand(
      "sweep", "run ingest, train, evaluate across limitation rates");
  cswp->add_option("--csv", swp.csv_dir, "directory holding day_*.csv files")
      ->required();
  cswp->add_option("--config", swp.config_path, "key=value config file");
  cswp->add_option("--set", swp.overrides, "config override key=value, repeatable");
  cswp->add_option("--rates", swp.rates,
                   "limitation rates, comma separated or repeated")
      ->delimiter(',');
  CLI::Option* swp_seed_opt =
      cswp->add_option("--seed", swp_seed, "base seed for rate-derived stage seeds");
  cswp->add_option("--out", swp.out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (cgen->parsed()) {
    if (gen_seed_opt->count() > 0) gen.seed = gen_seed;
    return tfe::cmd_generate(gen);
  }
  if (cing->parsed()) {
    if (ing_rate_opt->count() > 0) ing.rate = ing_rate;
    if (ing_seed_opt->count() > 0) ing.seed = ing_seed;
    return tfe::cmd_ingest(ing);
  }
  if (ctrn->parsed()) {
    if (trn_seed_opt->count() > 0) trn.seed = trn_seed;
    return tfe::cmd_train(trn);
  }
  if (cev->parsed()) return tfe::cmd_evaluate(ev);
  if (cswp->parsed()) {
    if (swp_seed_opt->count() > 0) swp.seed = swp_seed;
    return tfe::cmd_sweep(swp);
  }
  return 1;
}
