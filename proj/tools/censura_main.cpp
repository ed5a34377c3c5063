#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "censura/cli/commands.hpp"
#include "censura/log.hpp"

using namespace censura;
using namespace censura::cli;

int main(int argc, char** argv) {
  CLI::App app{"censura: uncertainty-aware regression with censored labels"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  SplitOptions split;
  auto* split_cmd = app.add_subcommand("split", "Temporal five-fold split of a dataset CSV");
  split_cmd->add_option("--input", split.input, "Dataset CSV")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic censored dataset");
  synth_cmd->add_option("--spec", synth.spec, "Synthetic spec (JSON)")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->required();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  TrainOptions train;
  std::string train_model_name;
  std::string train_censored;
  std::uint64_t train_seed = 0;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Train one model on one temporal setting");
  train_cmd->add_option("--config", train.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--setting", train.setting, "Temporal setting")->required()->check(CLI::Range(1, 3));
  train_cmd->add_option("--model", train_model_name, "Model kind")->required();
  train_cmd->add_option("--censored", train_censored, "Use censored labels")
      ->required()
      ->check(CLI::IsMember({"on", "off"}));
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");
  auto* train_out_opt = train_cmd->add_option("--out", train_out, "Override the output directory");

  EvaluateOptions evaluate;
  std::string eval_model;
  std::string eval_predictions;
  std::string eval_source;
  std::uint64_t eval_sampling_seed = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on a test CSV");
  auto* eval_model_opt = eval_cmd->add_option("--model", eval_model, "Model artifact")->check(CLI::ExistingFile);
  auto* eval_pred_opt =
      eval_cmd->add_option("--predictions", eval_predictions, "Prediction CSV instead of a model")
          ->check(CLI::ExistingFile);
  eval_model_opt->excludes(eval_pred_opt);
  eval_cmd->add_option("--test", evaluate.test, "Test CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--bins", evaluate.bins, "ENCE bins")->capture_default_str()->check(CLI::PositiveNumber);
  auto* eval_source_opt = eval_cmd->add_option("--variance-source", eval_source, "aleatoric or epistemic")
                              ->check(CLI::IsMember({"aleatoric", "epistemic"}));
  auto* eval_seed_opt = eval_cmd->add_option("--sampling-seed", eval_sampling_seed, "Seed for stochastic inference");
  eval_cmd->add_option("--out", evaluate.out, "Output directory")->capture_default_str();

  AblateOptions ablate;
  std::string ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "Censored vs observed-only training, delta NLL per model");
  ablate_cmd->add_option("--config", ablate.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  auto* ablate_out_opt = ablate_cmd->add_option("--out", ablate_out, "Override the output directory");

  CompareOptions compare;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "Rank models with significance stars");
  compare_cmd->add_option("--reports", compare.reports_glob, "Glob of report JSON files")->required();
  compare_cmd->add_option("--metric", compare.metric, "mse, nll or ence")
      ->capture_default_str()
      ->check(CLI::IsMember({"mse", "nll", "ence"}));
  compare_cmd->add_option("--alpha", compare.alpha, "Significance level")->capture_default_str();
  auto* compare_out_opt = compare_cmd->add_option("--out", compare_out, "Write comparison.json/csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  log::set_level(quiet ? log::Level::error : verbose ? log::Level::info : log::Level::warning);
  std::ostream null_stream(nullptr);
  std::ostream& msg = quiet ? null_stream : std::cerr;

  try {
    if (*split_cmd) {
      cmd_split(split, msg);
    } else if (*synth_cmd) {
      cmd_synth(synth, msg);
    } else if (*train_cmd) {
      train.model = model_from_string(train_model_name);
      train.censored = train_censored == "on";
      if (*train_seed_opt) train.seed = train_seed;
      if (*train_out_opt) train.out = train_out;
      const TrainOutputs out = cmd_train(train, msg);
      std::cout << out.model.string() << '\n';
    } else if (*eval_cmd) {
      if (*eval_model_opt) evaluate.model = eval_model;
      if (*eval_pred_opt) evaluate.predictions = eval_predictions;
      if (*eval_source_opt) evaluate.source = variance_source_from_string(eval_source);
      if (*eval_seed_opt) evaluate.sampling_seed = eval_sampling_seed;
      cmd_evaluate(evaluate, msg);
    } else if (*ablate_cmd) {
      if (*ablate_out_opt) ablate.out = ablate_out;
      cmd_ablate(ablate, msg);
    } else if (*compare_cmd) {
      if (*compare_out_opt) compare.out = compare_out;
      cmd_compare(compare, std::cout);
    }
  } catch (...) {
    return report_exception(std::cerr);
  }
  return kExitOk;
}
