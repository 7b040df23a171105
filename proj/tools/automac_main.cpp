// Command-line front end: simulate / train / score / evaluate.

#include <torch/torch.h>

#include <CLI11.hpp>
#include <exception>
#include <iostream>
#include <string>

#include "automac/cli.hpp"
#include "automac/config.hpp"
#include "automac/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::int64_t seed = 0;
  std::string out_root;
  std::string arm = "proposed";
  std::string split = "test";
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "override the configured seed");
  sub->add_option("--out", args.out_root, "override the configured output root");
}

void add_arm(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--arm", args.arm, "proposed, simclr or supervised")
      ->check(CLI::IsMember({"proposed", "simclr", "supervised"}));
}

void add_split(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--split", args.split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
}

automac::RunConfig load(const CLI::App* sub, const CommonArgs& args) {
  automac::RunConfig config = automac::load_run_config(args.config_path);
  if (sub->count("--seed") > 0) config.seed = args.seed;
  if (sub->count("--out") > 0) config.output_root = args.out_root;
  automac::finalize_run_config(config);
  torch::set_num_threads(config.threads);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AutoMAC-MRI: motion-artifact grading for 2-D MR slices"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* simulate = app.add_subcommand("simulate", "generate a motion-corrupted dataset");
  add_common(simulate, args);
  CLI::App* train = app.add_subcommand("train", "train one arm end to end");
  add_common(train, args);
  add_arm(train, args);
  CLI::App* score = app.add_subcommand("score", "grade a split and write MoGrAS scores");
  add_common(score, args);
  add_arm(score, args);
  add_split(score, args);
  CLI::App* evaluate = app.add_subcommand("evaluate", "summarize scores into a report");
  add_common(evaluate, args);
  add_arm(evaluate, args);
  add_split(evaluate, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return automac::kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      const std::string manifest = automac::cmd_simulate(load(simulate, args));
      std::cout << "manifest: " << manifest << "\n";
    } else if (train->parsed()) {
      const automac::TrainOutcome outcome = automac::cmd_train(load(train, args), args.arm);
      std::cout << outcome.summary.dump(2) << "\n";
    } else if (score->parsed()) {
      const automac::ScoreOutput output =
          automac::cmd_score(load(score, args), args.arm, args.split);
      std::cout << "scores: " << output.csv_file << "\n"
                << "embeddings: " << output.embeddings_file << "\n";
    } else if (evaluate->parsed()) {
      const automac::EvaluateOutcome outcome =
          automac::cmd_evaluate(load(evaluate, args), args.arm, args.split);
      std::cout << "report: " << outcome.report_json_file << "\n";
      for (const std::string& f : outcome.figure_files) std::cout << "figure: " << f << "\n";
    }
  } catch (const automac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return automac::kExitConfig;
  } catch (const automac::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return automac::kExitData;
  } catch (const automac::ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return automac::kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
