// satbench: train, attack, defend and evaluate from one config file.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "satdefense/cli.hpp"

namespace {

using satdefense::RunConfig;
namespace cli = satdefense::cli;

RunConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string source = path;
  if (source.empty()) {
    if (const char* env = std::getenv(cli::kConfigEnvVar)) source = env;
  }
  RunConfig cfg = source.empty() ? RunConfig{} : RunConfig::load(source);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAT defense workbench: attacks, defenses and evaluation reports"};
  app.set_version_flag("--version", cli::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config_options = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path,
                    std::string("config file (default: $") + cli::kConfigEnvVar + ")");
    sub->add_option("-s,--set", overrides, "override a config value, key=value (repeatable)");
  };

  auto* train = app.add_subcommand("train", "train the classifier and write a checkpoint");
  add_config_options(train);

  auto* evaluate = app.add_subcommand("evaluate", "write eval.csv, bpda_rounds.csv and table1.csv");
  add_config_options(evaluate);

  bool full_grid = false;
  auto* sweep = app.add_subcommand("sweep", "SAT parameter sweep: sweep.csv and pareto.csv");
  add_config_options(sweep);
  sweep->add_flag("--full-grid", full_grid, "use the 11x11x11 grid");

  std::string image_a, image_b;
  auto* metrics = app.add_subcommand("metrics", "print l2, ssim, psnr and mse of two images");
  metrics->add_option("image_a", image_a, "PGM/PPM or tensor file")->required();
  metrics->add_option("image_b", image_b, "PGM/PPM or tensor file")->required();

  std::string attack_dir;
  auto* attack = app.add_subcommand("attack", "write adversarial examples as tensor files");
  add_config_options(attack);
  attack->add_option("-o,--out-dir", attack_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kInputError;
  }

  try {
    if (*metrics) return cli::cmd_metrics(image_a, image_b, std::cout);
    const RunConfig cfg = build_config(config_path, overrides);
    if (*train) return cli::cmd_train(cfg, std::cout);
    if (*evaluate) return cli::cmd_evaluate(cfg, std::cout);
    if (*sweep) return cli::cmd_sweep(cfg, full_grid, std::cout);
    if (*attack) return cli::cmd_attack(cfg, attack_dir, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "satbench: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kInternal;
}
