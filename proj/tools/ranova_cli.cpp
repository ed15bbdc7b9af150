// Command line driver: parses flags into a RunConfig and hands off to
// ranova::run. All real work, including the on-disk artifacts and error
// reports, lives in the library so it can be tested in-process.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ranova/ranova.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sparse ANOVA metamodels: fit, tune, Sobol indices, benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file");

  ranova::RunConfig cfg;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    cmd->add_option("--threads", cfg.threads, "worker threads")->capture_default_str();
  };
  auto add_model_opts = [&](CLI::App* cmd, bool allow_mixed) {
    std::vector<std::string> kernels = {"brownian", "matern", "gaussian"};
    if (allow_mixed) kernels.push_back("mixed");
    cmd->add_option("--kernel", cfg.kernel, "kernel family")
        ->check(CLI::IsMember(kernels))
        ->capture_default_str();
    cmd->add_option("--dmax", cfg.d_max, "largest interaction order")
        ->capture_default_str();
    cmd->add_option("--weights", cfg.weights, "penalty weight mode")
        ->check(CLI::IsMember({"unit", "nu", "order"}))
        ->capture_default_str();
    cmd->add_option("--quad-nodes", cfg.quad_nodes,
                    "quadrature nodes for kernel centering")
        ->capture_default_str();
  };
  auto add_grid_opts = [&](CLI::App* cmd) {
    cmd->add_option("--lmax", cfg.l_max, "number of mu grid levels")
        ->capture_default_str();
    cmd->add_option("--gamma-grid", cfg.gamma_grid,
                    "comma separated gamma values (default: automatic)")
        ->delimiter(',');
  };

  auto* fit = app.add_subcommand("fit", "fit one model at fixed penalties");
  fit->add_option("--input", cfg.input, "training data CSV (y,x1..xd)")->required();
  fit->add_option("--mu", cfg.mu, "mu penalty rate")->required();
  fit->add_option("--gamma", cfg.gamma, "gamma penalty rate")->capture_default_str();
  add_model_opts(fit, false);
  add_grid_opts(fit);
  add_common(fit);

  auto* tune = app.add_subcommand("tune", "select penalties and fit the final model");
  tune->add_option("--input", cfg.input, "training data CSV (y,x1..xd)")->required();
  tune->add_option("--test-input", cfg.test_input, "tuning data CSV for holdout selection");
  tune->add_option("--cv", cfg.cv, "number of cross-validation folds (overrides holdout)");
  tune->add_option("--procedure", cfg.procedure, "selection procedure")
      ->check(CLI::IsMember({"gs", "rdg"}))
      ->capture_default_str();
  add_model_opts(tune, true);
  add_grid_opts(tune);
  add_common(tune);

  auto* sobol = app.add_subcommand("sobol", "Sobol indices of a stored model");
  sobol->add_option("--model", cfg.model_path, "model.json from fit or tune")->required();
  sobol->add_option("--method", cfg.method, "index estimator")
      ->check(CLI::IsMember({"quadratic", "empirical"}))
      ->capture_default_str();
  sobol->add_option("--input", cfg.input, "evaluation design CSV (empirical method)");
  add_common(sobol);

  auto* bench = app.add_subcommand("benchmark", "replicated g-function study");
  bench->add_option("--n", cfg.n, "sample size per dataset")->capture_default_str();
  bench->add_option("--sigma", cfg.sigma, "noise standard deviation")->capture_default_str();
  bench->add_option("--replications", cfg.replications, "number of replications")
      ->capture_default_str();
  bench->add_option("--c", cfg.c_list, "g-function coefficients, comma separated")
      ->delimiter(',');
  bench->add_option("--rho", cfg.rho, "index threshold for active groups")
      ->capture_default_str();
  bench->add_option("--procedure", cfg.bench_procedure, "procedures to run")
      ->check(CLI::IsMember({"gs", "rdg", "both"}))
      ->capture_default_str();
  add_model_opts(bench, true);
  add_grid_opts(bench);
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    if (code == 0) return 0;  // --help
    try {
      ranova::write_json((std::filesystem::path(cfg.out_dir) / "error.json").string(),
                         ranova::error_to_json("argument", e.what()));
    } catch (...) {
    }
    return 2;
  }

  for (const auto* sub : app.get_subcommands()) cfg.command = sub->get_name();
  return ranova::run(cfg, std::cout, std::cerr);
}
