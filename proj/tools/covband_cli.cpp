#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "covband/harness.hpp"

namespace {

// Every flag is kept as the raw string and merged into the config map, so
// the file parser stays the single authority on types and validation.
struct CommonFlags {
  std::string config;
  std::string dataset;
  std::string methods;
  std::string alpha;
  std::string replicates;
  std::string train_size;
  std::string beta;
  std::string weights;
  std::string predictor;
  std::string if_order;
  std::string cv_folds;
  std::string tau_grid;
  std::string out;
  std::string seed;
  std::string workers;
  std::string max_rows;
};

void add_common(CLI::App* cmd, CommonFlags* f) {
  cmd->add_option("--config", f->config, "key=value config file");
  cmd->add_option("--dataset", f->dataset, "csv path, or 'synthetic'");
  cmd->add_option("--methods", f->methods, "comma-separated method tokens");
  cmd->add_option("--alpha", f->alpha, "target miscoverage level");
  cmd->add_option("--replicates", f->replicates, "number of replicates");
  cmd->add_option("--train-size", f->train_size, "training rows per replicate");
  cmd->add_option("--beta", f->beta, "comma-separated tilt coefficients");
  cmd->add_option("--weights", f->weights, "oracle or estimated");
  cmd->add_option("--predictor", f->predictor, "constant, ridge, or mlp");
  cmd->add_option("--if-order", f->if_order,
                  "influence orders for jawa and if-* methods");
  cmd->add_option("--cv-folds", f->cv_folds, "folds for cv+");
  cmd->add_option("--tau-grid", f->tau_grid,
                  "tolerance levels for error-assessment rows");
  cmd->add_option("--out", f->out, "output csv path (stdout when omitted)");
  cmd->add_option("--seed", f->seed, "master seed");
  cmd->add_option("--workers", f->workers, "worker threads over replicates");
  cmd->add_option("--max-rows", f->max_rows, "cap on dataset rows (0 = all)");
}

covband::ConfigMap merge_flags(const CommonFlags& f) {
  covband::ConfigMap kv;
  if (!f.config.empty()) kv = covband::read_config_file(f.config);
  // A list flag on the command line replaces the file's list outright;
  // repeated keys only accumulate within the file itself.
  auto replace = [&kv](const char* key, const std::string& value) {
    if (value.empty()) return;
    kv.erase(key);
    kv[key].push_back(value);
  };
  replace("dataset", f.dataset);
  replace("methods", f.methods);
  replace("alpha", f.alpha);
  replace("replicates", f.replicates);
  replace("train-size", f.train_size);
  replace("beta", f.beta);
  replace("weights", f.weights);
  replace("predictor", f.predictor);
  replace("if-order", f.if_order);
  replace("cv-folds", f.cv_folds);
  replace("tau-grid", f.tau_grid);
  replace("out", f.out);
  replace("seed", f.seed);
  replace("workers", f.workers);
  replace("max-rows", f.max_rows);
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prediction intervals and error assessments under covariate "
               "shift"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run_cmd =
      app.add_subcommand("run", "run the benchmark and write a csv");
  add_common(run_cmd, &run_flags);

  CommonFlags grid_flags;
  int splits = 10;
  CLI::App* grid_cmd = app.add_subcommand(
      "lambda-grid",
      "pick the smallest mlp regularizer with adequate coverage");
  add_common(grid_cmd, &grid_flags);
  grid_cmd->add_option("--splits", splits, "random splits per grid value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      covband::ExperimentConfig config =
          covband::parse_config(merge_flags(run_flags));
      covband::ExperimentResult result = covband::run_experiment(config);
      if (result.aborted > 0) {
        std::cerr << result.aborted << " (replicate, method) cell(s) aborted\n";
        return 1;
      }
      return 0;
    }
    covband::ExperimentConfig config =
        covband::parse_config(merge_flags(grid_flags));
    double lambda =
        covband::lambda_grid_search(config, grid_flags.config, splits);
    std::cout << "mlp-lambda=" << lambda << "\n";
    return 0;
  } catch (const covband::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
