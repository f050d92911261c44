#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "covband/dataset.hpp"
#include "covband/predictors.hpp"

namespace covband {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV with one header row, numeric body, last column the label.
// max_rows = 0 reads everything; otherwise only the first max_rows data rows.
Dataset load_csv(const std::string& path, int max_rows = 0);

// Built-in generator for dataset = "synthetic": x ~ N(0,1), y = slope*x +
// noise*N(0,1), drawn fresh per replicate.
struct SyntheticSpec {
  int rows = 400;
  double slope = 2.0;
  double noise = 1.0;
};

struct ExperimentConfig {
  std::string dataset = "synthetic";
  SyntheticSpec synthetic;
  std::vector<std::string> methods{"jaw"};
  double alpha = 0.1;
  int replicates = 1;
  int train_size = 200;
  std::vector<double> beta;  // empty = no shift
  double sample_fraction = 0.5;
  std::string weight_source = "oracle";  // oracle | estimated
  PredictorSpec predictor;
  int cv_folds = 10;
  std::vector<int> if_orders{1};
  int tau_grid = 0;  // per-method AUROC rows at this many tolerance levels
  std::string out;   // empty = stdout
  std::uint64_t master_seed = 1;
  int workers = 1;
  int max_rows = 0;
  bool timing = false;  // off keeps output byte-identical across runs
};

// key=value lines, '#' comments; repeated keys accumulate.
using ConfigMap = std::map<std::string, std::vector<std::string>>;

ConfigMap read_config_file(const std::string& path);

// Later entries win for scalar keys, so CLI overrides are appended last.
ExperimentConfig parse_config(const ConfigMap& kv);

// One output record; aggregate rows use replicate -1 (mean) and -2 (se).
struct OutputRow {
  int replicate = 0;
  std::string method;
  double alpha = 0.0;
  std::optional<double> coverage;
  std::optional<double> median_width;
  std::optional<double> frac_infinite;
  std::optional<double> ess;
  std::optional<double> runtime_ms;
  std::optional<double> tau;
  std::optional<double> auroc;
};

struct ExperimentResult {
  std::vector<OutputRow> rows;
  int aborted = 0;
};

// Runs every (replicate, method) cell, appends aggregate rows, and writes
// the CSV to config.out (stdout when empty). Replicates may run on several
// workers; rows are sorted by (replicate, method, tau) regardless.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string render_csv(const std::vector<OutputRow>& rows);

// Sweeps the fixed L2 grid {0.5,...,128}, scoring each value by first-order
// influence-approximated jackknife+ coverage over `splits` random splits,
// and returns the smallest value whose mean coverage exceeds 0.875.
// config_path, when nonempty, gets its mlp-lambda key rewritten in place.
double lambda_grid_search(const ExperimentConfig& config,
                          const std::string& config_path, int splits);

}  // namespace covband
