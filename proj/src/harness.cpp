#include "covband/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "covband/audit.hpp"
#include "covband/iflow.hpp"
#include "covband/infer.hpp"
#include "covband/metrics.hpp"
#include "covband/rng.hpp"
#include "covband/shift.hpp"
#include "covband/weights_est.hpp"

namespace covband {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool parse_double_cell(const std::string& cell, double* out) {
  std::string t = trim(cell);
  if (t.empty()) return false;
  const char* begin = t.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + t.size()) return false;
  *out = v;
  return true;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_cell(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string();
}

// ---------------------------------------------------------------------------
// Config parsing

const std::set<std::string> kKnownKeys = {
    "dataset",      "synthetic-rows", "synthetic-slope", "synthetic-noise",
    "methods",      "alpha",          "replicates",      "train-size",
    "beta",         "sample-fraction", "weights",        "predictor",
    "ridge-lambda", "mlp-hidden",     "mlp-epochs",      "mlp-batch",
    "mlp-lr",       "mlp-lambda",     "mlp-seed",        "cv-folds",
    "if-order",     "tau-grid",       "out",             "seed",
    "workers",      "max-rows",       "timing"};

const std::set<std::string> kKnownMethods = {
    "naive",          "jackknife",    "jackknife+", "jackknife-mm",
    "cv+",            "split",        "weighted-split", "jaw",
    "jawa",           "if-jackknife", "if-jackknife+",  "if-jackknife-mm"};

const std::string* last_value(const ConfigMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end() || it->second.empty()) return nullptr;
  return &it->second.back();
}

double parse_num(const std::string& key, const std::string& raw) {
  double v = 0.0;
  if (!parse_double_cell(raw, &v)) {
    throw ConfigError("config key '" + key + "' has non-numeric value '" + raw +
                      "'");
  }
  return v;
}

int parse_int(const std::string& key, const std::string& raw) {
  double v = parse_num(key, raw);
  double r = std::round(v);
  if (std::abs(v - r) > 0 || r < -2147483648.0 || r > 2147483647.0) {
    throw ConfigError("config key '" + key + "' needs an integer, got '" + raw +
                      "'");
  }
  return static_cast<int>(r);
}

std::uint64_t parse_u64(const std::string& key, const std::string& raw) {
  std::string t = trim(raw);
  std::uint64_t v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key +
                      "' needs a non-negative integer, got '" + raw + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  std::string t = trim(raw);
  if (t == "on" || t == "true" || t == "1") return true;
  if (t == "off" || t == "false" || t == "0") return false;
  throw ConfigError("config key '" + key + "' needs on/off, got '" + raw + "'");
}

std::vector<std::string> parse_list(const std::string& raw) {
  std::vector<std::string> out;
  for (const std::string& part : split(raw, ',')) {
    std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Method plans

enum class IntervalKind {
  Naive,
  Jackknife,
  JackknifePlus,
  JackknifeMm,
  Jaw,
  CvPlus,
  Split,
  WeightedSplit,
};

struct MethodPlan {
  std::string name;  // output token, order suffix included
  IntervalKind kind = IntervalKind::Naive;
  bool influence = false;
  int order = 0;
};

MethodPlan base_plan(const std::string& token) {
  MethodPlan p;
  if (token == "naive") {
    p.kind = IntervalKind::Naive;
  } else if (token == "jackknife") {
    p.kind = IntervalKind::Jackknife;
  } else if (token == "jackknife+") {
    p.kind = IntervalKind::JackknifePlus;
  } else if (token == "jackknife-mm") {
    p.kind = IntervalKind::JackknifeMm;
  } else if (token == "jaw") {
    p.kind = IntervalKind::Jaw;
  } else if (token == "cv+") {
    p.kind = IntervalKind::CvPlus;
  } else if (token == "split") {
    p.kind = IntervalKind::Split;
  } else if (token == "weighted-split") {
    p.kind = IntervalKind::WeightedSplit;
  } else if (token == "jawa") {
    p.kind = IntervalKind::Jaw;
    p.influence = true;
  } else if (token == "if-jackknife") {
    p.kind = IntervalKind::Jackknife;
    p.influence = true;
  } else if (token == "if-jackknife+") {
    p.kind = IntervalKind::JackknifePlus;
    p.influence = true;
  } else if (token == "if-jackknife-mm") {
    p.kind = IntervalKind::JackknifeMm;
    p.influence = true;
  } else {
    throw ConfigError("unknown method '" + token + "'");
  }
  p.name = token;
  return p;
}

std::vector<MethodPlan> expand_methods(const ExperimentConfig& config) {
  std::vector<MethodPlan> plans;
  std::set<std::string> seen;
  for (const std::string& token : config.methods) {
    MethodPlan base = base_plan(token);
    if (base.influence) {
      for (int k : config.if_orders) {
        MethodPlan p = base;
        p.order = k;
        p.name = token + "-" + std::to_string(k);
        if (seen.insert(p.name).second) plans.push_back(p);
      }
    } else {
      if (seen.insert(base.name).second) plans.push_back(base);
    }
  }
  if (plans.empty()) throw ConfigError("no methods selected");
  return plans;
}

bool kind_has_assessment(IntervalKind kind) {
  switch (kind) {
    case IntervalKind::Jaw:
    case IntervalKind::JackknifePlus:
    case IntervalKind::CvPlus:
    case IntervalKind::Split:
    case IntervalKind::WeightedSplit:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// Replicate construction

Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.X.resize(spec.rows, 1);
  data.y.resize(spec.rows);
  for (int r = 0; r < spec.rows; ++r) {
    double x = rng.normal();
    data.X(r, 0) = x;
    data.y(r) = spec.slope * x + spec.noise * rng.normal();
  }
  return data;
}

struct ReplicateContext {
  Dataset train;           // standardized features (and labels, see y_scale)
  Eigen::MatrixXd test_x;  // standardized rows
  Eigen::VectorXd test_y;  // raw labels
  Eigen::VectorXd w_train;
  Eigen::VectorXd w_test;
  double y_mean = 0.0;
  double y_scale = 1.0;
  double ess = 0.0;
};

// Seed streams inside one replicate. Distinct constants keep the synthetic
// draw, the split, the test sampling, the ratio fit, and the model fits
// statistically independent while staying reproducible.
constexpr std::uint64_t kStreamSynthetic = 11;
constexpr std::uint64_t kStreamSplit = 12;
constexpr std::uint64_t kStreamTestDraw = 13;
constexpr std::uint64_t kStreamRatio = 14;
constexpr std::uint64_t kStreamFit = 20;

ReplicateContext build_replicate(const ExperimentConfig& config,
                                 const Dataset* loaded,
                                 std::uint64_t rep_seed) {
  Dataset all = loaded
                    ? *loaded
                    : make_synthetic(config.synthetic,
                                     derive_seed(rep_seed, kStreamSynthetic));
  const int total = all.n();
  if (config.train_size >= total) {
    throw ConfigError("train-size " + std::to_string(config.train_size) +
                      " leaves no pool rows (dataset has " +
                      std::to_string(total) + ")");
  }

  std::vector<int> perm(total);
  for (int i = 0; i < total; ++i) perm[i] = i;
  Rng split_rng(derive_seed(rep_seed, kStreamSplit));
  split_rng.shuffle(perm);
  std::vector<int> train_idx(perm.begin(), perm.begin() + config.train_size);
  std::vector<int> pool_idx(perm.begin() + config.train_size, perm.end());

  Dataset train_raw = all.select_rows(train_idx);
  Dataset pool_raw = all.select_rows(pool_idx);
  const int n = train_raw.n();
  const int d = train_raw.dim();

  // Feature standardization is fit on the training rows only; pool rows are
  // mapped through the same affine transform.
  Eigen::VectorXd mean = train_raw.X.colwise().mean();
  Eigen::VectorXd scale(d);
  for (int j = 0; j < d; ++j) {
    double var = (train_raw.X.col(j).array() - mean(j)).square().sum() / n;
    double sd = std::sqrt(var);
    scale(j) = sd > 0.0 ? sd : 1.0;
  }

  ReplicateContext ctx;
  const bool scale_labels = config.predictor.family != Family::ConstantMean;
  if (scale_labels) {
    ctx.y_mean = train_raw.y.mean();
    double var = (train_raw.y.array() - ctx.y_mean).square().sum() / n;
    double sd = std::sqrt(var);
    ctx.y_scale = sd > 0.0 ? sd : 1.0;
  }

  ctx.train.X.resize(n, d);
  for (int j = 0; j < d; ++j) {
    ctx.train.X.col(j) = (train_raw.X.col(j).array() - mean(j)) / scale(j);
  }
  ctx.train.y = (train_raw.y.array() - ctx.y_mean) / ctx.y_scale;

  Eigen::MatrixXd pool_x(pool_raw.n(), d);
  for (int j = 0; j < d; ++j) {
    pool_x.col(j) = (pool_raw.X.col(j).array() - mean(j)) / scale(j);
  }

  const int m = static_cast<int>(config.sample_fraction * pool_raw.n());
  if (m < 1) {
    throw ConfigError("sample-fraction yields an empty test draw");
  }

  ShiftSpec shift;
  shift.sample_fraction = config.sample_fraction;
  shift.seed = derive_seed(rep_seed, kStreamTestDraw);
  const bool shifted = !config.beta.empty();
  std::vector<int> test_idx;
  if (shifted) {
    if (static_cast<int>(config.beta.size()) != d) {
      throw ConfigError("beta has " + std::to_string(config.beta.size()) +
                        " entries but the dataset has " + std::to_string(d) +
                        " features");
    }
    shift.beta = Eigen::Map<const Eigen::VectorXd>(config.beta.data(),
                                                   config.beta.size());
    Dataset pool_std;
    pool_std.X = pool_x;
    pool_std.y = pool_raw.y;
    test_idx = sample_shifted_test(pool_std, shift, m);
  } else {
    test_idx = sample_weighted_without_replacement(
        Eigen::VectorXd::Ones(pool_raw.n()), m, shift.seed);
  }

  ctx.test_x.resize(m, d);
  ctx.test_y.resize(m);
  for (int j = 0; j < m; ++j) {
    ctx.test_x.row(j) = pool_x.row(test_idx[j]);
    ctx.test_y(j) = pool_raw.y(test_idx[j]);
  }

  ctx.w_train = Eigen::VectorXd::Ones(n);
  ctx.w_test = Eigen::VectorXd::Ones(m);
  if (shifted) {
    if (config.weight_source == "oracle") {
      for (int i = 0; i < n; ++i) {
        ctx.w_train(i) = oracle_weight(shift, ctx.train.X.row(i));
      }
      for (int j = 0; j < m; ++j) {
        ctx.w_test(j) = oracle_weight(shift, ctx.test_x.row(j));
      }
    } else {
      RatioEstimator est = fit_ratio(ctx.train.X, ctx.test_x,
                                     derive_seed(rep_seed, kStreamRatio));
      for (int i = 0; i < n; ++i) {
        ctx.w_train(i) = estimated_weight(est, ctx.train.X.row(i));
      }
      for (int j = 0; j < m; ++j) {
        ctx.w_test(j) = estimated_weight(est, ctx.test_x.row(j));
      }
    }
  }
  ctx.ess = effective_sample_size(ctx.w_train);
  return ctx;
}

// ---------------------------------------------------------------------------
// Method execution

// Tolerance levels spread uniformly between the 0.05 and 0.95 quantiles of
// the method's own calibration residuals.
std::vector<double> tau_levels(const Eigen::VectorXd& residuals, int count) {
  std::vector<double> sorted(residuals.data(),
                             residuals.data() + residuals.size());
  std::sort(sorted.begin(), sorted.end());
  const int n = static_cast<int>(sorted.size());
  double lo = sorted[static_cast<int>(0.05 * (n - 1))];
  double hi = sorted[static_cast<int>(0.95 * (n - 1))];
  std::vector<double> taus;
  if (count == 1) {
    taus.push_back(0.5 * (lo + hi));
    return taus;
  }
  for (int k = 0; k < count; ++k) {
    taus.push_back(lo + k * (hi - lo) / (count - 1));
  }
  return taus;
}

struct IntervalStats {
  std::vector<bool> covered;
  std::vector<double> widths;
};

void record_interval(const PredictionInterval& interval, double y_raw,
                     double y_mean, double y_scale, IntervalStats* stats) {
  double y_std = (y_raw - y_mean) / y_scale;
  stats->covered.push_back(interval.contains(y_std));
  stats->widths.push_back(interval.width() * y_scale);
}

void append_tau_rows(const ExperimentConfig& config, int replicate,
                     const MethodPlan& plan, double ess,
                     const Eigen::VectorXd& calibration_residuals,
                     const ReplicateContext& ctx,
                     const std::function<ErrorAssessment(int, const ErrorCriteria&)>&
                         assess_at,
                     const std::function<double(int)>& full_pred_at,
                     std::vector<OutputRow>* rows) {
  const int m = static_cast<int>(ctx.test_y.size());
  for (double tau : tau_levels(calibration_residuals, config.tau_grid)) {
    ErrorCriteria crit = ErrorCriteria::absolute(tau);
    std::vector<double> scores;
    std::vector<bool> labels;
    scores.reserve(m);
    labels.reserve(m);
    for (int j = 0; j < m; ++j) {
      ErrorAssessment a = assess_at(j, crit);
      scores.push_back(a.p_no_error);
      double y_std = (ctx.test_y(j) - ctx.y_mean) / ctx.y_scale;
      labels.push_back(std::abs(y_std - full_pred_at(j)) <= tau);
    }
    OutputRow row;
    row.replicate = replicate;
    row.method = plan.name;
    row.alpha = config.alpha;
    row.ess = ess;
    row.tau = tau * ctx.y_scale;
    row.auroc = auroc(scores, labels);
    rows->push_back(row);
  }
}

std::vector<OutputRow> run_method(const ExperimentConfig& config,
                                  const ReplicateContext& ctx,
                                  const MethodPlan& plan, int replicate,
                                  std::uint64_t rep_seed) {
  const PredictorSpec& spec = config.predictor;
  const std::uint64_t fit_seed = derive_seed(rep_seed, kStreamFit);
  const int m = static_cast<int>(ctx.test_y.size());
  const double alpha = config.alpha;

  std::vector<OutputRow> rows;
  IntervalStats stats;
  auto t0 = std::chrono::steady_clock::now();

  switch (plan.kind) {
    case IntervalKind::Naive: {
      NaiveFit fit = fit_naive(spec, ctx.train, fit_seed);
      for (int j = 0; j < m; ++j) {
        record_interval(naive_from_fit(fit, ctx.test_x.row(j), alpha),
                        ctx.test_y(j), ctx.y_mean, ctx.y_scale, &stats);
      }
      break;
    }
    case IntervalKind::CvPlus: {
      CvModels cv =
          fit_cv_models(spec, ctx.train, config.cv_folds, fit_seed);
      for (int j = 0; j < m; ++j) {
        record_interval(cv_plus_from_models(cv, ctx.test_x.row(j), alpha),
                        ctx.test_y(j), ctx.y_mean, ctx.y_scale, &stats);
      }
      if (config.tau_grid > 0) {
        ModelParams full = fit(spec, ctx.train, fit_seed);
        std::vector<double> full_preds(m);
        for (int j = 0; j < m; ++j) {
          full_preds[j] = predict(full, ctx.test_x.row(j));
        }
        append_tau_rows(
            config, replicate, plan, ctx.ess, cv.residuals, ctx,
            [&](int j, const ErrorCriteria& crit) {
              return cv_plus_error_assessment(cv, full_preds[j],
                                              ctx.test_x.row(j), crit);
            },
            [&](int j) { return full_preds[j]; }, &rows);
      }
      break;
    }
    case IntervalKind::Split:
    case IntervalKind::WeightedSplit: {
      SplitFit fit = fit_split(spec, ctx.train, fit_seed);
      const bool weighted = plan.kind == IntervalKind::WeightedSplit;
      for (int j = 0; j < m; ++j) {
        PredictionInterval interval =
            weighted ? weighted_split_from_fit(fit, ctx.w_train,
                                               ctx.w_test(j),
                                               ctx.test_x.row(j), alpha)
                     : split_from_fit(fit, ctx.test_x.row(j), alpha);
        record_interval(interval, ctx.test_y(j), ctx.y_mean, ctx.y_scale,
                        &stats);
      }
      if (config.tau_grid > 0) {
        const int h = static_cast<int>(fit.holdout_rows.size());
        Eigen::VectorXd holdout_w(h);
        for (int i = 0; i < h; ++i) {
          holdout_w(i) = ctx.w_train(fit.holdout_rows[i]);
        }
        append_tau_rows(
            config, replicate, plan, ctx.ess, fit.holdout_residuals, ctx,
            [&](int j, const ErrorCriteria& crit) {
              NormalizedWeights w =
                  weighted ? normalize(holdout_w, ctx.w_test(j))
                           : NormalizedWeights::uniform(h);
              return split_error_assessment(fit, w, crit);
            },
            [&](int j) { return predict(fit.model, ctx.test_x.row(j)); },
            &rows);
      }
      break;
    }
    default: {
      // Leave-one-out family; exact refits or influence approximations feed
      // the same interval constructors.
      LooModels models =
          plan.influence
              ? fit_if_loo_models(spec, ctx.train, plan.order, fit_seed)
              : fit_loo_models(spec, ctx.train, fit_seed);
      std::vector<LooArtifacts> arts;
      arts.reserve(m);
      for (int j = 0; j < m; ++j) {
        arts.push_back(artifacts_at(models, ctx.test_x.row(j)));
      }
      for (int j = 0; j < m; ++j) {
        PredictionInterval interval = [&] {
          switch (plan.kind) {
            case IntervalKind::Jaw:
              return jaw_interval(arts[j],
                                  normalize(ctx.w_train, ctx.w_test(j)),
                                  alpha);
            case IntervalKind::JackknifePlus:
              return jackknife_plus_interval(arts[j], alpha);
            case IntervalKind::JackknifeMm:
              return jackknife_mm_interval(arts[j], alpha);
            default:
              return jackknife_interval(arts[j], alpha);
          }
        }();
        record_interval(interval, ctx.test_y(j), ctx.y_mean, ctx.y_scale,
                        &stats);
      }
      if (config.tau_grid > 0 && kind_has_assessment(plan.kind)) {
        append_tau_rows(
            config, replicate, plan, ctx.ess, models.loo_residuals, ctx,
            [&](int j, const ErrorCriteria& crit) {
              return plan.kind == IntervalKind::Jaw
                         ? jaw_error_assessment(
                               arts[j],
                               normalize(ctx.w_train, ctx.w_test(j)), crit)
                         : jackknife_plus_error_assessment(arts[j], crit);
            },
            [&](int j) { return arts[j].full_pred_at_test; }, &rows);
      }
      break;
    }
  }

  auto t1 = std::chrono::steady_clock::now();

  OutputRow row;
  row.replicate = replicate;
  row.method = plan.name;
  row.alpha = alpha;
  row.coverage = coverage(stats.covered);
  row.median_width = median_width(stats.widths);
  row.frac_infinite = fraction_infinite(stats.widths);
  row.ess = ctx.ess;
  if (config.timing) {
    row.runtime_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  rows.insert(rows.begin(), row);
  return rows;
}

// ---------------------------------------------------------------------------
// Row ordering and aggregation

// Numeric replicates first, then the mean block, then the se block.
int replicate_rank(int code) {
  if (code == -1) return std::numeric_limits<int>::max() - 1;
  if (code == -2) return std::numeric_limits<int>::max();
  return code;
}

bool row_less(const OutputRow& a, const OutputRow& b) {
  int ra = replicate_rank(a.replicate);
  int rb = replicate_rank(b.replicate);
  if (ra != rb) return ra < rb;
  if (a.method != b.method) return a.method < b.method;
  double ta = a.tau.value_or(-std::numeric_limits<double>::infinity());
  double tb = b.tau.value_or(-std::numeric_limits<double>::infinity());
  return ta < tb;
}

struct Accumulator {
  std::vector<double> values;

  void add(const std::optional<double>& v) {
    if (v) values.push_back(*v);
  }

  std::optional<double> mean() const {
    if (values.empty()) return std::nullopt;
    double s = 0.0;
    for (double v : values) s += v;
    double m = s / values.size();
    if (!std::isfinite(m)) return std::nullopt;
    return m;
  }

  std::optional<double> se() const {
    if (values.empty()) return std::nullopt;
    if (values.size() == 1) return 0.0;
    auto m = mean();
    if (!m) return std::nullopt;
    double ss = 0.0;
    for (double v : values) ss += (v - *m) * (v - *m);
    double s = std::sqrt(ss / (values.size() - 1) / values.size());
    if (!std::isfinite(s)) return std::nullopt;
    return s;
  }
};

void append_aggregates(std::vector<OutputRow>* rows) {
  struct Key {
    std::string method;
    std::optional<double> tau;

    bool operator<(const Key& o) const {
      if (method != o.method) return method < o.method;
      double a = tau.value_or(-std::numeric_limits<double>::infinity());
      double b = o.tau.value_or(-std::numeric_limits<double>::infinity());
      return a < b;
    }
  };
  struct Group {
    double alpha = 0.0;
    Accumulator coverage, median_width, frac_infinite, ess, runtime_ms, auroc;
  };
  std::map<Key, Group> groups;
  for (const OutputRow& row : *rows) {
    if (row.replicate < 0) continue;
    Group& g = groups[Key{row.method, row.tau}];
    g.alpha = row.alpha;
    g.coverage.add(row.coverage);
    g.median_width.add(row.median_width);
    g.frac_infinite.add(row.frac_infinite);
    g.ess.add(row.ess);
    g.runtime_ms.add(row.runtime_ms);
    g.auroc.add(row.auroc);
  }
  for (int code : {-1, -2}) {
    for (const auto& [key, g] : groups) {
      OutputRow row;
      row.replicate = code;
      row.method = key.method;
      row.alpha = g.alpha;
      row.tau = key.tau;
      const bool mean = code == -1;
      row.coverage = mean ? g.coverage.mean() : g.coverage.se();
      row.median_width = mean ? g.median_width.mean() : g.median_width.se();
      row.frac_infinite =
          mean ? g.frac_infinite.mean() : g.frac_infinite.se();
      row.ess = mean ? g.ess.mean() : g.ess.se();
      row.runtime_ms = mean ? g.runtime_ms.mean() : g.runtime_ms.se();
      row.auroc = mean ? g.auroc.mean() : g.auroc.se();
      rows->push_back(row);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Dataset load_csv(const std::string& path, int max_rows) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError("dataset file is empty: " + path);
  }
  const int cols = static_cast<int>(split(line, ',').size());
  if (cols < 2) {
    throw ConfigError("dataset needs at least one feature and a label: " +
                      path);
  }

  std::vector<double> values;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line, ',');
    if (static_cast<int>(cells.size()) != cols) {
      throw ConfigError("row " + std::to_string(line_no) + " of " + path +
                        " has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(cols));
    }
    for (int c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_double_cell(cells[c], &v)) {
        throw ConfigError("non-numeric field '" + trim(cells[c]) + "' at row " +
                          std::to_string(line_no) + " column " +
                          std::to_string(c + 1) + " of " + path);
      }
      values.push_back(v);
    }
    ++rows;
    if (max_rows > 0 && rows >= max_rows) break;
  }
  if (rows == 0) {
    throw ConfigError("dataset has a header but no data rows: " + path);
  }

  Dataset data;
  data.X.resize(rows, cols - 1);
  data.y.resize(rows);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols - 1; ++c) {
      data.X(r, c) = values[static_cast<std::size_t>(r) * cols + c];
    }
    data.y(r) = values[static_cast<std::size_t>(r) * cols + cols - 1];
  }
  return data;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ConfigMap kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("config line " + std::to_string(line_no) + " of " +
                        path + " is not key=value: '" + t + "'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    kv[key].push_back(value);
  }
  return kv;
}

ExperimentConfig parse_config(const ConfigMap& kv) {
  for (const auto& [key, values] : kv) {
    (void)values;
    if (!kKnownKeys.count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  ExperimentConfig c;
  if (const auto* v = last_value(kv, "dataset")) c.dataset = *v;
  if (const auto* v = last_value(kv, "synthetic-rows")) {
    c.synthetic.rows = parse_int("synthetic-rows", *v);
    if (c.synthetic.rows < 4) throw ConfigError("synthetic-rows must be >= 4");
  }
  if (const auto* v = last_value(kv, "synthetic-slope")) {
    c.synthetic.slope = parse_num("synthetic-slope", *v);
  }
  if (const auto* v = last_value(kv, "synthetic-noise")) {
    c.synthetic.noise = parse_num("synthetic-noise", *v);
    if (c.synthetic.noise < 0) throw ConfigError("synthetic-noise must be >= 0");
  }

  if (auto it = kv.find("methods"); it != kv.end()) {
    c.methods.clear();
    for (const std::string& entry : it->second) {
      for (const std::string& token : parse_list(entry)) {
        if (!kKnownMethods.count(token)) {
          throw ConfigError("unknown method '" + token + "'");
        }
        c.methods.push_back(token);
      }
    }
    if (c.methods.empty()) throw ConfigError("methods list is empty");
  }

  if (const auto* v = last_value(kv, "alpha")) {
    c.alpha = parse_num("alpha", *v);
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
      throw ConfigError("alpha must lie in (0, 1)");
    }
  }
  if (const auto* v = last_value(kv, "replicates")) {
    c.replicates = parse_int("replicates", *v);
    if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
  }
  if (const auto* v = last_value(kv, "train-size")) {
    c.train_size = parse_int("train-size", *v);
    if (c.train_size < 2) throw ConfigError("train-size must be >= 2");
  }
  if (const auto* v = last_value(kv, "beta")) {
    c.beta.clear();
    for (const std::string& part : parse_list(*v)) {
      c.beta.push_back(parse_num("beta", part));
    }
  }
  if (const auto* v = last_value(kv, "sample-fraction")) {
    c.sample_fraction = parse_num("sample-fraction", *v);
    if (!(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0)) {
      throw ConfigError("sample-fraction must lie in (0, 1]");
    }
  }
  if (const auto* v = last_value(kv, "weights")) {
    if (*v != "oracle" && *v != "estimated") {
      throw ConfigError("weights must be 'oracle' or 'estimated'");
    }
    c.weight_source = *v;
  }
  if (const auto* v = last_value(kv, "predictor")) {
    if (*v == "constant") {
      c.predictor.family = Family::ConstantMean;
    } else if (*v == "ridge") {
      c.predictor.family = Family::Ridge;
    } else if (*v == "mlp") {
      c.predictor.family = Family::Mlp;
    } else {
      throw ConfigError("predictor must be constant, ridge, or mlp");
    }
  }
  if (const auto* v = last_value(kv, "ridge-lambda")) {
    c.predictor.ridge_lambda = parse_num("ridge-lambda", *v);
    if (!(c.predictor.ridge_lambda > 0.0)) {
      throw ConfigError("ridge-lambda must be > 0");
    }
  }
  if (const auto* v = last_value(kv, "mlp-hidden")) {
    c.predictor.mlp.hidden_units = parse_int("mlp-hidden", *v);
    if (c.predictor.mlp.hidden_units < 1) {
      throw ConfigError("mlp-hidden must be >= 1");
    }
  }
  if (const auto* v = last_value(kv, "mlp-epochs")) {
    c.predictor.mlp.epochs = parse_int("mlp-epochs", *v);
    if (c.predictor.mlp.epochs < 1) throw ConfigError("mlp-epochs must be >= 1");
  }
  if (const auto* v = last_value(kv, "mlp-batch")) {
    c.predictor.mlp.batch_size = parse_int("mlp-batch", *v);
    if (c.predictor.mlp.batch_size < 1) {
      throw ConfigError("mlp-batch must be >= 1");
    }
  }
  if (const auto* v = last_value(kv, "mlp-lr")) {
    c.predictor.mlp.learning_rate = parse_num("mlp-lr", *v);
    if (!(c.predictor.mlp.learning_rate > 0.0)) {
      throw ConfigError("mlp-lr must be > 0");
    }
  }
  if (const auto* v = last_value(kv, "mlp-lambda")) {
    c.predictor.mlp.l2_lambda = parse_num("mlp-lambda", *v);
    if (!(c.predictor.mlp.l2_lambda > 0.0)) {
      throw ConfigError("mlp-lambda must be > 0");
    }
  }
  if (const auto* v = last_value(kv, "mlp-seed")) {
    c.predictor.mlp.seed = parse_u64("mlp-seed", *v);
  }
  if (const auto* v = last_value(kv, "cv-folds")) {
    c.cv_folds = parse_int("cv-folds", *v);
    if (c.cv_folds < 2) throw ConfigError("cv-folds must be >= 2");
  }
  if (auto it = kv.find("if-order"); it != kv.end()) {
    c.if_orders.clear();
    for (const std::string& entry : it->second) {
      for (const std::string& token : parse_list(entry)) {
        int k = parse_int("if-order", token);
        if (k < 1 || k > 3) throw ConfigError("if-order entries must be 1..3");
        c.if_orders.push_back(k);
      }
    }
    if (c.if_orders.empty()) throw ConfigError("if-order list is empty");
  }
  if (const auto* v = last_value(kv, "tau-grid")) {
    c.tau_grid = parse_int("tau-grid", *v);
    if (c.tau_grid < 0) throw ConfigError("tau-grid must be >= 0");
  }
  if (const auto* v = last_value(kv, "out")) c.out = *v;
  if (const auto* v = last_value(kv, "seed")) c.master_seed = parse_u64("seed", *v);
  if (const auto* v = last_value(kv, "workers")) {
    c.workers = parse_int("workers", *v);
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
  }
  if (const auto* v = last_value(kv, "max-rows")) {
    c.max_rows = parse_int("max-rows", *v);
    if (c.max_rows < 0) throw ConfigError("max-rows must be >= 0");
  }
  if (const auto* v = last_value(kv, "timing")) {
    c.timing = parse_bool("timing", *v);
  }
  return c;
}

std::string render_csv(const std::vector<OutputRow>& rows) {
  std::string out =
      "replicate,method,alpha,coverage,median_width,frac_infinite,ess,"
      "runtime_ms,tau,auroc\n";
  for (const OutputRow& row : rows) {
    std::string rep;
    if (row.replicate == -1) {
      rep = "mean";
    } else if (row.replicate == -2) {
      rep = "se";
    } else {
      rep = std::to_string(row.replicate);
    }
    out += rep;
    out += ',';
    out += row.method;
    out += ',';
    out += fmt_double(row.alpha);
    out += ',';
    out += fmt_cell(row.coverage);
    out += ',';
    out += fmt_cell(row.median_width);
    out += ',';
    out += fmt_cell(row.frac_infinite);
    out += ',';
    out += fmt_cell(row.ess);
    out += ',';
    out += fmt_cell(row.runtime_ms);
    out += ',';
    out += fmt_cell(row.tau);
    out += ',';
    out += fmt_cell(row.auroc);
    out += '\n';
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  std::vector<MethodPlan> plans = expand_methods(config);

  Dataset loaded;
  const Dataset* base = nullptr;
  if (config.dataset != "synthetic") {
    loaded = load_csv(config.dataset, config.max_rows);
    base = &loaded;
  }

  const int R = config.replicates;
  std::vector<std::vector<OutputRow>> per_replicate(R);
  std::atomic<int> next{0};
  std::atomic<int> aborted{0};
  std::mutex log_mutex;
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    for (;;) {
      int r = next.fetch_add(1);
      if (r >= R) return;
      std::uint64_t rep_seed = derive_seed(config.master_seed,
                                           static_cast<std::uint64_t>(r));
      ReplicateContext ctx;
      try {
        ctx = build_replicate(config, base, rep_seed);
      } catch (const ConfigError&) {
        std::lock_guard<std::mutex> lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        return;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "replicate " << r << ": " << e.what() << "\n";
        aborted.fetch_add(static_cast<int>(plans.size()));
        continue;
      }
      for (const MethodPlan& plan : plans) {
        try {
          std::vector<OutputRow> rows =
              run_method(config, ctx, plan, r, rep_seed);
          per_replicate[r].insert(per_replicate[r].end(), rows.begin(),
                                  rows.end());
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(log_mutex);
          std::cerr << "replicate " << r << " method " << plan.name << ": "
                    << e.what() << "\n";
          aborted.fetch_add(1);
        }
      }
    }
  };

  const int threads = std::min(config.workers, R);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  ExperimentResult result;
  result.aborted = aborted.load();
  for (const auto& rows : per_replicate) {
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  std::sort(result.rows.begin(), result.rows.end(), row_less);
  append_aggregates(&result.rows);
  std::stable_sort(result.rows.begin(), result.rows.end(), row_less);

  std::string csv = render_csv(result.rows);
  if (config.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(config.out, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file: " + config.out);
    out << csv;
  }
  return result;
}

double lambda_grid_search(const ExperimentConfig& config,
                          const std::string& config_path, int splits) {
  if (config.predictor.family != Family::Mlp) {
    throw ConfigError("the lambda grid tunes the mlp regularizer; set "
                      "predictor=mlp");
  }
  if (splits < 1) throw ConfigError("lambda grid needs at least one split");

  const std::vector<double> grid = {0.5, 1.0,  2.0,  4.0,  8.0,
                                    16.0, 32.0, 64.0, 96.0, 128.0};
  Dataset loaded;
  const Dataset* base = nullptr;
  if (config.dataset != "synthetic") {
    loaded = load_csv(config.dataset, config.max_rows);
    base = &loaded;
  }

  // The score for one candidate: coverage of first-order influence-
  // approximated jackknife+ intervals, averaged over seeded splits.
  auto coverage_for = [&](double lambda) {
    double total = 0.0;
    for (int s = 0; s < splits; ++s) {
      std::uint64_t split_seed =
          derive_seed(config.master_seed, 0xA000u + static_cast<std::uint64_t>(s));
      Dataset all = base ? *base
                         : make_synthetic(config.synthetic,
                                          derive_seed(split_seed, kStreamSynthetic));
      const int total_rows = all.n();
      if (config.train_size >= total_rows) {
        throw ConfigError("train-size leaves no evaluation rows for the grid");
      }
      std::vector<int> perm(total_rows);
      for (int i = 0; i < total_rows; ++i) perm[i] = i;
      Rng rng(derive_seed(split_seed, kStreamSplit));
      rng.shuffle(perm);
      std::vector<int> train_idx(perm.begin(), perm.begin() + config.train_size);
      int eval_count = std::min(50, total_rows - config.train_size);
      std::vector<int> eval_idx(perm.begin() + config.train_size,
                                perm.begin() + config.train_size + eval_count);

      Dataset train_raw = all.select_rows(train_idx);
      Dataset eval_raw = all.select_rows(eval_idx);
      const int n = train_raw.n();
      const int d = train_raw.dim();

      Eigen::VectorXd mean = train_raw.X.colwise().mean();
      Eigen::VectorXd scale(d);
      for (int j = 0; j < d; ++j) {
        double var = (train_raw.X.col(j).array() - mean(j)).square().sum() / n;
        scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
      }
      double y_mean = train_raw.y.mean();
      double y_var = (train_raw.y.array() - y_mean).square().sum() / n;
      double y_scale = y_var > 0.0 ? std::sqrt(y_var) : 1.0;

      Dataset train;
      train.X.resize(n, d);
      for (int j = 0; j < d; ++j) {
        train.X.col(j) = (train_raw.X.col(j).array() - mean(j)) / scale(j);
      }
      train.y = (train_raw.y.array() - y_mean) / y_scale;

      PredictorSpec spec = config.predictor;
      spec.mlp.l2_lambda = lambda;
      LooModels models =
          fit_if_loo_models(spec, train, 1, derive_seed(split_seed, kStreamFit));

      std::vector<bool> covered;
      covered.reserve(eval_count);
      for (int j = 0; j < eval_count; ++j) {
        Eigen::VectorXd x(d);
        for (int c = 0; c < d; ++c) {
          x(c) = (eval_raw.X(j, c) - mean(c)) / scale(c);
        }
        PredictionInterval interval =
            jackknife_plus_interval(artifacts_at(models, x), config.alpha);
        covered.push_back(interval.contains((eval_raw.y(j) - y_mean) / y_scale));
      }
      total += coverage(covered);
    }
    return total / splits;
  };

  std::optional<double> chosen;
  for (double lambda : grid) {
    double cov = coverage_for(lambda);
    std::cerr << "lambda " << fmt_double(lambda) << " coverage "
              << fmt_double(cov) << "\n";
    if (cov > 0.875) {
      chosen = lambda;
      break;
    }
  }
  if (!chosen) {
    throw std::runtime_error(
        "no grid value reached coverage above 0.875; widen the grid or "
        "revisit the architecture");
  }

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    std::vector<std::string> lines;
    std::string line;
    bool replaced = false;
    while (std::getline(in, line)) {
      std::string t = trim(line);
      bool is_lambda = t.rfind("mlp-lambda", 0) == 0 &&
                       t.find('=') != std::string::npos &&
                       trim(t.substr(0, t.find('='))) == "mlp-lambda";
      if (is_lambda) {
        if (!replaced) {
          lines.push_back("mlp-lambda=" + fmt_double(*chosen));
          replaced = true;
        }
        continue;
      }
      lines.push_back(line);
    }
    in.close();
    if (!replaced) lines.push_back("mlp-lambda=" + fmt_double(*chosen));
    std::ofstream out(config_path, std::ios::binary);
    if (!out) throw ConfigError("cannot rewrite config file: " + config_path);
    for (const std::string& l : lines) out << l << "\n";
  }
  return *chosen;
}

}  // namespace covband
