#include "covband/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "covband/rng.hpp"

namespace covband {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
}

void check_weights(const LooArtifacts& loo, const NormalizedWeights& weights) {
  if (weights.n() != loo.n()) {
    throw std::invalid_argument("weight vector length does not match artifacts");
  }
}

// Shared quantile step for every jackknife-family interval: lower endpoint
// from {center_i - R_i} with the test mass at -inf, upper from
// {center_i + R_i} with the test mass at +inf.
PredictionInterval interval_from_atoms(const Eigen::VectorXd& lower_centers,
                                       const Eigen::VectorXd& upper_centers,
                                       const Eigen::VectorXd& residuals,
                                       const NormalizedWeights& weights,
                                       double alpha) {
  const int n = static_cast<int>(residuals.size());
  std::vector<Atom> lower_atoms;
  std::vector<Atom> upper_atoms;
  lower_atoms.reserve(static_cast<std::size_t>(n));
  upper_atoms.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    lower_atoms.push_back({lower_centers(i) - residuals(i), weights.train(i)});
    upper_atoms.push_back({upper_centers(i) + residuals(i), weights.train(i)});
  }
  WeightedAtoms lower_dist(lower_atoms, weights.test, 0.0);
  WeightedAtoms upper_dist(upper_atoms, 0.0, weights.test);
  return PredictionInterval(quantile_minus(lower_dist, alpha),
                            quantile_plus(upper_dist, 1.0 - alpha));
}

std::vector<int> seeded_permutation(int n, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

}  // namespace

LooModels fit_loo_models(const PredictorSpec& spec, const Dataset& data,
                         std::uint64_t seed) {
  data.check();
  const int n = data.n();
  if (n < 2) throw std::invalid_argument("leave-one-out requires n >= 2");
  LooModels models;
  models.full = fit(spec, data, seed);
  models.loo.reserve(static_cast<std::size_t>(n));
  models.loo_pred_at_train.resize(n);
  models.loo_residuals.resize(n);
  for (int i = 0; i < n; ++i) {
    try {
      models.loo.push_back(fit(spec, data.drop_row(i), seed));
    } catch (const std::exception& e) {
      throw std::runtime_error("leave-one-out fit without row " +
                               std::to_string(i) + " failed: " + e.what());
    }
    double pred = predict(models.loo.back(), Eigen::VectorXd(data.X.row(i)));
    models.loo_pred_at_train(i) = pred;
    models.loo_residuals(i) = std::abs(data.y(i) - pred);
  }
  return models;
}

LooArtifacts artifacts_at(const LooModels& models, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(models.loo.size());
  LooArtifacts out;
  out.loo_pred_at_train = models.loo_pred_at_train;
  out.loo_residuals = models.loo_residuals;
  out.loo_pred_at_test.resize(n);
  for (int i = 0; i < n; ++i) {
    out.loo_pred_at_test(i) = predict(models.loo[static_cast<std::size_t>(i)], x);
  }
  out.full_pred_at_test = predict(models.full, x);
  return out;
}

LooArtifacts compute_loo(const PredictorSpec& spec, const Dataset& data,
                         const Eigen::VectorXd& test_x, std::uint64_t seed) {
  return artifacts_at(fit_loo_models(spec, data, seed), test_x);
}

PredictionInterval jaw_interval(const LooArtifacts& loo,
                                const NormalizedWeights& weights, double alpha) {
  check_alpha(alpha);
  check_weights(loo, weights);
  return interval_from_atoms(loo.loo_pred_at_test, loo.loo_pred_at_test,
                             loo.loo_residuals, weights, alpha);
}

PredictionInterval jackknife_plus_interval(const LooArtifacts& loo,
                                           double alpha) {
  check_alpha(alpha);
  return interval_from_atoms(loo.loo_pred_at_test, loo.loo_pred_at_test,
                             loo.loo_residuals, NormalizedWeights::uniform(loo.n()),
                             alpha);
}

PredictionInterval jackknife_interval(const LooArtifacts& loo, double alpha) {
  check_alpha(alpha);
  Eigen::VectorXd centers =
      Eigen::VectorXd::Constant(loo.n(), loo.full_pred_at_test);
  return interval_from_atoms(centers, centers, loo.loo_residuals,
                             NormalizedWeights::uniform(loo.n()), alpha);
}

PredictionInterval jackknife_mm_interval(const LooArtifacts& loo, double alpha) {
  check_alpha(alpha);
  const int n = loo.n();
  std::vector<Atom> atoms;
  atoms.reserve(static_cast<std::size_t>(n));
  double mass = 1.0 / (n + 1);
  for (int i = 0; i < n; ++i) atoms.push_back({loo.loo_residuals(i), mass});
  WeightedAtoms residual_dist(atoms, 0.0, mass);
  ExtReal q = quantile_plus(residual_dist, 1.0 - alpha);
  if (q.is_pos_inf()) {
    return PredictionInterval(ExtReal::neg_inf(), ExtReal::pos_inf());
  }
  double lo = loo.loo_pred_at_test.minCoeff() - q.value();
  double hi = loo.loo_pred_at_test.maxCoeff() + q.value();
  return PredictionInterval(ExtReal::finite(lo), ExtReal::finite(hi));
}

CvModels fit_cv_models(const PredictorSpec& spec, const Dataset& data, int k,
                       std::uint64_t seed) {
  data.check();
  const int n = data.n();
  if (k < 2 || k > n) {
    throw std::invalid_argument("cv folds must satisfy 2 <= k <= n");
  }
  // Fold assignment is a pure function of (seed, n, k): a seeded shuffle of
  // the row indices dealt round-robin into k folds.
  std::vector<int> perm = seeded_permutation(
      n, derive_seed(seed, 0x6f1d0000ULL + static_cast<std::uint64_t>(k)));
  CvModels models;
  models.fold_of.assign(static_cast<std::size_t>(n), 0);
  for (int pos = 0; pos < n; ++pos) {
    models.fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] =
        pos % k;
  }
  models.fold_models.reserve(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (models.fold_of[static_cast<std::size_t>(i)] != f) keep.push_back(i);
    }
    try {
      models.fold_models.push_back(fit(spec, data.select_rows(keep), seed));
    } catch (const std::exception& e) {
      throw std::runtime_error("cv fit without fold " + std::to_string(f) +
                               " failed: " + e.what());
    }
  }
  models.residuals.resize(n);
  for (int i = 0; i < n; ++i) {
    const ModelParams& m =
        models.fold_models[static_cast<std::size_t>(
            models.fold_of[static_cast<std::size_t>(i)])];
    models.residuals(i) =
        std::abs(data.y(i) - predict(m, Eigen::VectorXd(data.X.row(i))));
  }
  return models;
}

PredictionInterval cv_plus_from_models(const CvModels& models,
                                       const Eigen::VectorXd& x, double alpha) {
  check_alpha(alpha);
  const int n = static_cast<int>(models.residuals.size());
  Eigen::VectorXd centers(n);
  std::vector<double> fold_pred(models.fold_models.size());
  for (std::size_t f = 0; f < models.fold_models.size(); ++f) {
    fold_pred[f] = predict(models.fold_models[f], x);
  }
  for (int i = 0; i < n; ++i) {
    centers(i) = fold_pred[static_cast<std::size_t>(
        models.fold_of[static_cast<std::size_t>(i)])];
  }
  return interval_from_atoms(centers, centers, models.residuals,
                             NormalizedWeights::uniform(n), alpha);
}

PredictionInterval cv_plus_interval(const PredictorSpec& spec,
                                    const Dataset& data,
                                    const Eigen::VectorXd& test_x, int k,
                                    double alpha, std::uint64_t seed) {
  return cv_plus_from_models(fit_cv_models(spec, data, k, seed), test_x, alpha);
}

SplitFit fit_split(const PredictorSpec& spec, const Dataset& data,
                   std::uint64_t seed) {
  data.check();
  const int n = data.n();
  if (n < 2) throw std::invalid_argument("split requires n >= 2");
  std::vector<int> perm = seeded_permutation(n, derive_seed(seed, 0x5011));
  int train_count = n / 2;
  std::vector<int> train_rows(perm.begin(), perm.begin() + train_count);
  SplitFit out;
  out.holdout_rows.assign(perm.begin() + train_count, perm.end());
  out.model = fit(spec, data.select_rows(train_rows), seed);
  out.holdout_residuals.resize(static_cast<int>(out.holdout_rows.size()));
  for (std::size_t j = 0; j < out.holdout_rows.size(); ++j) {
    int i = out.holdout_rows[j];
    out.holdout_residuals(static_cast<int>(j)) =
        std::abs(data.y(i) - predict(out.model, Eigen::VectorXd(data.X.row(i))));
  }
  return out;
}

namespace {

PredictionInterval symmetric_about(double center, const ExtReal& q) {
  if (q.is_pos_inf()) {
    return PredictionInterval(ExtReal::neg_inf(), ExtReal::pos_inf());
  }
  return PredictionInterval(ExtReal::finite(center - q.value()),
                            ExtReal::finite(center + q.value()));
}

}  // namespace

PredictionInterval split_from_fit(const SplitFit& fit, const Eigen::VectorXd& x,
                                  double alpha) {
  // An empty weight vector means uniform holdout weights, which with a raw
  // test weight of 1 gives every calibration mass exactly 1/(m+1).
  return weighted_split_from_fit(fit, Eigen::VectorXd(), 1.0, x, alpha);
}

PredictionInterval weighted_split_from_fit(const SplitFit& fit,
                                           const Eigen::VectorXd& raw_train_weights,
                                           double raw_test_weight,
                                           const Eigen::VectorXd& x,
                                           double alpha) {
  check_alpha(alpha);
  const int m = static_cast<int>(fit.holdout_residuals.size());
  Eigen::VectorXd holdout_w(m);
  if (raw_train_weights.size() == 0) {
    holdout_w.setOnes();
  } else {
    for (int j = 0; j < m; ++j) {
      int row = fit.holdout_rows[static_cast<std::size_t>(j)];
      if (row >= raw_train_weights.size()) {
        throw std::invalid_argument(
            "weighted split: weight vector shorter than the data");
      }
      holdout_w(j) = raw_train_weights(row);
    }
  }
  NormalizedWeights w = normalize(holdout_w, raw_test_weight);
  std::vector<Atom> atoms;
  atoms.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    atoms.push_back({fit.holdout_residuals(j), w.train(j)});
  }
  WeightedAtoms dist(atoms, 0.0, w.test);
  return symmetric_about(predict(fit.model, x),
                         quantile_plus(dist, 1.0 - alpha));
}

PredictionInterval split_interval(const PredictorSpec& spec, const Dataset& data,
                                  const Eigen::VectorXd& test_x, double alpha,
                                  std::uint64_t seed) {
  SplitFit f = fit_split(spec, data, seed);
  return weighted_split_from_fit(f, Eigen::VectorXd(), 1.0, test_x, alpha);
}

PredictionInterval weighted_split_interval(const PredictorSpec& spec,
                                           const Dataset& data,
                                           const Eigen::VectorXd& test_x,
                                           double alpha, std::uint64_t seed,
                                           const Eigen::VectorXd& raw_train_weights,
                                           double raw_test_weight) {
  if (raw_train_weights.size() != data.n()) {
    throw std::invalid_argument(
        "weighted split: need one raw weight per data row");
  }
  SplitFit f = fit_split(spec, data, seed);
  return weighted_split_from_fit(f, raw_train_weights, raw_test_weight, test_x,
                                 alpha);
}

NaiveFit fit_naive(const PredictorSpec& spec, const Dataset& data,
                   std::uint64_t seed) {
  data.check();
  NaiveFit out;
  out.model = fit(spec, data, seed);
  out.residuals.resize(data.n());
  for (int i = 0; i < data.n(); ++i) {
    out.residuals(i) =
        std::abs(data.y(i) - predict(out.model, Eigen::VectorXd(data.X.row(i))));
  }
  return out;
}

PredictionInterval naive_from_fit(const NaiveFit& fit, const Eigen::VectorXd& x,
                                  double alpha) {
  check_alpha(alpha);
  const int n = static_cast<int>(fit.residuals.size());
  double mass = 1.0 / (n + 1);
  std::vector<Atom> atoms;
  atoms.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) atoms.push_back({fit.residuals(i), mass});
  WeightedAtoms dist(atoms, 0.0, mass);
  return symmetric_about(predict(fit.model, x),
                         quantile_plus(dist, 1.0 - alpha));
}

PredictionInterval naive_interval(const PredictorSpec& spec, const Dataset& data,
                                  const Eigen::VectorXd& test_x, double alpha,
                                  std::uint64_t seed) {
  return naive_from_fit(fit_naive(spec, data, seed), test_x, alpha);
}

}  // namespace covband
