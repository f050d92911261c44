#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "covband/dataset.hpp"
#include "covband/empdist.hpp"
#include "covband/predictors.hpp"
#include "covband/shift.hpp"

namespace covband {

// Everything a leave-one-out interval needs at one test point.
struct LooArtifacts {
  Eigen::VectorXd loo_pred_at_train;  // mu_{-i}(X_i)
  Eigen::VectorXd loo_pred_at_test;   // mu_{-i}(x_test)
  Eigen::VectorXd loo_residuals;      // |Y_i - mu_{-i}(X_i)|, >= 0
  double full_pred_at_test = 0.0;     // mu(x_test)

  int n() const { return static_cast<int>(loo_residuals.size()); }
};

// The test-point-independent half of the leave-one-out computation: the full
// model plus one model per held-out row. Fit once, then evaluate artifacts
// at any number of test points.
struct LooModels {
  ModelParams full;
  std::vector<ModelParams> loo;
  Eigen::VectorXd loo_pred_at_train;
  Eigen::VectorXd loo_residuals;
};

// n+1 fits, every fit with the same seed so the algorithm stays symmetric
// across subsets. Requires n >= 2.
LooModels fit_loo_models(const PredictorSpec& spec, const Dataset& data,
                         std::uint64_t seed);

LooArtifacts artifacts_at(const LooModels& models, const Eigen::VectorXd& x);

// One-shot convenience form of the two calls above.
LooArtifacts compute_loo(const PredictorSpec& spec, const Dataset& data,
                         const Eigen::VectorXd& test_x, std::uint64_t seed);

// Likelihood-ratio-weighted leave-one-out interval:
//   lower = Q-_alpha  of {mu_{-i}(x) - R_i at mass p_i} with p_test at -inf
//   upper = Q+_{1-alpha} of {mu_{-i}(x) + R_i at mass p_i} with p_test at +inf
PredictionInterval jaw_interval(const LooArtifacts& loo,
                                const NormalizedWeights& weights, double alpha);

// The same construction with every mass fixed at 1/(n+1).
PredictionInterval jackknife_plus_interval(const LooArtifacts& loo,
                                           double alpha);

// Atoms centered at the full-model prediction instead of the LOO ones.
PredictionInterval jackknife_interval(const LooArtifacts& loo, double alpha);

// [min_i mu_{-i}(x) - q, max_i mu_{-i}(x) + q] with q the 1-alpha residual
// quantile; contains the jackknife+ interval by construction.
PredictionInterval jackknife_mm_interval(const LooArtifacts& loo, double alpha);

// K-fold variant: models per fold instead of per point.
struct CvModels {
  std::vector<ModelParams> fold_models;
  std::vector<int> fold_of;  // row -> fold
  Eigen::VectorXd residuals;  // |Y_i - mu_{-fold(i)}(X_i)|
};

CvModels fit_cv_models(const PredictorSpec& spec, const Dataset& data, int k,
                       std::uint64_t seed);

PredictionInterval cv_plus_from_models(const CvModels& models,
                                       const Eigen::VectorXd& x, double alpha);

PredictionInterval cv_plus_interval(const PredictorSpec& spec,
                                    const Dataset& data,
                                    const Eigen::VectorXd& test_x, int k,
                                    double alpha, std::uint64_t seed);

// Half/half split: one model on the first half of a seeded shuffle,
// residuals on the rest (odd n gives the spare row to calibration).
struct SplitFit {
  ModelParams model;
  std::vector<int> holdout_rows;
  Eigen::VectorXd holdout_residuals;
};

SplitFit fit_split(const PredictorSpec& spec, const Dataset& data,
                   std::uint64_t seed);

PredictionInterval split_from_fit(const SplitFit& fit, const Eigen::VectorXd& x,
                                  double alpha);

// raw_train_weights has one entry per original data row; the holdout entries
// are normalized together with raw_test_weight (the training half never
// enters the calibration distribution).
PredictionInterval weighted_split_from_fit(const SplitFit& fit,
                                           const Eigen::VectorXd& raw_train_weights,
                                           double raw_test_weight,
                                           const Eigen::VectorXd& x,
                                           double alpha);

PredictionInterval split_interval(const PredictorSpec& spec, const Dataset& data,
                                  const Eigen::VectorXd& test_x, double alpha,
                                  std::uint64_t seed);

PredictionInterval weighted_split_interval(const PredictorSpec& spec,
                                           const Dataset& data,
                                           const Eigen::VectorXd& test_x,
                                           double alpha, std::uint64_t seed,
                                           const Eigen::VectorXd& raw_train_weights,
                                           double raw_test_weight);

// Full-data fit, interval mu(x) +/- (1-alpha) training-residual quantile.
// Undercovers whenever the model overfits; kept as the overfitting baseline.
struct NaiveFit {
  ModelParams model;
  Eigen::VectorXd residuals;
};

NaiveFit fit_naive(const PredictorSpec& spec, const Dataset& data,
                   std::uint64_t seed);

PredictionInterval naive_from_fit(const NaiveFit& fit, const Eigen::VectorXd& x,
                                  double alpha);

PredictionInterval naive_interval(const PredictorSpec& spec, const Dataset& data,
                                  const Eigen::VectorXd& test_x, double alpha,
                                  std::uint64_t seed);

}  // namespace covband
