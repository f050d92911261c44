#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace covband {

// Density-ratio estimator built from a probabilistic train/test classifier:
// w_hat(x) = (n_train/n_test) * p_hat(x) / (1 - p_hat(x)) with p_hat the
// fitted probability that x came from the test sample, clipped away from
// 0 and 1. The class-imbalance factor makes w_hat estimate the density
// ratio itself; any leftover constant cancels under normalization.
struct RatioEstimator {
  Eigen::VectorXd coef;
  double intercept = 0.0;
  double clip_epsilon = 0.01;
  double imbalance_factor = 1.0;
};

// Logistic regression on rows labeled 0 (train) / 1 (test), fitted by
// deterministic gradient descent with a fixed step 1/L (L estimated by
// seeded power iteration) to gradient 2-norm <= 1e-6 or 1e5 iterations.
// A small L2 term (1e-4) on the coefficients (never the intercept) keeps
// separable inputs from diverging; inputs that still separate raise an
// error suggesting stronger regularization.
RatioEstimator fit_ratio(const Eigen::MatrixXd& train_x,
                         const Eigen::MatrixXd& test_x, std::uint64_t seed);

// p_hat clipped to [eps, 1-eps], returned as imbalance-corrected odds;
// always finite and positive, bounded by factor * (1-eps)/eps.
double estimated_weight(const RatioEstimator& est, const Eigen::VectorXd& x);

// The classifier probability itself (diagnostics and tests).
double classifier_probability(const RatioEstimator& est,
                              const Eigen::VectorXd& x);

}  // namespace covband
