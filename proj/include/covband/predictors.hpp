#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "covband/dataset.hpp"

namespace covband {

enum class Family { ConstantMean, Ridge, Mlp };

struct MlpConfig {
  int hidden_units = 25;
  double l2_lambda = 1.0;
  int epochs = 2000;
  int batch_size = 50;
  double learning_rate = 1e-4;
  // Mixed into the fit seed; lets a config pin the network's own stream
  // independently of the experiment seed.
  std::uint64_t seed = 0;
};

struct PredictorSpec {
  Family family = Family::Ridge;
  double ridge_lambda = 1.0;
  MlpConfig mlp;

  // The L2 coefficient entering the estimating equation for this family.
  double lambda() const {
    return family == Family::Mlp ? mlp.l2_lambda : ridge_lambda;
  }
};

struct ModelParams {
  Family family = Family::ConstantMean;
  int input_dim = 0;
  int hidden_units = 0;  // mlp only
  Eigen::VectorXd theta;
};

// Trains the requested family. All families canonicalize the row order
// internally (lexicographic by features, then label), so the result is
// invariant under any permutation of the training rows, bit for bit.
//   constant-mean: theta = [mean(y)]
//   ridge:         theta = (X'X + lambda*n*I)^-1 X'y  (no intercept)
//   mlp:           seeded uniform init, mini-batch gradient descent with a
//                  seeded batch order; one hidden logistic layer.
ModelParams fit(const PredictorSpec& spec, const Dataset& data,
                std::uint64_t seed);

double predict(const ModelParams& params, const Eigen::VectorXd& x);

// Ridge refit on the dataset with row i removed, computed by a direct
// least-squares solve on the reduced rows (QR on the regularizer-stacked
// system). Shares no code with fit() or the influence-function engine, so it
// serves as an independent oracle for both.
ModelParams exact_loo_ridge(const Dataset& data, double lambda, int i);

// Gradient of the per-point loss 0.5*(y_i - f(x_i; theta))^2 at theta.
Eigen::VectorXd point_gradient(const ModelParams& params, const Dataset& data,
                               int i);

// The per-point loss itself (finite-difference target for gradient checks).
double point_loss(const ModelParams& params, const Dataset& data, int i);

// lambda * theta, the regularizer's contribution to the estimating equation.
Eigen::VectorXd regularizer_gradient(const ModelParams& params, double lambda);

// G(theta, omega) = lambda*theta + (1/n) sum_i omega_i g_i(theta). A fitted
// ridge or polished mlp satisfies G(theta, 1_n) = 0 to solver tolerance.
Eigen::VectorXd estimating_equation(const ModelParams& params,
                                    const Dataset& data,
                                    const Eigen::VectorXd& omega,
                                    double lambda);

// H(theta, omega) * v where H = lambda*I + (1/n) sum_i omega_i grad g_i,
// computed by one forward-mode pass (no Hessian materialization).
Eigen::VectorXd objective_hvp(const ModelParams& params, const Dataset& data,
                              const Eigen::VectorXd& omega, double lambda,
                              const Eigen::VectorXd& v);

}  // namespace covband
