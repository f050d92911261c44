#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "covband/dataset.hpp"
#include "covband/empdist.hpp"
#include "covband/infer.hpp"
#include "covband/predictors.hpp"
#include "covband/shift.hpp"

namespace covband {

// Dense view of H(theta, 1_n) = lambda*I + (1/n) sum_i grad g_i(theta),
// assembled once from forward-mode Hessian-vector products. The dampening
// constant c = max(0, 0.5 - lambda_min(H)) floors the smallest eigenvalue at
// 0.5; lambda_min comes from a Gershgorin bound sigma plus 200 seeded power
// iterations on (sigma*I - H), both computed once per operator.
class HessianOperator {
 public:
  HessianOperator(const ModelParams& params, const Dataset& data,
                  double lambda);

  int dim() const { return static_cast<int>(h_.rows()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return h_ * v; }
  double dampening() const;
  Eigen::VectorXd apply_dampened(const Eigen::VectorXd& v) const {
    return h_ * v + dampening() * v;
  }

 private:
  Eigen::MatrixXd h_;
  mutable std::optional<double> dampening_;
};

// Conjugate gradient on the dampened operator, to residual <= 1e-8*|rhs|;
// throws with the final residual after 10*dim iterations.
Eigen::VectorXd dampened_solve(const HessianOperator& op,
                               const Eigen::VectorXd& rhs);

// One-shot form: builds the operator and solves (H + cI) x = rhs.
Eigen::VectorXd dampened_hessian_solve(const ModelParams& params,
                                       const Dataset& data, double lambda,
                                       const Eigen::VectorXd& rhs);

// Directional derivatives of the fitted parameters along the leave-one-out
// weight direction (omega_i: 1 -> 0), orders 1..K.
struct LooDerivatives {
  int order = 0;
  std::vector<Eigen::VectorXd> terms;  // terms[k-1] = k-th derivative
};

// Solves the k-th Taylor coefficient of G(theta(t), omega(t)) = 0 order by
// order with forward-mode jets; each order costs one dampened solve against
// the same operator. Requires |G(theta, 1_n)|_inf <= 1e-6 (a stationary
// fit). K in {1, 2, 3}.
LooDerivatives loo_directional_derivatives(const ModelParams& params,
                                           const Dataset& data, double lambda,
                                           int i, int K);

// Same, reusing a prebuilt operator across rows.
LooDerivatives loo_directional_derivatives(const ModelParams& params,
                                           const Dataset& data, double lambda,
                                           int i, int K,
                                           const HessianOperator& op);

// theta + sum_k terms[k]/k!, the truncated Taylor step to the held-out fit.
ModelParams approx_loo_params(const ModelParams& params,
                              const LooDerivatives& derivs);

// Newton polish to a stationary point: damped steps (H+cI) s = -G with a
// halving backtrack on |G|, until |G|_inf <= 1e-6. Mini-batch training stops
// near, not at, a stationary point, and the derivative recursion needs the
// latter. Ridge fits already satisfy the tolerance and return unchanged.
ModelParams polish_to_stationary(const ModelParams& params, const Dataset& data,
                                 double lambda);

// Leave-one-out models approximated by K-th order influence functions: one
// full fit, then n*K dampened solves; no refits. The result feeds the same
// interval constructors as exact leave-one-out models.
LooModels fit_if_loo_models(const PredictorSpec& spec, const Dataset& data,
                            int K, std::uint64_t seed);

PredictionInterval jawa_interval(const PredictorSpec& spec, const Dataset& data,
                                 const Eigen::VectorXd& test_x,
                                 const NormalizedWeights& weights, double alpha,
                                 int K, std::uint64_t seed);

}  // namespace covband
