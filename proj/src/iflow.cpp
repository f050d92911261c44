#include "covband/iflow.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "covband/gradients.hpp"
#include "covband/jets.hpp"
#include "covband/rng.hpp"

namespace covband {

namespace {

MlpShape shape_of(const ModelParams& params) {
  return MlpShape{params.input_dim, params.hidden_units};
}

GradFamily grad_family(const ModelParams& params) {
  switch (params.family) {
    case Family::Ridge:
      return GradFamily::Ridge;
    case Family::Mlp:
      return GradFamily::Mlp;
    default:
      throw std::invalid_argument(
          "influence functions need a differentiable predictor");
  }
}

void check_stationary(const ModelParams& params, const Dataset& data,
                      double lambda) {
  Eigen::VectorXd g = estimating_equation(
      params, data, Eigen::VectorXd::Ones(data.n()), lambda);
  double norm = g.lpNorm<Eigen::Infinity>();
  if (!(norm <= 1e-6)) {
    throw std::invalid_argument(
        "influence expansion requires a stationary fit; |G|_inf = " +
        std::to_string(norm));
  }
}

// Truncated Taylor coefficients of G(theta(t), omega(t)) for the
// leave-row-i direction, where theta(t) carries the coefficients found so
// far and omega_i(t) = 1 - t. Returns the order-k coefficient vector.
template <int K>
Eigen::VectorXd g_coefficient(const ModelParams& params, const Dataset& data,
                              double lambda,
                              const std::vector<Eigen::VectorXd>& coeffs,
                              int i, int k) {
  const int p = static_cast<int>(params.theta.size());
  std::vector<Jet<K>> theta(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    Jet<K> t(params.theta(j));
    for (std::size_t c = 0; c < coeffs.size(); ++c) {
      t.c[c + 1] = coeffs[c](j);
    }
    theta[static_cast<std::size_t>(j)] = t;
  }
  Jet<K> omega_held = Jet<K>::seed(1.0, -1.0);
  Jet<K> omega_kept(1.0);
  std::vector<Jet<K>> g(static_cast<std::size_t>(p));
  estimating_equation_core(
      grad_family(params), theta.data(), shape_of(params), data, lambda,
      [&](int row) -> const Jet<K>& {
        return row == i ? omega_held : omega_kept;
      },
      g.data());
  Eigen::VectorXd out(p);
  for (int j = 0; j < p; ++j) out(j) = g[static_cast<std::size_t>(j)].coeff(k);
  return out;
}

template <int K>
LooDerivatives derivatives_impl(const ModelParams& params, const Dataset& data,
                                double lambda, int i,
                                const HessianOperator& op) {
  LooDerivatives out;
  out.order = K;
  // coeffs[k-1] holds the k-th Taylor coefficient c_k of theta(t). The k-th
  // coefficient of G(theta(t), omega(t)) must vanish; with c_k set to zero it
  // evaluates to r_k, and c_k enters that coefficient only through H*c_k, so
  // c_k = -H^{-1} r_k. The derivative itself is k! * c_k.
  std::vector<Eigen::VectorXd> coeffs;
  double factorial = 1.0;
  for (int k = 1; k <= K; ++k) {
    Eigen::VectorXd r = g_coefficient<K>(params, data, lambda, coeffs, i, k);
    coeffs.push_back(-dampened_solve(op, r));
    factorial *= k;
    out.terms.push_back(factorial * coeffs.back());
  }
  return out;
}

}  // namespace

HessianOperator::HessianOperator(const ModelParams& params, const Dataset& data,
                                 double lambda) {
  grad_family(params);
  const int p = static_cast<int>(params.theta.size());
  h_.resize(p, p);
  Eigen::VectorXd omega = Eigen::VectorXd::Ones(data.n());
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
    e(j) = 1.0;
    h_.col(j) = objective_hvp(params, data, omega, lambda, e);
  }
}

double HessianOperator::dampening() const {
  if (dampening_) return *dampening_;
  const int p = dim();
  // Gershgorin: every eigenvalue is bounded by the largest absolute row sum.
  double sigma = 0.0;
  for (int i = 0; i < p; ++i) {
    sigma = std::max(sigma, h_.row(i).cwiseAbs().sum());
  }
  // Power iteration on sigma*I - H converges to sigma - lambda_min because
  // the shift makes the smallest eigenvalue of H the dominant one.
  Rng rng(0x9d2c5680u);
  Eigen::VectorXd v(p);
  for (int k = 0; k < p; ++k) v(k) = rng.normal();
  v.normalize();
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd w = sigma * v - h_ * v;
    double norm = w.norm();
    if (!(norm > 0.0)) break;
    v = w / norm;
  }
  double lambda_min = sigma - v.dot(sigma * v - h_ * v);
  double c = std::max(0.0, 0.5 - lambda_min);
  dampening_ = c;
  return c;
}

Eigen::VectorXd dampened_solve(const HessianOperator& op,
                               const Eigen::VectorXd& rhs) {
  if (rhs.size() != op.dim()) {
    throw std::invalid_argument("dampened_solve: rhs dimension mismatch");
  }
  double rhs_norm = rhs.norm();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(op.dim());
  if (rhs_norm == 0.0) return x;
  const double tol = 1e-8 * rhs_norm;
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  const int max_iters = 10 * op.dim();
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) <= tol) return x;
    Eigen::VectorXd hp = op.apply_dampened(p);
    double alpha = rr / p.dot(hp);
    x += alpha * p;
    r -= alpha * hp;
    double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  if (std::sqrt(rr) <= tol) return x;
  throw std::runtime_error(
      "conjugate gradient failed to converge; final residual = " +
      std::to_string(std::sqrt(rr)));
}

Eigen::VectorXd dampened_hessian_solve(const ModelParams& params,
                                       const Dataset& data, double lambda,
                                       const Eigen::VectorXd& rhs) {
  HessianOperator op(params, data, lambda);
  return dampened_solve(op, rhs);
}

LooDerivatives loo_directional_derivatives(const ModelParams& params,
                                           const Dataset& data, double lambda,
                                           int i, int K,
                                           const HessianOperator& op) {
  if (K < 1 || K > 3) {
    throw std::invalid_argument("influence order must be 1, 2, or 3");
  }
  if (i < 0 || i >= data.n()) {
    throw std::out_of_range("loo_directional_derivatives: row out of range");
  }
  switch (K) {
    case 1:
      return derivatives_impl<1>(params, data, lambda, i, op);
    case 2:
      return derivatives_impl<2>(params, data, lambda, i, op);
    default:
      return derivatives_impl<3>(params, data, lambda, i, op);
  }
}

LooDerivatives loo_directional_derivatives(const ModelParams& params,
                                           const Dataset& data, double lambda,
                                           int i, int K) {
  check_stationary(params, data, lambda);
  HessianOperator op(params, data, lambda);
  return loo_directional_derivatives(params, data, lambda, i, K, op);
}

ModelParams approx_loo_params(const ModelParams& params,
                              const LooDerivatives& derivs) {
  ModelParams out = params;
  double factorial = 1.0;
  for (std::size_t k = 0; k < derivs.terms.size(); ++k) {
    factorial *= static_cast<double>(k + 1);
    out.theta += derivs.terms[k] / factorial;
  }
  return out;
}

ModelParams polish_to_stationary(const ModelParams& params, const Dataset& data,
                                 double lambda) {
  Eigen::VectorXd omega = Eigen::VectorXd::Ones(data.n());
  ModelParams cur = params;
  Eigen::VectorXd g = estimating_equation(cur, data, omega, lambda);
  double gnorm = g.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < 100 && gnorm > 1e-6; ++it) {
    HessianOperator op(cur, data, lambda);
    Eigen::VectorXd step = dampened_solve(op, -g);
    double scale = 1.0;
    for (int half = 0; half < 30; ++half) {
      ModelParams trial = cur;
      trial.theta += scale * step;
      Eigen::VectorXd g_trial = estimating_equation(trial, data, omega, lambda);
      double trial_norm = g_trial.lpNorm<Eigen::Infinity>();
      if (trial_norm < gnorm) {
        cur = trial;
        g = g_trial;
        gnorm = trial_norm;
        break;
      }
      scale *= 0.5;
      if (half == 29) {
        throw std::runtime_error(
            "stationarity polish stalled; |G|_inf = " + std::to_string(gnorm));
      }
    }
  }
  if (gnorm > 1e-6) {
    throw std::runtime_error(
        "stationarity polish did not converge; |G|_inf = " +
        std::to_string(gnorm));
  }
  return cur;
}

LooModels fit_if_loo_models(const PredictorSpec& spec, const Dataset& data,
                            int K, std::uint64_t seed) {
  data.check();
  const int n = data.n();
  if (n < 2) throw std::invalid_argument("leave-one-out requires n >= 2");
  double lambda = spec.lambda();
  ModelParams full = fit(spec, data, seed);
  if (spec.family == Family::Mlp) {
    full = polish_to_stationary(full, data, lambda);
  }
  check_stationary(full, data, lambda);
  HessianOperator op(full, data, lambda);
  LooModels models;
  models.full = full;
  models.loo.reserve(static_cast<std::size_t>(n));
  models.loo_pred_at_train.resize(n);
  models.loo_residuals.resize(n);
  for (int i = 0; i < n; ++i) {
    LooDerivatives derivs =
        loo_directional_derivatives(full, data, lambda, i, K, op);
    models.loo.push_back(approx_loo_params(full, derivs));
    double pred = predict(models.loo.back(), Eigen::VectorXd(data.X.row(i)));
    models.loo_pred_at_train(i) = pred;
    models.loo_residuals(i) = std::abs(data.y(i) - pred);
  }
  return models;
}

PredictionInterval jawa_interval(const PredictorSpec& spec, const Dataset& data,
                                 const Eigen::VectorXd& test_x,
                                 const NormalizedWeights& weights, double alpha,
                                 int K, std::uint64_t seed) {
  LooModels models = fit_if_loo_models(spec, data, K, seed);
  return jaw_interval(artifacts_at(models, test_x), weights, alpha);
}

}  // namespace covband
