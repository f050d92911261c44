#include "covband/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "covband/gradients.hpp"
#include "covband/rng.hpp"

namespace covband {

namespace {

// Rows ordered lexicographically by features, then label. Fitting in this
// order makes every floating-point accumulation independent of the caller's
// row order; rows that tie completely are identical, so their relative order
// cannot matter.
std::vector<int> canonical_order(const Dataset& data) {
  std::vector<int> idx(static_cast<std::size_t>(data.n()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int k = 0; k < data.dim(); ++k) {
      if (data.X(a, k) != data.X(b, k)) return data.X(a, k) < data.X(b, k);
    }
    return data.y(a) < data.y(b);
  });
  return idx;
}

Dataset reorder(const Dataset& data, const std::vector<int>& idx) {
  return data.select_rows(idx);
}

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
          "constant-mean predictor has no differentiable objective");
  }
}

ModelParams fit_constant_mean(const Dataset& data) {
  std::vector<int> idx = canonical_order(data);
  double sum = 0.0;
  for (int i : idx) sum += data.y(i);
  ModelParams params;
  params.family = Family::ConstantMean;
  params.input_dim = data.dim();
  params.theta = Eigen::VectorXd::Constant(1, sum / data.n());
  return params;
}

ModelParams fit_ridge(const Dataset& data, double lambda) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("ridge fit requires lambda > 0");
  }
  Dataset c = reorder(data, canonical_order(data));
  const int d = c.dim();
  Eigen::MatrixXd A = c.X.transpose() * c.X;
  A += lambda * c.n() * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("ridge system is not positive definite");
  }
  ModelParams params;
  params.family = Family::Ridge;
  params.input_dim = d;
  params.theta = llt.solve(c.X.transpose() * c.y);
  return params;
}

ModelParams fit_mlp(const MlpConfig& cfg, const Dataset& data,
                    std::uint64_t seed) {
  if (cfg.hidden_units <= 0 || cfg.epochs <= 0 || cfg.batch_size <= 0 ||
      !(cfg.learning_rate > 0.0) || !(cfg.l2_lambda >= 0.0)) {
    throw std::invalid_argument("mlp config values out of range");
  }
  Dataset c = reorder(data, canonical_order(data));
  const int n = c.n();
  const int d = c.dim();
  MlpShape shape{d, cfg.hidden_units};
  const int p = shape.params();

  std::uint64_t base = mix64(seed) ^ mix64(cfg.seed);
  Rng init_rng(derive_seed(base, 1));
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  double w1_bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (int j = 0; j < shape.h; ++j) {
    for (int k = 0; k < d; ++k) {
      theta(shape.w1(j, k)) = init_rng.uniform(-w1_bound, w1_bound);
    }
  }
  double w2_bound = 1.0 / std::sqrt(static_cast<double>(shape.h));
  for (int j = 0; j < shape.h; ++j) {
    theta(shape.w2(j)) = init_rng.uniform(-w2_bound, w2_bound);
  }

  // One generator drives the batch order for the whole schedule, so the
  // shuffle stream continues across epochs instead of restarting.
  Rng batch_rng(derive_seed(base, 2));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(static_cast<std::size_t>(p));
  std::vector<double> xrow(static_cast<std::size_t>(d));
  std::vector<double> act;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    batch_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch_size) {
      int stop = std::min(n, start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int b = start; b < stop; ++b) {
        int i = order[static_cast<std::size_t>(b)];
        for (int k = 0; k < d; ++k) xrow[static_cast<std::size_t>(k)] = c.X(i, k);
        mlp_point_gradient_acc(theta.data(), shape, xrow.data(), c.y(i), 1.0,
                               grad.data(), act);
      }
      double inv = 1.0 / (stop - start);
      bool finite = true;
      for (int k = 0; k < p; ++k) {
        double g = grad[static_cast<std::size_t>(k)] * inv +
                   cfg.l2_lambda * theta(k);
        if (!std::isfinite(g)) finite = false;
        theta(k) -= cfg.learning_rate * g;
      }
      if (!finite) {
        throw std::runtime_error("mlp training produced a non-finite update at epoch " +
                                 std::to_string(epoch));
      }
    }
  }

  ModelParams params;
  params.family = Family::Mlp;
  params.input_dim = d;
  params.hidden_units = cfg.hidden_units;
  params.theta = theta;
  return params;
}

void check_row(const ModelParams& params, const Eigen::VectorXd& x) {
  if (static_cast<int>(x.size()) != params.input_dim) {
    throw std::invalid_argument("predict: feature dimension mismatch");
  }
}

}  // namespace

ModelParams fit(const PredictorSpec& spec, const Dataset& data,
                std::uint64_t seed) {
  data.check();
  if (data.n() < 1) throw std::invalid_argument("fit: empty dataset");
  switch (spec.family) {
    case Family::ConstantMean:
      return fit_constant_mean(data);
    case Family::Ridge:
      return fit_ridge(data, spec.ridge_lambda);
    case Family::Mlp:
      return fit_mlp(spec.mlp, data, seed);
  }
  throw std::invalid_argument("fit: unknown family");
}

double predict(const ModelParams& params, const Eigen::VectorXd& x) {
  switch (params.family) {
    case Family::ConstantMean:
      return params.theta(0);
    case Family::Ridge:
      check_row(params, x);
      return params.theta.dot(x);
    case Family::Mlp: {
      check_row(params, x);
      MlpShape shape = shape_of(params);
      std::vector<double> act;
      std::vector<double> xrow(static_cast<std::size_t>(shape.d));
      for (int k = 0; k < shape.d; ++k) xrow[static_cast<std::size_t>(k)] = x(k);
      return mlp_point_value(params.theta.data(), shape, xrow.data(), act);
    }
  }
  throw std::invalid_argument("predict: unknown family");
}

ModelParams exact_loo_ridge(const Dataset& data, double lambda, int i) {
  data.check();
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("exact_loo_ridge requires lambda > 0");
  }
  if (data.n() < 2) {
    throw std::invalid_argument("exact_loo_ridge: nothing left after removal");
  }
  Dataset reduced = data.drop_row(i);
  const int m = reduced.n();
  const int d = reduced.dim();
  Eigen::MatrixXd stacked(m + d, d);
  stacked.topRows(m) = reduced.X;
  stacked.bottomRows(d) =
      std::sqrt(lambda * m) * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + d);
  rhs.head(m) = reduced.y;
  ModelParams params;
  params.family = Family::Ridge;
  params.input_dim = d;
  params.theta = stacked.colPivHouseholderQr().solve(rhs);
  return params;
}

Eigen::VectorXd point_gradient(const ModelParams& params, const Dataset& data,
                               int i) {
  if (i < 0 || i >= data.n()) {
    throw std::out_of_range("point_gradient: row index out of range");
  }
  GradFamily fam = grad_family(params);
  MlpShape shape = shape_of(params);
  const int d = data.dim();
  const int p = static_cast<int>(params.theta.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
  std::vector<double> xrow(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) xrow[static_cast<std::size_t>(k)] = data.X(i, k);
  if (fam == GradFamily::Ridge) {
    ridge_point_gradient_acc(params.theta.data(), d, xrow.data(), data.y(i),
                             1.0, grad.data());
  } else {
    std::vector<double> act;
    mlp_point_gradient_acc(params.theta.data(), shape, xrow.data(), data.y(i),
                           1.0, grad.data(), act);
  }
  return grad;
}

double point_loss(const ModelParams& params, const Dataset& data, int i) {
  if (i < 0 || i >= data.n()) {
    throw std::out_of_range("point_loss: row index out of range");
  }
  double diff = data.y(i) - predict(params, Eigen::VectorXd(data.X.row(i)));
  return 0.5 * diff * diff;
}

Eigen::VectorXd regularizer_gradient(const ModelParams& params,
                                     double lambda) {
  return lambda * params.theta;
}

Eigen::VectorXd estimating_equation(const ModelParams& params,
                                    const Dataset& data,
                                    const Eigen::VectorXd& omega,
                                    double lambda) {
  if (omega.size() != data.n()) {
    throw std::invalid_argument("estimating_equation: omega length mismatch");
  }
  GradFamily fam = grad_family(params);
  MlpShape shape = shape_of(params);
  Eigen::VectorXd out(params.theta.size());
  estimating_equation_core(
      fam, params.theta.data(), shape, data, lambda,
      [&](int i) { return omega(i); }, out.data());
  return out;
}

Eigen::VectorXd objective_hvp(const ModelParams& params, const Dataset& data,
                              const Eigen::VectorXd& omega, double lambda,
                              const Eigen::VectorXd& v) {
  if (omega.size() != data.n()) {
    throw std::invalid_argument("objective_hvp: omega length mismatch");
  }
  if (v.size() != params.theta.size()) {
    throw std::invalid_argument("objective_hvp: direction length mismatch");
  }
  GradFamily fam = grad_family(params);
  MlpShape shape = shape_of(params);
  const int p = static_cast<int>(params.theta.size());
  std::vector<Jet<1>> theta(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    theta[static_cast<std::size_t>(k)] = Jet<1>::seed(params.theta(k), v(k));
  }
  std::vector<Jet<1>> g(static_cast<std::size_t>(p));
  estimating_equation_core(
      fam, theta.data(), shape, data, lambda,
      [&](int i) { return omega(i); }, g.data());
  Eigen::VectorXd out(p);
  for (int k = 0; k < p; ++k) out(k) = g[static_cast<std::size_t>(k)].coeff(1);
  return out;
}

}  // namespace covband
