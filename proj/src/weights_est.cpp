#include "covband/weights_est.hpp"

#include <cmath>
#include <stdexcept>

#include "covband/jets.hpp"
#include "covband/rng.hpp"

namespace covband {

namespace {

constexpr double kCoefL2 = 1e-4;
constexpr double kGradTol = 1e-6;
constexpr int kMaxIters = 100000;

// Largest eigenvalue of M'M/(4N) + L2, the Lipschitz constant of the
// logistic-loss gradient; power iteration with a seeded start.
double lipschitz_bound(const Eigen::MatrixXd& m, std::uint64_t seed) {
  const int p = static_cast<int>(m.cols());
  Rng rng(derive_seed(seed, 71));
  Eigen::VectorXd v(p);
  for (int k = 0; k < p; ++k) v(k) = rng.normal();
  v.normalize();
  double eig = 1.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = m.transpose() * (m * v);
    double norm = w.norm();
    if (!(norm > 0.0)) break;
    eig = norm;
    v = w / norm;
  }
  return eig / (4.0 * static_cast<double>(m.rows())) + kCoefL2;
}

}  // namespace

RatioEstimator fit_ratio(const Eigen::MatrixXd& train_x,
                         const Eigen::MatrixXd& test_x, std::uint64_t seed) {
  if (train_x.rows() == 0 || test_x.rows() == 0) {
    throw std::invalid_argument("fit_ratio: both samples must be nonempty");
  }
  if (train_x.cols() != test_x.cols()) {
    throw std::invalid_argument("fit_ratio: feature dimension mismatch");
  }
  const int n0 = static_cast<int>(train_x.rows());
  const int n1 = static_cast<int>(test_x.rows());
  const int n = n0 + n1;
  const int d = static_cast<int>(train_x.cols());

  // Design matrix with an intercept column; labels 0 for train, 1 for test.
  Eigen::MatrixXd m(n, d + 1);
  m.block(0, 0, n0, d) = train_x;
  m.block(n0, 0, n1, d) = test_x;
  m.col(d).setOnes();
  Eigen::VectorXd label = Eigen::VectorXd::Zero(n);
  label.tail(n1).setOnes();

  double step = 1.0 / lipschitz_bound(m, seed);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd grad(d + 1);
  for (int it = 0; it < kMaxIters; ++it) {
    Eigen::VectorXd z = m * theta;
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p(i) = sigmoid(z(i));
    grad = m.transpose() * (p - label) / static_cast<double>(n);
    grad.head(d) += kCoefL2 * theta.head(d);
    if (grad.norm() <= kGradTol) break;
    theta -= step * grad;
    if (theta.head(d).norm() > 1e3) {
      throw std::runtime_error(
          "fit_ratio: classifier weights diverged; the samples appear "
          "linearly separable, increase regularization");
    }
  }

  RatioEstimator est;
  est.coef = theta.head(d);
  est.intercept = theta(d);
  est.clip_epsilon = 0.01;
  est.imbalance_factor = static_cast<double>(n0) / static_cast<double>(n1);

  // Residual separation check: a classifier that pushes every train point
  // to one extreme and every test point to the other has learned a separator
  // rather than a density ratio, even if its norm stayed bounded.
  const double eps = est.clip_epsilon;
  bool train_low = true;
  for (int i = 0; i < n0 && train_low; ++i) {
    train_low = sigmoid(m.row(i).head(d).dot(est.coef) + est.intercept) <= eps;
  }
  bool test_high = train_low;
  for (int i = n0; i < n && test_high; ++i) {
    test_high = sigmoid(m.row(i).head(d).dot(est.coef) + est.intercept) >= 1.0 - eps;
  }
  if (train_low && test_high) {
    throw std::runtime_error(
        "fit_ratio: samples are separable (all probabilities saturated); "
        "increase regularization");
  }
  return est;
}

double classifier_probability(const RatioEstimator& est,
                              const Eigen::VectorXd& x) {
  if (x.size() != est.coef.size()) {
    throw std::invalid_argument("classifier_probability: dimension mismatch");
  }
  return sigmoid(est.coef.dot(x) + est.intercept);
}

double estimated_weight(const RatioEstimator& est, const Eigen::VectorXd& x) {
  double p = classifier_probability(est, x);
  double eps = est.clip_epsilon;
  if (p < eps) p = eps;
  if (p > 1.0 - eps) p = 1.0 - eps;
  return est.imbalance_factor * p / (1.0 - p);
}

}  // namespace covband
