#include "covband/shift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "covband/rng.hpp"

namespace covband {

double oracle_weight(const ShiftSpec& spec, const Eigen::VectorXd& x) {
  if (x.size() != spec.beta.size()) {
    throw std::invalid_argument("oracle_weight: dimension mismatch");
  }
  double t = spec.beta.dot(x);
  if (t > 700.0) {
    throw std::domain_error(
        "oracle_weight: tilt exponent exceeds 700; weight would overflow");
  }
  return std::exp(t);
}

NormalizedWeights normalize(const Eigen::VectorXd& train_weights,
                            double test_weight) {
  if (test_weight < 0.0 || (train_weights.size() > 0 &&
                            train_weights.minCoeff() < 0.0)) {
    throw std::invalid_argument("normalize: weights must be nonnegative");
  }
  double denom = test_weight;
  for (int i = 0; i < train_weights.size(); ++i) denom += train_weights(i);
  if (!(denom > 0.0)) {
    throw std::invalid_argument("normalize: all weights are zero");
  }
  NormalizedWeights out;
  out.train = train_weights / denom;
  out.test = test_weight / denom;
  return out;
}

std::vector<int> sample_weighted_without_replacement(
    const Eigen::VectorXd& weights, int m, std::uint64_t seed) {
  const int n = static_cast<int>(weights.size());
  if (m < 0 || m > n) {
    throw std::invalid_argument("sample size exceeds pool size");
  }
  for (int i = 0; i < n; ++i) {
    if (!(weights(i) >= 0.0)) {
      throw std::invalid_argument("sampling weights must be nonnegative");
    }
  }
  // Exponential-keys scheme: ordering by log(u)/w descending reproduces
  // sequential weighted draws without replacement in one pass. Zero-weight
  // rows get a -inf key, so they are taken only after every positive-weight
  // row, in index order.
  Rng rng(seed);
  std::vector<std::pair<double, int>> keys;
  keys.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform01();
    while (u <= 0.0) u = rng.uniform01();
    double key = weights(i) > 0.0 ? std::log(u) / weights(i)
                                  : -std::numeric_limits<double>::infinity();
    keys.emplace_back(key, i);
  }
  std::stable_sort(keys.begin(), keys.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out.push_back(keys[static_cast<std::size_t>(i)].second);
  return out;
}

std::vector<int> sample_shifted_test(const Dataset& pool, const ShiftSpec& spec,
                                     int m) {
  Eigen::VectorXd w(pool.n());
  for (int i = 0; i < pool.n(); ++i) {
    w(i) = oracle_weight(spec, Eigen::VectorXd(pool.X.row(i)));
  }
  return sample_weighted_without_replacement(w, m, spec.seed);
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  double l1 = 0.0;
  double l2 = 0.0;
  for (int i = 0; i < weights.size(); ++i) {
    l1 += std::abs(weights(i));
    l2 += weights(i) * weights(i);
  }
  if (!(l2 > 0.0)) {
    throw std::invalid_argument("effective_sample_size: all weights are zero");
  }
  return l1 * l1 / l2;
}

}  // namespace covband
