#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "covband/dataset.hpp"

namespace covband {

// Exponential-tilt shift: test points are drawn with probability
// proportional to w(x) = exp(x . beta).
struct ShiftSpec {
  Eigen::VectorXd beta;
  double sample_fraction = 0.5;
  std::uint64_t seed = 0;
};

// Likelihood-ratio masses of the weighted empirical distribution:
// train(i) = w_i / (sum_j w_j + w_test), test = w_test / (same).
struct NormalizedWeights {
  Eigen::VectorXd train;
  double test = 0.0;

  int n() const { return static_cast<int>(train.size()); }

  static NormalizedWeights uniform(int n) {
    NormalizedWeights w;
    w.train = Eigen::VectorXd::Constant(n, 1.0 / (n + 1));
    w.test = 1.0 / (n + 1);
    return w;
  }
};

// w(x) = exp(x . beta). Throws when the exponent exceeds 700 (the weight
// would overflow; tilting that extreme means the shift construction is
// pathological, not that the caller wants infinity).
double oracle_weight(const ShiftSpec& spec, const Eigen::VectorXd& x);

// Divides by (sum of train weights + test weight). Scale-invariant; throws
// when every weight is zero.
NormalizedWeights normalize(const Eigen::VectorXd& train_weights,
                            double test_weight);

// m distinct pool indices drawn without replacement, each draw proportional
// to the remaining oracle weights, deterministically from spec.seed.
std::vector<int> sample_shifted_test(const Dataset& pool, const ShiftSpec& spec,
                                     int m);

// Same draw but with caller-supplied weights (one per pool row).
std::vector<int> sample_weighted_without_replacement(
    const Eigen::VectorXd& weights, int m, std::uint64_t seed);

// (sum |w_i|)^2 / sum w_i^2, in [1, n]; the information-retention heuristic
// for importance weights.
double effective_sample_size(const Eigen::VectorXd& weights);

}  // namespace covband
