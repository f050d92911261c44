#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "covband/infer.hpp"
#include "covband/rng.hpp"
#include "doctest.h"

using covband::Dataset;
using covband::ExtReal;
using covband::Family;
using covband::LooArtifacts;
using covband::LooModels;
using covband::NormalizedWeights;
using covband::PredictionInterval;
using covband::PredictorSpec;
using covband::Rng;

namespace {

Dataset constant_mean_instance() {
  Dataset d;
  d.X.resize(3, 1);
  d.X << 10.0, 20.0, 30.0;
  d.y.resize(3);
  d.y << 0.0, 3.0, 6.0;
  return d;
}

PredictorSpec constant_spec() {
  PredictorSpec spec;
  spec.family = Family::ConstantMean;
  return spec;
}

PredictorSpec ridge_spec(double lambda) {
  PredictorSpec spec;
  spec.family = Family::Ridge;
  spec.ridge_lambda = lambda;
  return spec;
}

Dataset random_ridge_instance(Rng* rng, int n, int d) {
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  Eigen::VectorXd w(d);
  for (int c = 0; c < d; ++c) w(c) = rng->normal();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) data.X(r, c) = rng->normal();
    data.y(r) = data.X.row(r).dot(w) + 0.3 * rng->normal();
  }
  return data;
}

double lower_value(const PredictionInterval& interval) {
  return interval.lower().as_double();
}

double upper_value(const PredictionInterval& interval) {
  return interval.upper().as_double();
}

bool interval_contains_interval(const PredictionInterval& outer,
                                const PredictionInterval& inner) {
  return outer.lower() <= inner.lower() && inner.upper() <= outer.upper();
}

}  // namespace

TEST_CASE("leave-one-out artifacts for the constant-mean instance") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  LooArtifacts loo =
      covband::compute_loo(constant_spec(), constant_mean_instance(), x, 1);

  CHECK(loo.loo_pred_at_train(0) == doctest::Approx(4.5).epsilon(1e-14));
  CHECK(loo.loo_pred_at_train(1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(loo.loo_pred_at_train(2) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(loo.loo_residuals(0) == doctest::Approx(4.5).epsilon(1e-14));
  CHECK(loo.loo_residuals(1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(loo.loo_residuals(2) == doctest::Approx(4.5).epsilon(1e-14));
  CHECK(loo.full_pred_at_test == doctest::Approx(3.0).epsilon(1e-14));

  for (int i = 0; i < loo.n(); ++i) {
    CHECK(loo.loo_residuals(i) >= 0.0);
  }
}

TEST_CASE("two identical rows predict each other") {
  Dataset d;
  d.X.resize(2, 1);
  d.X << 1.0, 1.0;
  d.y.resize(2);
  d.y << 5.0, 5.0;
  LooArtifacts loo =
      covband::compute_loo(constant_spec(), d, Eigen::VectorXd::Zero(1), 1);
  CHECK(loo.loo_pred_at_train(0) == 5.0);
  CHECK(loo.loo_pred_at_train(1) == 5.0);
  CHECK(loo.loo_residuals(0) == 0.0);
}

TEST_CASE("ridge leave-one-out matches the closed-form oracle") {
  Rng rng(818);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 4 + static_cast<int>(rng.below(12));
    int d = 1 + static_cast<int>(rng.below(3));
    Dataset data = random_ridge_instance(&rng, n, d);
    double lambda = 0.2 + rng.uniform01();
    LooModels models = covband::fit_loo_models(ridge_spec(lambda), data, 0);
    for (int i = 0; i < n; ++i) {
      covband::ModelParams oracle = covband::exact_loo_ridge(data, lambda, i);
      CHECK((models.loo[i].theta - oracle.theta).lpNorm<Eigen::Infinity>() <=
            1e-9);
    }
  }
}

TEST_CASE("weighted interval on the constant-mean instance") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  LooArtifacts loo =
      covband::compute_loo(constant_spec(), constant_mean_instance(), x, 1);

  PredictionInterval jaw =
      covband::jaw_interval(loo, NormalizedWeights::uniform(3), 0.5);
  CHECK(lower_value(jaw) == doctest::Approx(-3.0).epsilon(1e-14));
  CHECK(upper_value(jaw) == doctest::Approx(6.0).epsilon(1e-14));

  PredictionInterval jkp = covband::jackknife_plus_interval(loo, 0.5);
  CHECK(lower_value(jkp) == doctest::Approx(-3.0).epsilon(1e-14));
  CHECK(upper_value(jkp) == doctest::Approx(6.0).epsilon(1e-14));

  PredictionInterval jk = covband::jackknife_interval(loo, 0.5);
  CHECK(lower_value(jk) == doctest::Approx(-1.5).epsilon(1e-14));
  CHECK(upper_value(jk) == doctest::Approx(7.5).epsilon(1e-14));

  PredictionInterval mm = covband::jackknife_mm_interval(loo, 0.5);
  CHECK(lower_value(mm) == doctest::Approx(-3.0).epsilon(1e-14));
  CHECK(upper_value(mm) == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("dominant test-point mass turns both tails infinite") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  LooArtifacts loo =
      covband::compute_loo(constant_spec(), constant_mean_instance(), x, 1);
  NormalizedWeights heavy =
      covband::normalize(Eigen::VectorXd::Ones(3), 10.0);
  PredictionInterval interval = covband::jaw_interval(loo, heavy, 0.5);
  CHECK(interval.lower().is_neg_inf());
  CHECK(interval.upper().is_pos_inf());
}

TEST_CASE("tiny alpha pushes jackknife+ to the infinite tails") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  LooArtifacts loo =
      covband::compute_loo(constant_spec(), constant_mean_instance(), x, 1);
  PredictionInterval interval = covband::jackknife_plus_interval(loo, 1e-6);
  CHECK(interval.lower().is_neg_inf());
  CHECK(interval.upper().is_pos_inf());
}

TEST_CASE("uniform weights reduce the weighted interval to jackknife+") {
  Rng rng(271828);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 5 + static_cast<int>(rng.below(46));
    int d = 1 + static_cast<int>(rng.below(3));
    Dataset data = random_ridge_instance(&rng, n, d);
    Eigen::VectorXd x(d);
    for (int c = 0; c < d; ++c) x(c) = rng.normal();
    double alpha = 0.05 + 0.4 * rng.uniform01();

    LooArtifacts loo = covband::compute_loo(ridge_spec(0.5), data, x, 0);
    PredictionInterval jaw =
        covband::jaw_interval(loo, NormalizedWeights::uniform(n), alpha);
    PredictionInterval jkp = covband::jackknife_plus_interval(loo, alpha);

    REQUIRE(jaw.lower().is_finite() == jkp.lower().is_finite());
    REQUIRE(jaw.upper().is_finite() == jkp.upper().is_finite());
    if (jkp.lower().is_finite()) {
      CHECK(std::abs(lower_value(jaw) - lower_value(jkp)) <= 1e-12);
    }
    if (jkp.upper().is_finite()) {
      CHECK(std::abs(upper_value(jaw) - upper_value(jkp)) <= 1e-12);
    }
  }
}

TEST_CASE("jackknife-mm contains jackknife+ on every instance") {
  Rng rng(606);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 4 + static_cast<int>(rng.below(30));
    Dataset data = random_ridge_instance(&rng, n, 2);
    Eigen::VectorXd x(2);
    x << rng.normal(), rng.normal();
    double alpha = 0.05 + 0.5 * rng.uniform01();
    LooArtifacts loo = covband::compute_loo(ridge_spec(0.7), data, x, 0);
    PredictionInterval mm = covband::jackknife_mm_interval(loo, alpha);
    PredictionInterval jkp = covband::jackknife_plus_interval(loo, alpha);
    CHECK(interval_contains_interval(mm, jkp));
  }
}

TEST_CASE("intervals shrink as alpha grows for every method") {
  Rng rng(1312);
  Dataset data = random_ridge_instance(&rng, 24, 2);
  Eigen::VectorXd x(2);
  x << 0.4, -0.2;
  const PredictorSpec spec = ridge_spec(0.8);
  NormalizedWeights skew =
      covband::normalize((Eigen::VectorXd::Ones(24) * 0.7).eval(), 2.0);

  LooArtifacts loo = covband::compute_loo(spec, data, x, 3);
  covband::CvModels cv = covband::fit_cv_models(spec, data, 6, 3);
  covband::SplitFit split = covband::fit_split(spec, data, 3);
  covband::NaiveFit naive = covband::fit_naive(spec, data, 3);

  const std::vector<double> alphas = {0.05, 0.1, 0.2, 0.35, 0.5, 0.7};
  auto check_nested = [&](auto make) {
    for (std::size_t k = 1; k < alphas.size(); ++k) {
      PredictionInterval wide = make(alphas[k - 1]);
      PredictionInterval narrow = make(alphas[k]);
      CHECK(interval_contains_interval(wide, narrow));
    }
  };

  check_nested([&](double a) { return covband::jaw_interval(loo, skew, a); });
  check_nested([&](double a) { return covband::jackknife_plus_interval(loo, a); });
  check_nested([&](double a) { return covband::jackknife_interval(loo, a); });
  check_nested([&](double a) { return covband::jackknife_mm_interval(loo, a); });
  check_nested([&](double a) { return covband::cv_plus_from_models(cv, x, a); });
  check_nested([&](double a) { return covband::split_from_fit(split, x, a); });
  check_nested([&](double a) { return covband::naive_from_fit(naive, x, a); });
}

TEST_CASE("cv+ with one fold per row is jackknife+") {
  Rng rng(27);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 5 + static_cast<int>(rng.below(10));
    Dataset data = random_ridge_instance(&rng, n, 2);
    Eigen::VectorXd x(2);
    x << rng.normal(), rng.normal();
    double alpha = 0.1 + 0.3 * rng.uniform01();

    covband::CvModels cv = covband::fit_cv_models(ridge_spec(0.5), data, n, 9);
    LooArtifacts loo = covband::compute_loo(ridge_spec(0.5), data, x, 9);
    PredictionInterval a = covband::cv_plus_from_models(cv, x, alpha);
    PredictionInterval b = covband::jackknife_plus_interval(loo, alpha);
    if (b.lower().is_finite()) {
      CHECK(std::abs(lower_value(a) - lower_value(b)) <= 1e-12);
      CHECK(std::abs(upper_value(a) - upper_value(b)) <= 1e-12);
    }
  }
}

TEST_CASE("cv+ fold assignment is deterministic and balanced") {
  Rng rng(77);
  Dataset data = random_ridge_instance(&rng, 17, 2);
  covband::CvModels a = covband::fit_cv_models(ridge_spec(1.0), data, 5, 123);
  covband::CvModels b = covband::fit_cv_models(ridge_spec(1.0), data, 5, 123);
  CHECK(a.fold_of == b.fold_of);
  std::vector<int> counts(5, 0);
  for (int f : a.fold_of) counts[f] += 1;
  for (int c : counts) {
    CHECK(c >= 17 / 5);
    CHECK(c <= 17 / 5 + 1);
  }
  CHECK_THROWS_AS(covband::fit_cv_models(ridge_spec(1.0), data, 1, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(covband::fit_cv_models(ridge_spec(1.0), data, 18, 0),
                  std::invalid_argument);
}

TEST_CASE("split interval from frozen holdout residuals") {
  covband::SplitFit fit;
  fit.model.family = Family::ConstantMean;
  fit.model.input_dim = 1;
  fit.model.theta = Eigen::VectorXd::Constant(1, 2.0);
  fit.holdout_rows = {0, 1, 2};
  fit.holdout_residuals.resize(3);
  fit.holdout_residuals << 1.0, 2.0, 3.0;

  PredictionInterval interval =
      covband::split_from_fit(fit, Eigen::VectorXd::Zero(1), 0.25);
  CHECK(lower_value(interval) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(upper_value(interval) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("equal holdout residuals give the exact band") {
  covband::SplitFit fit;
  fit.model.family = Family::ConstantMean;
  fit.model.input_dim = 1;
  fit.model.theta = Eigen::VectorXd::Constant(1, 1.0);
  fit.holdout_rows = {0, 1, 2, 3};
  fit.holdout_residuals = Eigen::VectorXd::Constant(4, 0.75);

  // 1 - alpha <= m/(m+1) holds at alpha = 0.25.
  PredictionInterval interval =
      covband::split_from_fit(fit, Eigen::VectorXd::Zero(1), 0.25);
  CHECK(lower_value(interval) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(upper_value(interval) == doctest::Approx(1.75).epsilon(1e-14));
}

TEST_CASE("weighted split reduces to split under uniform weights") {
  Rng rng(2311);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 6 + static_cast<int>(rng.below(20));
    Dataset data = random_ridge_instance(&rng, n, 2);
    Eigen::VectorXd x(2);
    x << rng.normal(), rng.normal();
    double alpha = 0.1 + 0.3 * rng.uniform01();

    covband::SplitFit fit = covband::fit_split(ridge_spec(0.6), data, 4);
    PredictionInterval plain = covband::split_from_fit(fit, x, alpha);
    PredictionInterval weighted = covband::weighted_split_from_fit(
        fit, Eigen::VectorXd::Ones(n), 1.0, x, alpha);
    CHECK(plain.lower() == weighted.lower());
    CHECK(plain.upper() == weighted.upper());
  }
}

TEST_CASE("split gives the spare row to calibration") {
  Rng rng(41);
  Dataset data = random_ridge_instance(&rng, 5, 1);
  covband::SplitFit fit = covband::fit_split(ridge_spec(1.0), data, 7);
  CHECK(fit.holdout_rows.size() == 3);
  CHECK(fit.holdout_residuals.size() == 3);
}

TEST_CASE("naive interval on the constant-mean instance") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  PredictionInterval interval = covband::naive_interval(
      constant_spec(), constant_mean_instance(), x, 0.5, 1);
  CHECK(lower_value(interval) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(upper_value(interval) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("an interpolating predictor collapses the naive interval") {
  Dataset data;
  data.X.resize(2, 2);
  data.X << 1.0, 0.0, 0.0, 1.0;
  data.y.resize(2);
  data.y << 1.0, 2.0;
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  PredictionInterval interval =
      covband::naive_interval(ridge_spec(1e-12), data, x, 0.4, 1);
  CHECK(upper_value(interval) - lower_value(interval) <= 1e-6);
}

TEST_CASE("interval constructors validate their inputs") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  LooArtifacts loo =
      covband::compute_loo(constant_spec(), constant_mean_instance(), x, 1);
  CHECK_THROWS_AS(covband::jackknife_plus_interval(loo, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(covband::jackknife_plus_interval(loo, 1.0),
                  std::invalid_argument);
  NormalizedWeights wrong = NormalizedWeights::uniform(5);
  CHECK_THROWS_AS(covband::jaw_interval(loo, wrong, 0.1),
                  std::invalid_argument);

  Dataset single;
  single.X = Eigen::MatrixXd::Ones(1, 1);
  single.y = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS(covband::fit_loo_models(constant_spec(), single, 0),
                  std::invalid_argument);
}
