#include "covband/audit.hpp"

#include <stdexcept>
#include <vector>

namespace covband {

ErrorCriteria ErrorCriteria::absolute(double tau) {
  if (!(tau >= 0.0)) {
    throw std::invalid_argument("absolute criteria need tau >= 0");
  }
  return {ScoreKind::AbsoluteResidual, ExtReal::finite(0.0),
          ExtReal::finite(tau)};
}

ErrorCriteria ErrorCriteria::signed_band(ExtReal lo, ExtReal hi) {
  if (hi < lo) {
    throw std::invalid_argument("criteria band endpoints cross");
  }
  return {ScoreKind::SignedResidual, lo, hi};
}

AlphaEResult alpha_e(const WeightedAtoms& lower_atoms,
                     const WeightedAtoms& upper_atoms,
                     const ErrorCriteria& crit) {
  if (lower_atoms.pos_inf_mass() > 0.0) {
    throw std::invalid_argument(
        "alpha_e: lower endpoint distribution carries +inf mass");
  }
  if (upper_atoms.neg_inf_mass() > 0.0) {
    throw std::invalid_argument(
        "alpha_e: upper endpoint distribution carries -inf mass");
  }
  // The lower endpoint at level a sits at or above tau_minus exactly when a
  // exceeds the mass strictly below tau_minus (strictly: at a equal to that
  // mass the quantile still falls below). The upper endpoint at level a sits
  // at or below tau_plus exactly when a reaches the mass strictly above
  // tau_plus. A tau at -inf (resp. +inf) is violated by the tail atom alone,
  // leaving exactly the tail mass as the binding level.
  double t_lower = crit.tau_minus.is_neg_inf()
                       ? lower_atoms.neg_inf_mass()
                       : mass_strictly_below(lower_atoms, crit.tau_minus);
  double t_upper = crit.tau_plus.is_pos_inf()
                       ? upper_atoms.pos_inf_mass()
                       : mass_strictly_above(upper_atoms, crit.tau_plus);
  AlphaEResult out;
  // Mass sums carry rounding at the 1e-16 scale, so a feasibility window
  // thinner than 1e-12 is indistinguishable from empty; treating it as
  // absent errs toward claiming less, never more.
  if (t_lower >= 1.0 - 1e-12) {
    return out;
  }
  out.exists = true;
  out.value = std::max(t_lower, t_upper);
  out.attained = t_upper >= t_lower;
  return out;
}

ErrorAssessment assess(const AlphaEResult& result, const GuaranteeSpec& spec) {
  ErrorAssessment out;
  if (!result.exists) {
    return out;
  }
  out.alpha_e = result.value;
  out.attained = result.attained;
  out.p_no_error = 1.0 - result.value;
  if (result.value < (1.0 - spec.c2) / spec.c1) {
    double bound = 1.0 - spec.c1 * result.value - spec.c2;
    out.guaranteed_lower_bound = bound > 0.0 ? bound : 0.0;
  }
  return out;
}

namespace {

// Score-space band for the signed-residual interval family.
ErrorCriteria signed_form(const ErrorCriteria& crit) {
  if (crit.kind == ScoreKind::SignedResidual) return crit;
  double tau = crit.tau_plus.is_finite() ? crit.tau_plus.value() : 0.0;
  if (crit.tau_plus.is_pos_inf()) {
    return ErrorCriteria::signed_band(ExtReal::neg_inf(), ExtReal::pos_inf());
  }
  return ErrorCriteria::signed_band(ExtReal::finite(-tau),
                                    ExtReal::finite(tau));
}

ErrorAssessment loo_family_assessment(const LooArtifacts& loo,
                                      const NormalizedWeights& weights,
                                      const ErrorCriteria& crit,
                                      const GuaranteeSpec& spec) {
  if (weights.n() != loo.n()) {
    throw std::invalid_argument("error assessment: weight length mismatch");
  }
  const int n = loo.n();
  std::vector<Atom> lower;
  std::vector<Atom> upper;
  lower.reserve(static_cast<std::size_t>(n));
  upper.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double shift = loo.loo_pred_at_test(i) - loo.full_pred_at_test;
    lower.push_back({shift - loo.loo_residuals(i), weights.train(i)});
    upper.push_back({shift + loo.loo_residuals(i), weights.train(i)});
  }
  WeightedAtoms lower_dist(lower, weights.test, 0.0);
  WeightedAtoms upper_dist(upper, 0.0, weights.test);
  return assess(alpha_e(lower_dist, upper_dist, signed_form(crit)), spec);
}

}  // namespace

ErrorAssessment jaw_error_assessment(const LooArtifacts& loo,
                                     const NormalizedWeights& weights,
                                     const ErrorCriteria& crit) {
  return loo_family_assessment(loo, weights, crit, GuaranteeSpec::loo_family());
}

ErrorAssessment jackknife_plus_error_assessment(const LooArtifacts& loo,
                                                const ErrorCriteria& crit) {
  return loo_family_assessment(loo, NormalizedWeights::uniform(loo.n()), crit,
                               GuaranteeSpec::loo_family());
}

ErrorAssessment cv_plus_error_assessment(const CvModels& models,
                                         double full_pred_at_test,
                                         const Eigen::VectorXd& x,
                                         const ErrorCriteria& crit) {
  const int n = static_cast<int>(models.residuals.size());
  LooArtifacts artifacts;
  artifacts.loo_residuals = models.residuals;
  artifacts.loo_pred_at_train.setZero(n);
  artifacts.loo_pred_at_test.resize(n);
  std::vector<double> fold_pred(models.fold_models.size());
  for (std::size_t f = 0; f < models.fold_models.size(); ++f) {
    fold_pred[f] = predict(models.fold_models[f], x);
  }
  for (int i = 0; i < n; ++i) {
    artifacts.loo_pred_at_test(i) = fold_pred[static_cast<std::size_t>(
        models.fold_of[static_cast<std::size_t>(i)])];
  }
  artifacts.full_pred_at_test = full_pred_at_test;
  return loo_family_assessment(artifacts, NormalizedWeights::uniform(n), crit,
                               GuaranteeSpec::loo_family());
}

ErrorAssessment split_error_assessment(const SplitFit& fit,
                                       const NormalizedWeights& holdout_weights,
                                       const ErrorCriteria& crit) {
  if (crit.kind != ScoreKind::AbsoluteResidual) {
    throw std::invalid_argument(
        "split assessment scores absolute residuals; criteria must be the "
        "absolute kind");
  }
  const int m = static_cast<int>(fit.holdout_residuals.size());
  if (holdout_weights.n() != m) {
    throw std::invalid_argument("error assessment: weight length mismatch");
  }
  std::vector<Atom> lower;
  std::vector<Atom> upper;
  lower.reserve(static_cast<std::size_t>(m));
  upper.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    lower.push_back({0.0, holdout_weights.train(j)});
    upper.push_back({fit.holdout_residuals(j), holdout_weights.train(j)});
  }
  WeightedAtoms lower_dist(lower, holdout_weights.test, 0.0);
  WeightedAtoms upper_dist(upper, 0.0, holdout_weights.test);
  return assess(alpha_e(lower_dist, upper_dist, crit),
                GuaranteeSpec::split_family());
}

}  // namespace covband
