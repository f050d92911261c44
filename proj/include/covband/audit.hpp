#pragma once

#include <Eigen/Dense>
#include <optional>

#include "covband/empdist.hpp"
#include "covband/extreal.hpp"
#include "covband/infer.hpp"
#include "covband/shift.hpp"

namespace covband {

enum class ScoreKind { SignedResidual, AbsoluteResidual };

// The no-error event in score space: a prediction is acceptable when its
// score lands in [tau_minus, tau_plus]. Signed scores are y - mu(x);
// absolute scores are |y - mu(x)| with tau_minus pinned at 0.
struct ErrorCriteria {
  ScoreKind kind;
  ExtReal tau_minus;
  ExtReal tau_plus;

  static ErrorCriteria absolute(double tau);
  static ErrorCriteria signed_band(ExtReal lo, ExtReal hi);
};

// Coverage constants of the generating method: the interval at level a
// covers with probability at least 1 - c1*a - c2.
struct GuaranteeSpec {
  double c1 = 2.0;
  double c2 = 0.0;

  static GuaranteeSpec loo_family() { return {2.0, 0.0}; }  // jackknife+ form
  static GuaranteeSpec split_family() { return {1.0, 0.0}; }
};

// Smallest miscoverage level whose interval fits inside the no-error band.
// The minimum may be an unattained infimum (quantiles are piecewise constant
// in the level), hence the flag; the bound still holds in the limit.
struct AlphaEResult {
  bool exists = false;
  double value = 0.0;
  bool attained = false;
};

struct ErrorAssessment {
  std::optional<double> alpha_e;
  bool attained = false;
  double p_no_error = 0.0;
  double guaranteed_lower_bound = 0.0;
};

// lower_atoms carry the lower interval endpoints' distribution (tail mass at
// -inf), upper_atoms the upper endpoints' (tail mass at +inf), both in score
// space. Feasibility of level a: a > mass strictly below tau_minus on the
// lower side and a >= mass strictly above tau_plus on the upper side;
// infinite taus reduce those masses to the tail masses themselves. Returns
// the infimum of the feasible set, or exists=false when no level <= 1 works.
AlphaEResult alpha_e(const WeightedAtoms& lower_atoms,
                     const WeightedAtoms& upper_atoms,
                     const ErrorCriteria& crit);

// p_no_error = 1 - alpha_e (0 when absent); guaranteed_lower_bound =
// max(0, 1 - c1*alpha_e - c2) when that is positive, else 0.
ErrorAssessment assess(const AlphaEResult& result, const GuaranteeSpec& spec);

// Method-specific atom construction feeding the shared kernel. The
// leave-one-out family scores by the signed residual y - mu(x); an absolute
// criteria band [0, tau] becomes the signed band [-tau, +tau].
ErrorAssessment jaw_error_assessment(const LooArtifacts& loo,
                                     const NormalizedWeights& weights,
                                     const ErrorCriteria& crit);

ErrorAssessment jackknife_plus_error_assessment(const LooArtifacts& loo,
                                                const ErrorCriteria& crit);

// CV+ scores against the full-data model, so it takes one extra prediction.
ErrorAssessment cv_plus_error_assessment(const CvModels& models,
                                         double full_pred_at_test,
                                         const Eigen::VectorXd& x,
                                         const ErrorCriteria& crit);

// Split scoring is one-sided (scores are absolute residuals, never below 0),
// so the criteria must be the absolute kind. Uniform weights give the plain
// split assessment; likelihood-ratio weights give the weighted one. The
// weight vector must align with fit.holdout_rows.
ErrorAssessment split_error_assessment(const SplitFit& fit,
                                       const NormalizedWeights& holdout_weights,
                                       const ErrorCriteria& crit);

}  // namespace covband
