#include "covband/empdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace covband {

WeightedAtoms::WeightedAtoms(std::vector<Atom> atoms, double neg_inf_mass,
                             double pos_inf_mass)
    : atoms_(std::move(atoms)),
      neg_inf_mass_(neg_inf_mass),
      pos_inf_mass_(pos_inf_mass) {
  if (!(neg_inf_mass_ >= 0.0) || !(pos_inf_mass_ >= 0.0)) {
    throw std::invalid_argument("WeightedAtoms: tail masses must be >= 0");
  }
  double total = neg_inf_mass_ + pos_inf_mass_;
  for (const Atom& a : atoms_) {
    if (!std::isfinite(a.value)) {
      throw std::invalid_argument(
          "WeightedAtoms: atom values must be finite (tail mass carries the "
          "infinities)");
    }
    if (!(a.mass >= 0.0)) {
      throw std::invalid_argument("WeightedAtoms: atom masses must be >= 0");
    }
    total += a.mass;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw std::invalid_argument("WeightedAtoms: total mass must be 1 within 1e-9");
  }

  // Canonical form: ascending by value, equal values merged left to right,
  // zero-mass atoms dropped. A stable sort plus in-order merging pins the
  // summation order, so quantiles are bitwise identical across any input
  // permutation.
  std::stable_sort(atoms_.begin(), atoms_.end(),
                   [](const Atom& a, const Atom& b) { return a.value < b.value; });
  std::vector<Atom> merged;
  merged.reserve(atoms_.size());
  for (const Atom& a : atoms_) {
    if (!merged.empty() && merged.back().value == a.value) {
      merged.back().mass += a.mass;
    } else {
      merged.push_back(a);
    }
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const Atom& a) { return a.mass == 0.0; }),
               merged.end());
  atoms_ = std::move(merged);
}

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !(beta <= 1.0)) {
    throw std::invalid_argument("quantile level must lie in (0, 1]");
  }
}

// Shared scan: accumulate atom masses in canonical order on top of a starting
// mass and return the first atom at which the running total reaches beta.
// When the scan falls short by no more than the mass tolerance the shortfall
// is floating-point noise from accumulation, so the largest atom is the
// answer; a genuine shortfall means only ignored or +inf tail mass could
// reach beta, and the infimum over the empty set is +inf.
ExtReal scan_quantile(const WeightedAtoms& d, double beta, double start_mass) {
  double acc = start_mass;
  for (const Atom& a : d.atoms()) {
    acc += a.mass;
    if (acc >= beta) return ExtReal::finite(a.value);
  }
  if (!d.atoms().empty() && beta - acc <= WeightedAtoms::kMassTolerance) {
    return ExtReal::finite(d.atoms().back().value);
  }
  return ExtReal::pos_inf();
}

}  // namespace

ExtReal quantile_plus(const WeightedAtoms& d, double beta) {
  check_beta(beta);
  return scan_quantile(d, beta, 0.0);
}

ExtReal quantile_minus(const WeightedAtoms& d, double beta) {
  check_beta(beta);
  if (d.neg_inf_mass() >= beta) return ExtReal::neg_inf();
  return scan_quantile(d, beta, d.neg_inf_mass());
}

double mass_strictly_below(const WeightedAtoms& d, const ExtReal& t) {
  if (t.is_neg_inf()) return 0.0;
  double acc = d.neg_inf_mass();
  for (const Atom& a : d.atoms()) {
    if (t.is_finite() && !(a.value < t.value())) break;
    acc += a.mass;
  }
  return acc;
}

double mass_strictly_above(const WeightedAtoms& d, const ExtReal& t) {
  if (t.is_pos_inf()) return 0.0;
  double acc = d.pos_inf_mass();
  for (const Atom& a : d.atoms()) {
    if (t.is_finite() && !(a.value > t.value())) continue;
    acc += a.mass;
  }
  return acc;
}

PredictionInterval::PredictionInterval(ExtReal lower, ExtReal upper)
    : lower_(lower), upper_(upper) {
  if (lower_.is_pos_inf()) {
    throw std::invalid_argument("PredictionInterval: lower endpoint is +inf");
  }
  if (upper_.is_neg_inf()) {
    throw std::invalid_argument("PredictionInterval: upper endpoint is -inf");
  }
  if (upper_ < lower_) {
    throw std::invalid_argument("PredictionInterval: endpoints cross");
  }
}

double PredictionInterval::width() const {
  if (lower_.is_infinite() || upper_.is_infinite()) {
    return std::numeric_limits<double>::infinity();
  }
  return upper_.value() - lower_.value();
}

}  // namespace covband
