#pragma once

#include <vector>

#include "covband/extreal.hpp"

namespace covband {

struct Atom {
  double value;
  double mass;
};

// Finite discrete distribution with optional point masses at -inf / +inf.
// Construction canonicalizes: atoms sorted ascending by value, exactly equal
// values merged with masses summed, zero-mass atoms dropped. Total mass
// (finite atoms plus both tails) must equal 1 within 1e-9; out-of-tolerance
// input is rejected rather than renormalized so weight bugs upstream surface
// here instead of silently skewing quantiles. Immutable after construction.
class WeightedAtoms {
 public:
  WeightedAtoms(std::vector<Atom> atoms, double neg_inf_mass,
                double pos_inf_mass);

  const std::vector<Atom>& atoms() const { return atoms_; }
  double neg_inf_mass() const { return neg_inf_mass_; }
  double pos_inf_mass() const { return pos_inf_mass_; }

  static constexpr double kMassTolerance = 1e-9;

 private:
  std::vector<Atom> atoms_;
  double neg_inf_mass_;
  double pos_inf_mass_;
};

// Left-continuous generalized inverse inf{ v : F(v) >= beta } where F is the
// CDF of the finite atoms with the +inf tail mass appended; the -inf mass is
// ignored. Returns +inf when the finite atoms never reach level beta.
// beta must lie in (0, 1].
ExtReal quantile_plus(const WeightedAtoms& d, double beta);

// Same generalized inverse, but F places the -inf tail mass below every
// finite value and ignores the +inf mass. Returns -inf when the -inf mass
// alone reaches beta. beta must lie in (0, 1].
ExtReal quantile_minus(const WeightedAtoms& d, double beta);

// neg_inf_mass plus the mass of finite atoms with value strictly below t.
// t = -inf gives 0 (the -inf atom itself is not below -inf); t = +inf counts
// every finite atom.
double mass_strictly_below(const WeightedAtoms& d, const ExtReal& t);

// pos_inf_mass plus the mass of finite atoms with value strictly above t.
double mass_strictly_above(const WeightedAtoms& d, const ExtReal& t);

// Interval on the extended real line. lower may be -inf but never +inf;
// upper may be +inf but never -inf; lower <= upper. Violations throw.
class PredictionInterval {
 public:
  PredictionInterval(ExtReal lower, ExtReal upper);

  const ExtReal& lower() const { return lower_; }
  const ExtReal& upper() const { return upper_; }

  bool contains(double y) const {
    ExtReal v = ExtReal::finite(y);
    return lower_ <= v && v <= upper_;
  }

  // Length of the interval; +inf when either endpoint is infinite.
  double width() const;

 private:
  ExtReal lower_;
  ExtReal upper_;
};

}  // namespace covband
