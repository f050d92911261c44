#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "covband/empdist.hpp"
#include "covband/extreal.hpp"
#include "covband/rng.hpp"
#include "doctest.h"

using covband::Atom;
using covband::ExtReal;
using covband::PredictionInterval;
using covband::Rng;
using covband::WeightedAtoms;

namespace {

// Brute-force quantile oracle, written against the definition rather than the
// library code path: merge equal values through an ordered map, then walk the
// cumulative mass. include_neg selects whether the -inf tail sits below every
// finite value (the quantile_minus convention) or is ignored (quantile_plus).
ExtReal oracle_quantile(const std::vector<Atom>& atoms, double neg_mass,
                        double beta, bool include_neg) {
  std::map<double, double> merged;
  for (const Atom& a : atoms) merged[a.value] += a.mass;
  if (include_neg && neg_mass >= beta) return ExtReal::neg_inf();
  double acc = include_neg ? neg_mass : 0.0;
  bool any = false;
  double last = 0.0;
  for (const auto& [v, m] : merged) {
    if (m == 0.0) continue;
    acc += m;
    any = true;
    last = v;
    if (acc >= beta) return ExtReal::finite(v);
  }
  if (any && beta - acc <= 1e-9) return ExtReal::finite(last);
  return ExtReal::pos_inf();
}

struct RandomDist {
  std::vector<Atom> atoms;
  double neg_mass;
  double pos_mass;
};

RandomDist random_dist(Rng& rng, int max_atoms) {
  int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_atoms)));
  std::vector<double> raw(static_cast<std::size_t>(n) + 2);
  for (double& r : raw) r = -std::log(1.0 - rng.uniform01());
  // Half the time pin a tail to zero so the zero-tail paths get exercised.
  if (rng.uniform01() < 0.5) raw[static_cast<std::size_t>(n)] = 0.0;
  if (rng.uniform01() < 0.5) raw[static_cast<std::size_t>(n) + 1] = 0.0;
  double total = 0.0;
  for (double r : raw) total += r;
  RandomDist d;
  d.atoms.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = rng.uniform(-10.0, 10.0);
    // Occasional exact ties stress the merge step.
    if (!d.atoms.empty() && rng.uniform01() < 0.15) v = d.atoms.back().value;
    d.atoms.push_back({v, raw[static_cast<std::size_t>(i)] / total});
  }
  d.neg_mass = raw[static_cast<std::size_t>(n)] / total;
  d.pos_mass = raw[static_cast<std::size_t>(n) + 1] / total;
  return d;
}

}  // namespace

TEST_CASE("extended reals order and guard their payload") {
  ExtReal lo = ExtReal::neg_inf();
  ExtReal hi = ExtReal::pos_inf();
  ExtReal mid = ExtReal::finite(0.0);
  CHECK(lo < mid);
  CHECK(mid < hi);
  CHECK(lo < hi);
  CHECK(!(hi < hi));
  CHECK(!(lo < lo));
  CHECK(lo <= lo);
  CHECK(hi == ExtReal::pos_inf());
  CHECK(mid.value() == 0.0);
  CHECK_THROWS(hi.value());
  CHECK_THROWS(ExtReal::finite(std::numeric_limits<double>::infinity()));
  CHECK_THROWS(ExtReal::finite(std::nan("")));
  CHECK(lo.as_double() == -std::numeric_limits<double>::infinity());
}

TEST_CASE("quantile_plus matches hand-computed cases") {
  WeightedAtoms d({{1.0, 0.2}, {2.0, 0.3}, {3.0, 0.3}}, 0.0, 0.2);
  CHECK(quantile_plus(d, 0.5) == ExtReal::finite(2.0));
  CHECK(quantile_plus(d, 0.9) == ExtReal::pos_inf());
  WeightedAtoms single({{4.5, 1.0}}, 0.0, 0.0);
  CHECK(quantile_plus(single, 0.001) == ExtReal::finite(4.5));
  CHECK(quantile_plus(single, 0.5) == ExtReal::finite(4.5));
  CHECK(quantile_plus(single, 1.0) == ExtReal::finite(4.5));
}

TEST_CASE("quantile_minus matches hand-computed cases") {
  WeightedAtoms d({{-3.0, 0.25}, {0.0, 0.25}, {3.0, 0.25}}, 0.25, 0.0);
  CHECK(quantile_minus(d, 0.5) == ExtReal::finite(-3.0));
  CHECK(quantile_minus(d, 0.25) == ExtReal::neg_inf());
  std::vector<Atom> uniform;
  for (int i = 1; i <= 10; ++i) uniform.push_back({i / 10.0, 0.1});
  WeightedAtoms u(uniform, 0.0, 0.0);
  CHECK(quantile_minus(u, 1.0) == ExtReal::finite(1.0));
}

TEST_CASE("strict mass counts match hand-computed cases") {
  WeightedAtoms below({{-2.0, 0.25}, {-1.0, 0.25}, {0.0, 0.25}}, 0.25, 0.0);
  CHECK(mass_strictly_below(below, ExtReal::finite(-1.5)) == doctest::Approx(0.5));
  CHECK(mass_strictly_below(below, ExtReal::neg_inf()) == 0.0);
  CHECK(mass_strictly_below(below, ExtReal::pos_inf()) == doctest::Approx(1.0));
  WeightedAtoms one({{1.0, 1.0}}, 0.0, 0.0);
  CHECK(mass_strictly_below(one, ExtReal::finite(1.0)) == 0.0);

  WeightedAtoms above({{0.0, 0.25}, {1.0, 0.25}, {2.0, 0.25}}, 0.0, 0.25);
  CHECK(mass_strictly_above(above, ExtReal::finite(1.5)) == doctest::Approx(0.5));
  CHECK(mass_strictly_above(above, ExtReal::pos_inf()) == 0.0);
  CHECK(mass_strictly_above(above, ExtReal::neg_inf()) == doctest::Approx(1.0));
  CHECK(mass_strictly_above(one, ExtReal::finite(0.0)) == 1.0);
}

TEST_CASE("construction rejects invalid mass configurations") {
  CHECK_THROWS(WeightedAtoms({{0.0, 0.5}, {1.0, 0.4}}, 0.0, 0.0));
  CHECK_THROWS(WeightedAtoms({{0.0, 1.1}}, 0.0, 0.0));
  CHECK_THROWS(WeightedAtoms({{0.0, -0.1}, {1.0, 1.1}}, 0.0, 0.0));
  CHECK_THROWS(WeightedAtoms({{0.0, 1.0}}, -0.25, 0.25));
  CHECK_THROWS(
      WeightedAtoms({{std::numeric_limits<double>::infinity(), 1.0}}, 0.0, 0.0));
  CHECK_NOTHROW(WeightedAtoms({{0.0, 1.0 + 5e-10}}, 0.0, 0.0));
  WeightedAtoms ok({{0.0, 0.5}, {1.0, 0.5}}, 0.0, 0.0);
  CHECK_THROWS(quantile_plus(ok, 0.0));
  CHECK_THROWS(quantile_plus(ok, 1.0 + 1e-12));
  CHECK_THROWS(quantile_minus(ok, -0.3));
}

TEST_CASE("equal values merge and zero masses drop during canonicalization") {
  WeightedAtoms d({{1.0, 0.5}, {2.0, 0.0}, {1.0, 0.5}}, 0.0, 0.0);
  REQUIRE(d.atoms().size() == 1);
  CHECK(d.atoms()[0].value == 1.0);
  CHECK(d.atoms()[0].mass == 1.0);
  CHECK(quantile_plus(d, 0.7) == ExtReal::finite(1.0));
}

TEST_CASE("quantiles agree exactly with the brute-force oracle") {
  Rng rng(20240817);
  for (int trial = 0; trial < 1000; ++trial) {
    RandomDist rd = random_dist(rng, 50);
    WeightedAtoms d(rd.atoms, rd.neg_mass, rd.pos_mass);
    for (int b = 0; b < 20; ++b) {
      double beta = 1.0 - rng.uniform01();
      ExtReal plus = quantile_plus(d, beta);
      ExtReal minus = quantile_minus(d, beta);
      CHECK(plus == oracle_quantile(rd.atoms, rd.neg_mass, beta, false));
      CHECK(minus == oracle_quantile(rd.atoms, rd.neg_mass, beta, true));
    }
  }
}

TEST_CASE("quantiles are monotone in the level") {
  Rng rng(7011);
  for (int trial = 0; trial < 200; ++trial) {
    RandomDist rd = random_dist(rng, 30);
    WeightedAtoms d(rd.atoms, rd.neg_mass, rd.pos_mass);
    double b1 = 1.0 - rng.uniform01();
    double b2 = 1.0 - rng.uniform01();
    if (b2 < b1) std::swap(b1, b2);
    CHECK(quantile_plus(d, b1) <= quantile_plus(d, b2));
    CHECK(quantile_minus(d, b1) <= quantile_minus(d, b2));
  }
}

TEST_CASE("uniform masses reduce to the order-statistic convention") {
  // n + 1 = 16 keeps every mass exactly representable, so the only rounding
  // in play is the one the reduction itself is meant to pin down.
  const int n = 15;
  Rng rng(99);
  std::vector<double> values;
  for (int i = 0; i < n; ++i) values.push_back(rng.uniform(-5.0, 5.0));
  std::vector<Atom> atoms;
  for (double v : values) atoms.push_back({v, 1.0 / 16.0});
  WeightedAtoms d(atoms, 0.0, 1.0 / 16.0);
  std::sort(values.begin(), values.end());
  for (int trial = 0; trial < 200; ++trial) {
    double alpha = rng.uniform(0.02, 0.98);
    int k = static_cast<int>(std::ceil((1.0 - alpha) * (n + 1)));
    ExtReal q = quantile_plus(d, 1.0 - alpha);
    if (k <= n) {
      CHECK(q == ExtReal::finite(values[static_cast<std::size_t>(k - 1)]));
    } else {
      CHECK(q == ExtReal::pos_inf());
    }
  }
}

TEST_CASE("quantiles are invariant under atom permutations") {
  Rng rng(5150);
  for (int trial = 0; trial < 100; ++trial) {
    RandomDist rd = random_dist(rng, 25);
    WeightedAtoms d1(rd.atoms, rd.neg_mass, rd.pos_mass);
    std::vector<Atom> shuffled = rd.atoms;
    rng.shuffle(shuffled);
    WeightedAtoms d2(shuffled, rd.neg_mass, rd.pos_mass);
    for (int b = 0; b < 5; ++b) {
      double beta = 1.0 - rng.uniform01();
      CHECK(quantile_plus(d1, beta) == quantile_plus(d2, beta));
      CHECK(quantile_minus(d1, beta) == quantile_minus(d2, beta));
    }
  }
}

TEST_CASE("prediction intervals enforce endpoint ordering") {
  PredictionInterval iv(ExtReal::finite(-1.0), ExtReal::finite(2.0));
  CHECK(iv.width() == doctest::Approx(3.0));
  CHECK(iv.contains(0.0));
  CHECK(iv.contains(-1.0));
  CHECK(iv.contains(2.0));
  CHECK(!iv.contains(2.5));
  PredictionInterval unbounded(ExtReal::neg_inf(), ExtReal::pos_inf());
  CHECK(unbounded.contains(1e12));
  CHECK(std::isinf(unbounded.width()));
  CHECK_THROWS(PredictionInterval(ExtReal::finite(1.0), ExtReal::finite(0.5)));
  CHECK_THROWS(PredictionInterval(ExtReal::pos_inf(), ExtReal::pos_inf()));
  CHECK_THROWS(PredictionInterval(ExtReal::neg_inf(), ExtReal::neg_inf()));
}
