#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace covband {

// Truncated Taylor polynomial (a k-jet): c[j] is the coefficient of t^j.
// Arithmetic implements truncated polynomial algebra, which is exactly
// forward-mode differentiation to order ORD along one scalar direction t.
// All coefficients propagate in one pass, so no graph is retained; memory per
// scalar is ORD+1 doubles regardless of expression depth.
template <int ORD>
struct Jet {
  static_assert(ORD >= 1, "Jet order must be at least 1");
  std::array<double, ORD + 1> c{};

  Jet() = default;
  explicit Jet(double v) { c[0] = v; }

  static Jet constant(double v) { return Jet(v); }

  // Value v moving with velocity dv in t: v + dv*t.
  static Jet seed(double v, double dv) {
    Jet j(v);
    j.c[1] = dv;
    return j;
  }

  double value() const { return c[0]; }
  double coeff(int k) const { return c[static_cast<std::size_t>(k)]; }

  Jet& operator+=(const Jet& o) {
    for (int k = 0; k <= ORD; ++k) c[k] += o.c[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int k = 0; k <= ORD; ++k) c[k] -= o.c[k];
    return *this;
  }
  Jet& operator+=(double s) {
    c[0] += s;
    return *this;
  }
  Jet& operator-=(double s) {
    c[0] -= s;
    return *this;
  }
  Jet& operator*=(double s) {
    for (int k = 0; k <= ORD; ++k) c[k] *= s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a -= s; }
  friend Jet operator-(double s, const Jet& a) {
    Jet r;
    r.c[0] = s - a.c[0];
    for (int k = 1; k <= ORD; ++k) r.c[k] = -a.c[k];
    return r;
  }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator-(const Jet& a) {
    Jet r;
    for (int k = 0; k <= ORD; ++k) r.c[k] = -a.c[k];
    return r;
  }

  // Truncated Cauchy product.
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= ORD; ++k) {
      double s = 0.0;
      for (int j = 0; j <= k; ++j) s += a.c[j] * b.c[k - j];
      r.c[k] = s;
    }
    return r;
  }
};

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Logistic function of a jet. Uses the ODE s' = u' * s * (1 - s): matching
// coefficients of t^(k-1) gives k*s_k = sum_{j=1..k} j*u_j*v_{k-j} with
// v = s*(1-s), and v_m needs only s_0..s_m, so the orders resolve in
// sequence.
template <int ORD>
Jet<ORD> sigmoid(const Jet<ORD>& u) {
  Jet<ORD> s;
  std::array<double, ORD + 1> v{};
  s.c[0] = sigmoid(u.c[0]);
  for (int k = 1; k <= ORD; ++k) {
    int m = k - 1;
    double sq = 0.0;
    for (int r = 0; r <= m; ++r) sq += s.c[r] * s.c[m - r];
    v[m] = s.c[m] - sq;
    double acc = 0.0;
    for (int j = 1; j <= k; ++j) acc += j * u.c[j] * v[k - j];
    s.c[k] = acc / k;
  }
  return s;
}

}  // namespace covband
