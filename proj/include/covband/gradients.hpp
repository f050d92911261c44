#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "covband/dataset.hpp"
#include "covband/jets.hpp"

namespace covband {

// Parameter layout shared by every differentiable code path.
//   ridge: theta = [w (d)]                       prediction w.x
//   mlp:   theta = [W1 (h*d, row-major), b1 (h), w2 (h), b2 (1)]
//          prediction w2 . sigmoid(W1 x + b1) + b2
// The per-point loss is 0.5*(y - f(x; theta))^2. These templates run on
// plain doubles for values/gradients and on jets for directional
// derivatives of any order; both uses share one definition so there is no
// analytic/AD mismatch to test away.

struct MlpShape {
  int d = 0;
  int h = 0;
  int params() const { return h * d + 2 * h + 1; }
  int w1(int j, int k) const { return j * d + k; }
  int b1(int j) const { return h * d + j; }
  int w2(int j) const { return h * d + h + j; }
  int b2() const { return h * d + 2 * h; }
};

template <typename S>
S ridge_point_value(const S* theta, int d, const double* x) {
  S out{};
  for (int k = 0; k < d; ++k) out += theta[k] * x[k];
  return out;
}

// grad contribution of 0.5*(y - w.x)^2: x*(w.x - y). Accumulates scaled by
// weight into grad.
template <typename S, typename W>
void ridge_point_gradient_acc(const S* theta, int d, const double* x, double y,
                              const W& weight, S* grad) {
  S diff = ridge_point_value(theta, d, x);
  diff -= y;
  diff = diff * weight;
  for (int k = 0; k < d; ++k) grad[k] += diff * x[k];
}

template <typename S>
S mlp_point_value(const S* theta, const MlpShape& shape, const double* x,
                  std::vector<S>& act) {
  act.resize(static_cast<std::size_t>(shape.h));
  S out = theta[shape.b2()];
  for (int j = 0; j < shape.h; ++j) {
    S z = theta[shape.b1(j)];
    const S* row = theta + shape.w1(j, 0);
    for (int k = 0; k < shape.d; ++k) z += row[k] * x[k];
    act[static_cast<std::size_t>(j)] = sigmoid(z);
    out += theta[shape.w2(j)] * act[static_cast<std::size_t>(j)];
  }
  return out;
}

// Backpropagation through the one-hidden-layer network in the scalar type S,
// accumulating weight * grad of 0.5*(y - f)^2 into grad.
template <typename S, typename W>
void mlp_point_gradient_acc(const S* theta, const MlpShape& shape,
                            const double* x, double y, const W& weight,
                            S* grad, std::vector<S>& act) {
  S out = mlp_point_value(theta, shape, x, act);
  S e = out - y;
  e = e * weight;
  grad[shape.b2()] += e;
  for (int j = 0; j < shape.h; ++j) {
    const S& a = act[static_cast<std::size_t>(j)];
    grad[shape.w2(j)] += e * a;
    S dz = e * theta[shape.w2(j)] * a * (1.0 - a);
    grad[shape.b1(j)] += dz;
    S* grow = grad + shape.w1(j, 0);
    for (int k = 0; k < shape.d; ++k) grow[k] += dz * x[k];
  }
}

enum class GradFamily { Ridge, Mlp };

// G(theta, omega) = lambda*theta + (1/n) * sum_i omega_i * g_i(theta),
// written into out (length p). OmegaFn maps row index -> S (or double);
// rows enter the sum in storage order, pinning the floating-point result.
template <typename S, typename OmegaFn>
void estimating_equation_core(GradFamily family, const S* theta,
                              const MlpShape& shape, const Dataset& data,
                              double lambda, const OmegaFn& omega, S* out) {
  const int n = data.n();
  const int d = data.dim();
  const int p = family == GradFamily::Ridge ? d : shape.params();
  for (int k = 0; k < p; ++k) out[k] = S{};
  std::vector<S> act;
  std::vector<double> xrow(static_cast<std::size_t>(d));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) xrow[static_cast<std::size_t>(k)] = data.X(i, k);
    if (family == GradFamily::Ridge) {
      ridge_point_gradient_acc(theta, d, xrow.data(), data.y(i), omega(i), out);
    } else {
      mlp_point_gradient_acc(theta, shape, xrow.data(), data.y(i), omega(i),
                             out, act);
    }
  }
  double inv_n = 1.0 / n;
  for (int k = 0; k < p; ++k) {
    out[k] *= inv_n;
    out[k] += lambda * theta[k];
  }
}

}  // namespace covband
