#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "s2t/error.hpp"
#include "s2t/numerics/autodiff.hpp"

namespace s2t {

using ScalarFn = std::function<double(const Array&)>;
using GradientFn = std::function<Array(const Array&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|, |central difference|).
inline double grad_check(const ScalarFn& f, const GradientFn& analytic, const Array& point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  const Array g = analytic(point);
  if (!g.same_shape(point)) throw std::invalid_argument("grad_check: gradient shape differs from point");
  Array probe = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw DivergenceError("grad_check: function returned non-finite value");
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(g[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(g[i] - numeric) / denom);
  }
  return worst;
}

/// grad_check for a graph-building function; the analytic side is backward().
inline double grad_check(const std::function<ad::Var(const ad::Var&)>& build, const Array& point, double h) {
  ScalarFn value = [&](const Array& x) { return build(ad::constant(x)).value()[0]; };
  GradientFn gradient = [&](const Array& x) {
    ad::Var in = ad::variable(x);
    ad::backward(build(in));
    Array g = in.grad();
    return Array(x.shape(), g.vec());
  };
  return grad_check(value, gradient, point, h);
}

/// grad_check with respect to a Parameter's value; `build` reads the
/// parameter each call. The parameter's value and gradient are restored.
inline double grad_check(const std::function<ad::Var()>& build, Parameter& p, double h) {
  const Array saved = p.value;
  ScalarFn value = [&](const Array& x) {
    p.value = x;
    return build().value()[0];
  };
  GradientFn gradient = [&](const Array& x) {
    p.value = x;
    const Array saved_grad = p.gradient;
    p.zero_grad();
    ad::backward(build());
    Array g = p.gradient;
    p.gradient = saved_grad;
    return g;
  };
  const double err = grad_check(value, gradient, saved, h);
  p.value = saved;
  return err;
}

}  // namespace s2t
