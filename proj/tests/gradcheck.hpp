#pragma once

#include <cmath>
#include <functional>

#include "conpro/tensor.hpp"

// Central finite differences of a scalar function over every element of x.
inline conpro::Tensor fd_gradient(const std::function<double(const conpro::Tensor&)>& f,
                                  conpro::Tensor x, double eps = 1e-5) {
  conpro::Tensor g(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double h = eps * std::max(1.0, std::fabs(x[i]));
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Guarded relative error: |a-b| / max(|a|+|b|, 1e-4). The floor makes the
// comparison absolute once both gradients are tiny, where FD noise dominates.
inline double max_rel_err(const conpro::Tensor& a, const conpro::Tensor& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::fabs(a[i]) + std::fabs(b[i]), 1e-4);
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}
