#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace nj {

struct DescentOptions {
  double tol = 1e-6;
  int max_iter = 20000;
  double armijo = 1e-4;
  // Also require a relative energy decrease below tol^2 on the last accepted step.
  bool require_plateau = false;
  bool record_history = false;
};

struct DescentResult {
  double energy = 0;
  double residual = 0;
  int iterations = 0;
  bool converged = false;
  bool monotone = true;
  std::string stop_reason;
  std::vector<double> history;
};

namespace detail {
inline double real_dot(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  return double(s);
}
}  // namespace detail

// Preconditioned gradient descent with Barzilai-Borwein steps in the preconditioner
// metric and monotone Armijo backtracking. Problem provides
//   double energy_gradient(span<const C> x, span<C> g)  (returns energy, fills g)
//   double energy(span<const C> x)
//   void precondition(span<const C> g, span<C> d)       (d = P^{-1} g)
//   double residual(span<const C> g)                     (pointwise stationarity measure)
template <class Problem>
DescentResult descend(Problem& prob, std::vector<std::complex<double>>& x, const DescentOptions& opt) {
  using C = std::complex<double>;
  const std::size_t n = x.size();
  std::vector<C> g(n), d(n), xn(n), gn(n);
  DescentResult res;
  double E = prob.energy_gradient(x, g);
  if (!std::isfinite(E)) throw DivergenceError(0);
  if (opt.record_history) res.history.push_back(E);
  double alpha = 1.0;
  double last_rel = 1.0;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    res.residual = prob.residual(g);
    const double plateau = std::max(opt.tol * opt.tol, 8e-16);
    if (res.residual <= opt.tol && (!opt.require_plateau || last_rel < plateau)) {
      res.converged = true;
      res.stop_reason = "tolerance";
      break;
    }
    prob.precondition(g, d);
    double gd = detail::real_dot(g, d);  // > 0
    if (!(gd > 0)) {
      res.stop_reason = "zero search direction";
      res.converged = res.residual <= opt.tol;
      break;
    }
    double En = 0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] - alpha * d[i];
      En = prob.energy(xn);
      if (std::isfinite(En) && En <= E - opt.armijo * alpha * gd) {
        accepted = true;
        break;
      }
      if (std::isfinite(En) && En <= E && alpha * gd < 1e-15 * std::abs(E)) {
        accepted = true;  // decrease below round-off of E
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!std::isfinite(En)) throw DivergenceError(it);
      res.stop_reason = "line search stagnation";
      break;
    }
    En = prob.energy_gradient(xn, gn);
    if (!std::isfinite(En)) throw DivergenceError(it);
    if (En > E) res.monotone = false;
    // BB1 step in the P metric: s = -alpha d, <s, P s> = alpha^2 <d, g>.
    double sy = 0;
    {
      long double acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        C s = xn[i] - x[i], y = gn[i] - g[i];
        acc += s.real() * y.real() + s.imag() * y.imag();
      }
      sy = double(acc);
    }
    double sPs = alpha * alpha * gd;
    last_rel = std::abs(E - En) / std::max(1e-300, std::abs(E));
    x.swap(xn);
    g.swap(gn);
    E = En;
    if (opt.record_history) res.history.push_back(E);
    alpha = sy > 0 ? std::clamp(sPs / sy, 1e-8, 1e8) : std::min(4.0 * alpha, 1e8);
  }
  res.iterations = it;
  res.energy = E;
  res.residual = prob.residual(g);
  if (res.stop_reason.empty()) {
    res.converged = res.residual <= opt.tol;
    res.stop_reason = res.converged ? "tolerance" : "max iterations";
  }
  return res;
}

}  // namespace nj
