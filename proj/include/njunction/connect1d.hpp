#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "descent.hpp"
#include "errors.hpp"
#include "potential.hpp"
#include "spectral.hpp"

namespace nj {

struct HeteroclinicProfile {
  double half_length = 0;  // L
  double step = 0;         // h = 2L/n
  std::vector<Point> u;    // n + 1 samples at s_i = -L + i h
  Point a{}, a_plus{};     // left and right wells
  double sigma = 0;        // action, integral of |u'|^2
  double energy = 0;       // discrete energy of the samples
  double equipartition = 0;
  double tail_rate = 0;
  double residual = 0;     // max Euler-Lagrange residual
  int iterations = 0;
  bool monotone = true;
  int il = -1, ir = -1;  // cached tail reference nodes, see refresh()

  int intervals() const { return int(u.size()) - 1; }
  double s(int i) const { return -half_length + i * step; }
  double floor_level() const { return 1e-8 * std::max(std::abs(a), 1e-300); }

  // First node left-to-right with |u - a| >= floor, last node with |u - a_plus| >= floor.
  int left_ref() const {
    for (int i = 0; i <= intervals(); ++i)
      if (std::abs(u[i] - a) >= floor_level()) return i;
    return 0;
  }
  int right_ref() const {
    for (int i = intervals(); i >= 0; --i)
      if (std::abs(u[i] - a_plus) >= floor_level()) return i;
    return intervals();
  }

  void refresh() {
    il = left_ref();
    ir = right_ref();
  }

  // Linear interpolation, with exponential tails beyond the resolved window.
  Point eval(double t) const {
    if (u.empty()) return a;
    const int il = this->il >= 0 ? this->il : left_ref();
    const int ir = this->ir >= 0 ? this->ir : right_ref();
    double k = tail_rate > 0 ? tail_rate : 1.0;
    if (t < s(il)) return a + (u[il] - a) * std::exp(k * (t - s(il)));
    if (t > s(ir)) return a_plus + (u[ir] - a_plus) * std::exp(-k * (t - s(ir)));
    double x = (t + half_length) / step;
    int i = std::clamp(int(std::floor(x)), 0, intervals() - 1);
    double f = x - i;
    return (1 - f) * u[i] + f * u[i + 1];
  }
};

namespace detail {

// Interior nodes 1..n-1 of a pinned 1D chain.
class ChainProblem {
 public:
  ChainProblem(const Potential& p, double h, Point left, Point right, double kappa, std::size_t interior)
      : p_(p), h_(h), left_(left), right_(right) {
    diag_.assign(interior, 2.0 / h + kappa * h);
    lower_.assign(interior, -1.0 / h);
  }

  double energy(std::span<const Point> x) const {
    const std::size_t n = x.size();
    long double e = 0;
    Point prev = left_;
    for (std::size_t i = 0; i < n; ++i) {
      e += 0.5 * std::norm(x[i] - prev) / h_ + h_ * p_.value(x[i]);
      prev = x[i];
    }
    e += 0.5 * std::norm(right_ - prev) / h_;
    e += 0.5 * h_ * (p_.value(left_) + p_.value(right_));
    return double(e);
  }
  double energy_gradient(std::span<const Point> x, std::span<Point> g) const {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
      Point lo = i == 0 ? left_ : x[i - 1];
      Point hi = i + 1 == n ? right_ : x[i + 1];
      g[i] = p_.project((2.0 * x[i] - lo - hi) / h_ + h_ * p_.gradient(x[i]));
    }
    return energy(x);
  }
  void precondition(std::span<const Point> g, std::span<Point> d) {
    std::copy(g.begin(), g.end(), d.begin());
    solve_tridiagonal(diag_, lower_, d, scratch_);
  }
  double residual(std::span<const Point> g) const {
    double r = 0;
    for (const auto& v : g) r = std::max(r, std::abs(v) / h_);
    return r;
  }

 private:
  const Potential& p_;
  double h_;
  Point left_, right_;
  std::vector<double> diag_, lower_, scratch_;
};

inline double hessian_scale(const Potential& p) {
  return sym_eigs(hessian(p, p.a())).second;
}

inline double chain_energy(const Potential& p, std::span<const Point> u, double h) {
  long double e = 0;
  for (std::size_t i = 0; i + 1 < u.size(); ++i) e += 0.5 * std::norm(u[i + 1] - u[i]) / h;
  for (std::size_t i = 0; i < u.size(); ++i)
    e += (i == 0 || i + 1 == u.size() ? 0.5 : 1.0) * h * p.value(u[i]);
  return double(e);
}

// Index offset of the equidistance point from the middle sample (fractional).
inline double equidistance_offset(const std::vector<Point>& u, Point a, Point b) {
  const int n = int(u.size()) - 1;
  for (int i = 0; i < n; ++i) {
    double f0 = std::abs(u[i] - a) - std::abs(u[i] - b);
    double f1 = std::abs(u[i + 1] - a) - std::abs(u[i + 1] - b);
    if (f0 <= 0 && f1 > 0) return i + (f0 == f1 ? 0.0 : f0 / (f0 - f1)) - 0.5 * n;
  }
  return 0.0;
}

}  // namespace detail

inline double action(const HeteroclinicProfile& pr) {
  const int n = pr.intervals();
  if (n < 2) return 0.0;
  long double s = 0;
  for (int i = 0; i <= n; ++i) {
    Point d;
    if (i == 0) d = (pr.u[1] - pr.u[0]) / pr.step;
    else if (i == n) d = (pr.u[n] - pr.u[n - 1]) / pr.step;
    else d = (pr.u[i + 1] - pr.u[i - 1]) / (2 * pr.step);
    s += (i == 0 || i == n ? 0.5 : 1.0) * std::norm(d);
  }
  return double(s * pr.step);
}

inline double equipartition_residual(const HeteroclinicProfile& pr, const Potential& p) {
  double r = 0;
  for (int i = 1; i < pr.intervals(); ++i) {
    Point d = (pr.u[i + 1] - pr.u[i - 1]) / (2 * pr.step);
    r = std::max(r, std::abs(0.5 * std::norm(d) - p.value(pr.u[i])));
  }
  return r;
}

// Decay rate of |u - a_plus| fitted on the resolved part of the right tail.
inline double fit_tail_rate(const HeteroclinicProfile& pr) {
  const double hi = 0.1 * std::abs(pr.a), lo = 1e-9 * std::abs(pr.a);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int i = 0; i <= pr.intervals(); ++i) {
    double s = pr.s(i);
    if (s <= 0 || s > 0.75 * pr.half_length) continue;
    double d = std::abs(pr.u[i] - pr.a_plus);
    if (d > hi || d < lo) continue;
    double y = std::log(d);
    sx += s, sy += y, sxx += s * s, sxy += s * y;
    ++cnt;
  }
  if (cnt < 3) return 0.0;
  double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return -slope;
}

struct HeteroOptions {
  int max_iter = 200000;
};

namespace detail {

inline HeteroclinicProfile solve_pinned(const Potential& p, double L, int n, double tol, Point target,
                                        const HeteroOptions& opt, const std::vector<Point>* init) {
  HeteroclinicProfile pr;
  pr.half_length = L;
  pr.step = 2 * L / n;
  pr.a = p.a();
  pr.a_plus = target;
  std::vector<Point> x(n - 1);
  for (int i = 1; i < n; ++i)
    x[i - 1] = init ? (*init)[i] : p.project(pr.a + (target - pr.a) * (double(i) / n));
  ChainProblem prob(p, pr.step, pr.a, target, hessian_scale(p), x.size());
  DescentOptions dopt;
  dopt.tol = tol;
  dopt.max_iter = opt.max_iter;
  dopt.require_plateau = true;
  auto res = descend(prob, x, dopt);
  pr.u.resize(n + 1);
  pr.u[0] = pr.a;
  pr.u[n] = target;
  std::copy(x.begin(), x.end(), pr.u.begin() + 1);
  pr.residual = res.residual;
  pr.iterations = res.iterations;
  pr.monotone = res.monotone;
  pr.energy = chain_energy(p, pr.u, pr.step);
  if (!res.converged && res.residual > 10 * tol)
    throw ConvergenceError("heteroclinic descent did not converge: " + res.stop_reason, res.residual,
                           res.iterations);
  return pr;
}

inline void finish_profile(HeteroclinicProfile& pr, const Potential& p) {
  pr.sigma = action(pr);
  pr.equipartition = equipartition_residual(pr, p);
  pr.tail_rate = fit_tail_rate(pr);
  pr.refresh();
}

}  // namespace detail

inline HeteroclinicProfile solve_heteroclinic(const Potential& p, double L, int n, double tol,
                                              const HeteroOptions& opt = {}) {
  if (n < 200) throw ParameterError("heteroclinic grid needs n >= 200");
  if (n % 2) ++n;  // keep s = 0 on a node
  if (!(L > 0) || !(tol > 0)) throw ParameterError("heteroclinic needs L > 0 and tol > 0");

  auto pr = detail::solve_pinned(p, L, n, tol, p.well(1), opt, nullptr);
  if (p.order() > 2) {
    // The connection may prefer the other neighbour; reflect it back with omega * u(-s).
    auto alt = detail::solve_pinned(p, L, n, tol, p.well(-1), opt, nullptr);
    if (alt.energy < pr.energy - 1e-12 * std::abs(pr.energy)) {
      for (int i = 0; i <= n; ++i) pr.u[i] = p.omega() * alt.u[n - i];
      pr.energy = alt.energy;
      pr.residual = alt.residual;
      pr.iterations += alt.iterations;
    }
  }

  // Translation gauge: equidistance point on the middle node, within one cell.
  double off = detail::equidistance_offset(pr.u, pr.a, pr.a_plus);
  int k = int(std::lround(off));
  if (k != 0) {
    std::vector<Point> shifted(n + 1);
    for (int i = 0; i <= n; ++i) {
      int j = i + k;
      shifted[i] = j < 0 ? pr.a : j > n ? pr.a_plus : pr.u[j];
    }
    int iters = pr.iterations;
    pr = detail::solve_pinned(p, L, n, tol, pr.a_plus, opt, &shifted);
    pr.iterations += iters;
  }
  detail::finish_profile(pr, p);
  return pr;
}

// (t_delta, t^delta): last exit from B_delta(a), first entry into B_delta(a_plus).
inline std::pair<double, double> crossing_times(const HeteroclinicProfile& pr, double delta,
                                                const PotentialConstants& k) {
  if (!(delta > 0) || delta > k.delta_W * (1 + 1e-12))
    throw ParameterError("crossing_times needs 0 < delta <= delta_W");
  const int n = pr.intervals();
  const double fl = pr.floor_level();
  const double rate = pr.tail_rate > 0 ? pr.tail_rate : k.c_W;
  auto lower = [&](double d) {
    for (int i = n - 1; i >= 0; --i) {
      double d0 = std::abs(pr.u[i] - pr.a);
      if (d0 <= d) {
        double d1 = std::abs(pr.u[i + 1] - pr.a);
        double f = d1 == d0 ? 0.0 : (d - d0) / (d1 - d0);
        return pr.s(i) + std::clamp(f, 0.0, 1.0) * pr.step;
      }
    }
    return pr.s(0);
  };
  auto upper = [&](double d) {
    for (int i = 1; i <= n; ++i) {
      double d1 = std::abs(pr.u[i] - pr.a_plus);
      if (d1 <= d) {
        double d0 = std::abs(pr.u[i - 1] - pr.a_plus);
        double f = d0 == d1 ? 1.0 : (d0 - d) / (d0 - d1);
        return pr.s(i - 1) + std::clamp(f, 0.0, 1.0) * pr.step;
      }
    }
    return pr.s(n);
  };
  if (delta >= fl) return {lower(delta), upper(delta)};
  double ext = std::log(fl / delta) / rate;
  return {lower(fl) - ext, upper(fl) + ext};
}

struct PeriodicSeed {
  double delta = 0;
  double tau = 0;
  double t_lo = 0, t_hi = 0;
  Point z_minus{}, z_plus{};
  double period = 0;  // one segment, t^delta - t_delta + tau
  double bridge_energy = 0;
  double segment_energy = 0;
  std::vector<Point> samples;  // n_arc + 1 samples on [0, period], endpoints included
};

inline double bridge_energy(const Potential& p, Point z0, Point z1, double tau, int m = 400) {
  long double e = 0;
  for (int i = 0; i <= m; ++i) {
    double w = (i == 0 || i == m) ? 0.5 : 1.0;
    e += w * p.value(z0 + (z1 - z0) * (double(i) / m));
  }
  return double(e * tau / m + 0.5 * std::norm(z1 - z0) / tau);
}

inline double heteroclinic_piece_energy(const HeteroclinicProfile& pr, const Potential& p, double t0,
                                        double t1) {
  int m = std::max(2000, int(2 * (t1 - t0) / pr.step));
  double hs = (t1 - t0) / m;
  long double e = 0;
  Point prev = pr.eval(t0);
  e += 0.5 * hs * p.value(prev);
  for (int i = 1; i <= m; ++i) {
    Point cur = pr.eval(t0 + i * hs);
    e += 0.5 * std::norm(cur - prev) / hs + (i == m ? 0.5 : 1.0) * hs * p.value(cur);
    prev = cur;
  }
  return double(e);
}

inline PeriodicSeed build_periodic_seed(const HeteroclinicProfile& pr, const Potential& p, double delta,
                                        const PotentialConstants& k, int n_arc = 512) {
  auto [t0, t1] = crossing_times(pr, delta, k);
  PeriodicSeed sd;
  sd.delta = delta;
  sd.t_lo = t0;
  sd.t_hi = t1;
  sd.z_plus = pr.eval(t0);
  sd.z_minus = pr.eval(t1) / p.omega();
  sd.tau = std::abs(sd.z_plus - sd.z_minus) / (k.C_W * delta);
  if (!(sd.tau > 0)) sd.tau = 1e-12;
  sd.period = t1 - t0 + sd.tau;
  sd.bridge_energy = bridge_energy(p, sd.z_minus, sd.z_plus, sd.tau);
  sd.segment_energy = sd.bridge_energy + heteroclinic_piece_energy(pr, p, t0, t1);
  sd.samples.resize(n_arc + 1);
  for (int i = 0; i <= n_arc; ++i) {
    double t = sd.period * i / n_arc;
    sd.samples[i] = t < sd.tau ? sd.z_minus + (t / sd.tau) * (sd.z_plus - sd.z_minus)
                               : pr.eval(t0 + t - sd.tau);
  }
  sd.samples[n_arc] = p.omega() * sd.samples[0];
  return sd;
}

// Threshold radius above which the seed period can match a circle of radius r.
inline double seed_threshold_radius(const HeteroclinicProfile& pr, const Potential& p,
                                    const PotentialConstants& k) {
  auto [t0, t1] = crossing_times(pr, k.delta_W, k);
  return p.layers() / (2 * std::numbers::pi) * (t1 - t0 + 2.0 / k.C_W);
}

// Seed whose layers * period equals 2 pi r; delta found by bisection in log scale.
inline PeriodicSeed seed_for_radius(const HeteroclinicProfile& pr, const Potential& p,
                                    const PotentialConstants& k, double r, int n_arc) {
  const double target = 2 * std::numbers::pi * r / p.layers();
  auto period = [&](double d) {
    auto [t0, t1] = crossing_times(pr, d, k);
    Point zp = pr.eval(t0), zm = pr.eval(t1) / p.omega();
    return t1 - t0 + std::abs(zp - zm) / (k.C_W * d);
  };
  if (period(k.delta_W) > target || r < seed_threshold_radius(pr, p, k) * (1 - 1e-12))
    throw ParameterError("radius " + std::to_string(r) + " is below the seed threshold radius " +
                         std::to_string(seed_threshold_radius(pr, p, k)));
  double lo = std::log(1e-300), hi = std::log(k.delta_W);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    double mid = 0.5 * (lo + hi);
    if (period(std::exp(mid)) > target) lo = mid;
    else hi = mid;
  }
  return build_periodic_seed(pr, p, std::exp(hi), k, n_arc);
}

inline double segment_lower_bound(double sigma, double C_W, double delta_minus, double delta_plus) {
  return sigma - 0.5 * C_W * (delta_minus * delta_minus + delta_plus * delta_plus);
}

}  // namespace nj
