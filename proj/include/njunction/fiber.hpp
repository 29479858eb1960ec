#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "connect1d.hpp"
#include "descent.hpp"
#include "potential.hpp"
#include "spectral.hpp"

namespace nj {

// One fundamental arc of a twisted-periodic map on the circle of radius r.
struct FiberProfile {
  double r = 0;
  int layers = 1;          // hN: arcs per full circle
  Point omega{1.0, 0.0};
  double theta0 = 0;       // angle of sample 0
  double arc_step = 0;     // arc length between samples
  std::vector<Point> v;    // samples on [theta0, theta0 + 2 pi / layers)
  double energy = 0;       // full-period energy

  int size() const { return int(v.size()); }
  double sector_angle() const { return 2 * std::numbers::pi / layers; }
  // Sample k for any integer k, using v(theta + sector) = omega v(theta).
  Point at(long k) const {
    const long n = long(v.size());
    long q = k >= 0 ? k / n : -((-k + n - 1) / n);
    Point w = v[std::size_t(k - q * n)];
    if (q > 0)
      for (long i = 0; i < q; ++i) w *= omega;
    else
      for (long i = 0; i < -q; ++i) w /= omega;
    return w;
  }
};

inline double fiber_arc_energy(const Potential& p, std::span<const Point> v, Point omega, double h) {
  const std::size_t n = v.size();
  long double e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Point next = i + 1 == n ? omega * v[0] : v[i + 1];
    e += 0.5 * std::norm(next - v[i]) / h + h * p.value(v[i]);
  }
  return double(e);
}

inline double fiber_energy(const Potential& p, const FiberProfile& f) {
  return f.layers * fiber_arc_energy(p, f.v, f.omega, f.arc_step);
}

namespace detail {

class FiberProblem {
 public:
  FiberProblem(const Potential& p, int n, double h, double kappa)
      : p_(p), n_(n), h_(h), kappa_(kappa), fft_(1, n, std::arg(p.omega())) {}

  double energy(std::span<const Point> x) const { return fiber_arc_energy(p_, x, p_.omega(), h_); }
  double energy_gradient(std::span<const Point> x, std::span<Point> g) const {
    const Point w = p_.omega();
    for (int i = 0; i < n_; ++i) {
      Point lo = i == 0 ? x[n_ - 1] / w : x[i - 1];
      Point hi = i + 1 == n_ ? w * x[0] : x[i + 1];
      g[i] = p_.project((2.0 * x[i] - lo - hi) / h_ + h_ * p_.gradient(x[i]));
    }
    return energy(x);
  }
  void precondition(std::span<const Point> g, std::span<Point> d) {
    fft_.forward(g);
    for (int k = 0; k < n_; ++k) fft_.mode(0, k) /= fft_.eigenvalue(k) / h_ + kappa_ * h_;
    fft_.backward(d);
    for (auto& z : d) z = p_.project(z);
  }
  double residual(std::span<const Point> g) const {
    double r = 0;
    for (const auto& v : g) r = std::max(r, std::abs(v) / h_);
    return r;
  }

 private:
  const Potential& p_;
  int n_;
  double h_, kappa_;
  TwistedFFT fft_;
};

}  // namespace detail

struct FiberSolveInfo {
  int iterations = 0;
  double residual = 0;
  bool monotone = true;
  double seed_delta = 0;
  double seed_energy = 0;  // full-period energy of the seed construction
};

// Descent from an explicit initial arc.
inline FiberProfile minimize_fiber_from(const Potential& p, double r, std::vector<Point> init, double tol,
                                        FiberSolveInfo* info = nullptr, int max_iter = 100000) {
  const int n = int(init.size());
  if (n < 8) throw ParameterError("fiber needs at least 8 samples");
  FiberProfile f;
  f.r = r;
  f.layers = p.layers();
  f.omega = p.omega();
  f.arc_step = 2 * std::numbers::pi * r / f.layers / n;
  detail::FiberProblem prob(p, n, f.arc_step, detail::hessian_scale(p));
  DescentOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  auto res = descend(prob, init, opt);
  if (!res.converged && res.residual > 10 * tol)
    throw ConvergenceError("fiber descent did not converge at r=" + std::to_string(r), res.residual,
                           res.iterations);
  f.v = std::move(init);
  f.energy = fiber_energy(p, f);
  if (info) {
    info->iterations = res.iterations;
    info->residual = res.residual;
    info->monotone = res.monotone;
  }
  return f;
}

inline FiberProfile minimize_fiber(const Potential& p, const HeteroclinicProfile& pr, const PotentialConstants& k,
                                   double r, int n_arc, double tol, const std::string& seed = "periodic-seed",
                                   FiberSolveInfo* info = nullptr) {
  if (n_arc < 128) throw ParameterError("fiber needs n_arc >= 128");
  if (seed == "uniform-a") {
    if (std::abs(p.omega() * p.a() - p.a()) > 0)
      throw ParameterError("seed 'uniform-a' violates equivariance since omega a != a");
  } else if (seed != "periodic-seed") {
    throw ParameterError("unknown fiber seed '" + seed + "'");
  }
  PeriodicSeed sd = seed_for_radius(pr, p, k, r, n_arc);
  std::vector<Point> init(sd.samples.begin(), sd.samples.begin() + n_arc);
  FiberSolveInfo local;
  auto f = minimize_fiber_from(p, r, std::move(init), tol, &local);
  local.seed_delta = sd.delta;
  local.seed_energy = p.layers() * sd.segment_energy;
  if (info) *info = local;
  return f;
}

// Thresholds of the structure ladder.
struct AnalysisParams {
  double delta = 0;
  double alpha = 0.25;
  double alpha_prime = 0.25;
  double c = 0;            // 1 + 1/(c_W N) + C_W/c_W
  double delta_prime = 0;  // c delta^alpha, capped below half the well separation
  double delta_prime_raw = 0;
  double nu = 0;           // 4 sigma / (c_W^2 delta^2)
  double r_delta_theory = 0;
  double r_delta = 0;      // radius from which fibers are classified
  double sigma = 0;
  double c_W = 0, C_W = 0, delta_W = 0;
  int N = 2, h = 1, layers = 2;
  std::vector<Point> wells;
  Point omega{1.0, 0.0};

  double sector_angle() const { return 2 * std::numbers::pi / layers; }
  void validate() const {
    if (!(2 * alpha + alpha_prime < 1)) throw ParameterError("analysis needs 2 alpha + alpha' < 1");
    if (!(alpha > 0 && alpha < 1 && alpha_prime > 0 && alpha_prime < 1))
      throw ParameterError("alpha and alpha' must lie in (0,1)");
    if (!(delta > 0) || delta > delta_W * (1 + 1e-12)) throw ParameterError("analysis needs 0 < delta <= delta_W");
    if (!(c > 1) || !(nu > 0)) throw ParameterError("analysis constants out of range");
  }
};

inline double default_delta(const Potential& p, const PotentialConstants& k) {
  return std::min(0.05 * p.well_radius(), k.delta_W / 4);
}

// c delta^alpha, capped at a quarter of the well separation.
inline double structure_radius(const Potential& p, const PotentialConstants& k, double delta, double alpha) {
  double c = 1 + 1 / (k.c_W * p.order()) + k.C_W / k.c_W;
  return std::min(c * std::pow(delta, alpha), 0.25 * p.well_separation());
}

inline AnalysisParams make_analysis_params(const Potential& p, const PotentialConstants& k, double sigma,
                                           std::optional<double> delta = {}, double alpha = 0.25,
                                           double alpha_prime = 0.25, std::optional<double> r_delta = {}) {
  AnalysisParams a;
  a.delta = delta ? *delta : default_delta(p, k);
  a.alpha = alpha;
  a.alpha_prime = alpha_prime;
  a.sigma = sigma;
  a.c_W = k.c_W;
  a.C_W = k.C_W;
  a.delta_W = k.delta_W;
  a.N = p.order();
  a.h = p.fold();
  a.layers = p.layers();
  a.wells = p.wells();
  a.omega = p.omega();
  a.c = 1 + 1 / (k.c_W * a.N) + k.C_W / k.c_W;
  a.delta_prime_raw = a.c * std::pow(a.delta, alpha);
  a.delta_prime = structure_radius(p, k, a.delta, alpha);
  a.nu = 4 * sigma / (k.c_W * k.c_W * a.delta * a.delta);
  a.r_delta_theory = 4 * a.layers * sigma / (std::numbers::pi * k.c_W * k.c_W * a.delta * a.delta);
  a.r_delta = r_delta ? *r_delta : 0.0;
  a.validate();
  return a;
}

enum class FiberTag { V1, V2, V3, V4, VSTAR };

inline std::string to_string(FiberTag t) {
  switch (t) {
    case FiberTag::V1: return "V1";
    case FiberTag::V2: return "V2";
    case FiberTag::V3: return "V3";
    case FiberTag::V4: return "V4";
    case FiberTag::VSTAR: return "VSTAR";
  }
  return "?";
}

struct FiberClass {
  FiberTag tag = FiberTag::V1;
  double theta_r = 0;       // layer angle in [0, sector), VSTAR only
  double s_transition = 0;  // arc length between the delta' crossings
  double s_minus = 0, s_plus = 0;
  int a_prime = 1;          // index of the well reached, relative to the starting well
  int start_well = 0;
};

inline FiberClass classify_fiber(const FiberProfile& f, const AnalysisParams& prm) {
  FiberClass out;
  const int n = f.size();
  const int N = int(prm.wells.size());
  // deepest sample inside any well ball
  int i0 = -1, j0 = 0;
  double best = 1e300;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < N; ++j) {
      double d = std::abs(f.v[i] - prm.wells[j]);
      if (d < best) best = d, i0 = i, j0 = j;
    }
  if (i0 < 0 || best > prm.delta) {
    out.tag = FiberTag::V1;
    return out;
  }
  out.start_well = j0;
  Point rot = 1.0;
  for (int j = 0; j < j0; ++j) rot /= prm.omega;
  std::vector<Point> w(n + 1);
  for (int k = 0; k <= n; ++k) w[k] = rot * f.at(i0 + k);
  const Point a = prm.wells[0], b = prm.wells[1 % N];
  const double h = f.arc_step;

  for (int k = 0; k <= n; ++k)
    for (int j = 2; j < N; ++j)
      if (std::abs(w[k] - prm.wells[j]) <= prm.delta) {
        out.tag = FiberTag::V2;
        return out;
      }

  const double dp = prm.delta_prime;
  double s_minus = -1, s_plus = -1;
  for (int k = 1; k <= n; ++k) {
    double d0 = std::abs(w[k - 1] - a), d1 = std::abs(w[k] - a);
    if (d0 <= dp && d1 > dp) {
      s_minus = h * (k - 1 + (dp - d0) / (d1 - d0));
      break;
    }
  }
  for (int k = n - 1; k >= 0; --k) {
    double d0 = std::abs(w[k] - b), d1 = std::abs(w[k + 1] - b);
    if (d0 > dp && d1 <= dp) {
      s_plus = h * (k + (d0 - dp) / (d0 - d1));
      break;
    }
  }
  if (s_minus < 0 || s_plus < 0 || s_plus <= s_minus) {
    out.tag = FiberTag::V3;
    return out;
  }
  out.s_minus = s_minus;
  out.s_plus = s_plus;
  for (int k = 0; k <= n; ++k) {
    double s = h * k;
    if (s <= s_minus || s >= s_plus) continue;
    if (std::abs(w[k] - a) <= prm.delta || std::abs(w[k] - b) <= prm.delta) {
      out.tag = FiberTag::V3;
      return out;
    }
  }
  out.s_transition = s_plus - s_minus;
  if (out.s_transition >= prm.nu) {
    out.tag = FiberTag::V4;
    return out;
  }
  out.tag = FiberTag::VSTAR;
  out.a_prime = 1;
  const double sector = f.sector_angle();
  double th = f.theta0 + (i0 * h + 0.5 * (s_minus + s_plus)) / f.r;
  th = std::fmod(th, sector);
  if (th < 0) th += sector;
  out.theta_r = th;
  return out;
}

struct FiberGapRow {
  double r = 0;
  double J = 0;
  double gap = 0;
  FiberClass cls;
  int iterations = 0;
};

struct FiberGapTable {
  std::vector<FiberGapRow> rows;
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();
  double kbar = 0;  // c_W pi / (hN)
  int positive = 0;
};

// Log-linear fit of gap against r over rows with positive gap.
inline double fit_gap_rate(const std::vector<FiberGapRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& r : rows) {
    if (!(r.gap > 0)) continue;
    double y = std::log(r.gap);
    sx += r.r, sy += y, sxx += r.r * r.r, sxy += r.r * y;
    ++cnt;
  }
  if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
  return -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

// Sample count per arc that keeps the fiber step close to the heteroclinic step.
inline int default_arc_samples(const Potential& p, const HeteroclinicProfile& pr, double r) {
  double arc = 2 * std::numbers::pi * r / p.layers();
  return std::max(128, int(std::ceil(arc / pr.step)));
}

inline FiberGapTable fiber_gap(const Potential& p, const HeteroclinicProfile& pr, const PotentialConstants& k,
                               const std::vector<double>& radii, const AnalysisParams& prm, double tol,
                               int n_arc = 0) {
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw ParameterError("fiber radii must be increasing");
  FiberGapTable t;
  t.kbar = k.c_W * std::numbers::pi / p.layers();
  for (double r : radii) {
    FiberSolveInfo info;
    int n = n_arc > 0 ? n_arc : default_arc_samples(p, pr, r);
    auto f = minimize_fiber(p, pr, k, r, n, tol, "periodic-seed", &info);
    FiberGapRow row;
    row.r = r;
    row.J = f.energy;
    row.gap = p.layers() * pr.energy - f.energy;  // same quadrature on both sides
    row.cls = classify_fiber(f, prm);
    row.iterations = info.iterations;
    if (row.gap > 0) ++t.positive;
    t.rows.push_back(row);
  }
  t.fitted_rate = fit_gap_rate(t.rows);
  return t;
}

}  // namespace nj
