#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace nj {

// Points of the target space. For m = 1 only the real part is used.
using Point = std::complex<double>;

enum class PotentialKind { ComplexWell, ScalarBistable, UserPolynomial };

inline std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::ComplexWell: return "polynomial-complex-well";
    case PotentialKind::ScalarBistable: return "scalar-bistable";
    case PotentialKind::UserPolynomial: return "user-polynomial";
  }
  return "?";
}

inline PotentialKind parse_kind(const std::string& s) {
  if (s == "polynomial-complex-well") return PotentialKind::ComplexWell;
  if (s == "scalar-bistable") return PotentialKind::ScalarBistable;
  if (s == "user-polynomial") return PotentialKind::UserPolynomial;
  throw ConfigError("unknown potential kind '" + s + "'");
}

// coeff * x^px * y^py
struct Monomial {
  int px = 0;
  int py = 0;
  double coeff = 0.0;
};

struct Mat2 {
  double a00 = 1, a01 = 0, a10 = 0, a11 = 1;

  Mat2 operator*(const Mat2& o) const {
    return {a00 * o.a00 + a01 * o.a10, a00 * o.a01 + a01 * o.a11,
            a10 * o.a00 + a11 * o.a10, a10 * o.a01 + a11 * o.a11};
  }
  static Mat2 rotation(double phi) {
    double c = std::cos(phi), s = std::sin(phi);
    return {c, -s, s, c};
  }
};

struct RotationPair {
  Mat2 target;  // for m = 1 this is -I and acts as the scalar -1
  Mat2 domain;
  int target_dim = 2;
};

class Potential {
 public:
  static Potential complex_well(int N, double well_radius = 1.0, int h = 1) {
    Potential p(PotentialKind::ComplexWell, 2, N, h, well_radius);
    p.aN_ = std::pow(well_radius, N);
    return p;
  }

  static Potential scalar_bistable(int h = 1, double well_radius = 1.0) {
    return Potential(PotentialKind::ScalarBistable, 1, 2, h, well_radius);
  }

  static Potential user_polynomial(int m, int N, int h, double well_radius,
                                   std::vector<Monomial> terms) {
    Potential p(PotentialKind::UserPolynomial, m, N, h, well_radius);
    for (const auto& t : terms) {
      if (t.px < 0 || t.py < 0) throw ParameterError("negative monomial exponent");
      if (m == 1 && t.py != 0) throw ParameterError("m=1 polynomial may only use powers of u");
    }
    if (terms.empty()) throw ParameterError("user-polynomial needs at least one term");
    p.terms_ = std::move(terms);
    return p;
  }

  PotentialKind kind() const { return kind_; }
  int dim() const { return m_; }
  int order() const { return N_; }
  int fold() const { return h_; }
  int layers() const { return h_ * N_; }
  double well_radius() const { return rho_; }
  const std::vector<Monomial>& terms() const { return terms_; }

  // Target generator as a complex multiplier (-1 when m = 1).
  Point omega() const { return omega_; }
  double domain_angle() const { return 2.0 * std::numbers::pi / (h_ * N_); }

  Point a() const { return a_; }
  Point well(int j) const {
    int k = ((j % N_) + N_) % N_;
    Point w = a_;
    for (int i = 0; i < k; ++i) w *= omega_;
    return m_ == 1 ? Point(w.real(), 0.0) : w;
  }
  std::vector<Point> wells() const {
    std::vector<Point> w;
    for (int j = 0; j < N_; ++j) w.push_back(well(j));
    return w;
  }
  double well_separation() const { return std::abs(well(1) - a_); }

  double value(Point u) const {
    check_finite(u);
    switch (kind_) {
      case PotentialKind::ComplexWell: {
        Point f = ipow(u, N_) - aN_;
        return std::norm(f);
      }
      case PotentialKind::ScalarBistable: {
        double x = u.real();
        double t = rho_ * rho_ - x * x;
        return 0.25 * t * t;
      }
      case PotentialKind::UserPolynomial: {
        double x = u.real(), y = m_ == 1 ? 0.0 : u.imag();
        double s = 0.0;
        for (const auto& t : terms_) s += t.coeff * rpow(x, t.px) * rpow(y, t.py);
        return s;
      }
    }
    return 0.0;
  }

  // Gradient (dW/dx, dW/dy) packed as a complex number.
  Point gradient(Point u) const {
    check_finite(u);
    switch (kind_) {
      case PotentialKind::ComplexWell: {
        Point f = ipow(u, N_) - aN_;
        Point df = double(N_) * ipow(u, N_ - 1);
        return 2.0 * std::conj(df) * f;
      }
      case PotentialKind::ScalarBistable: {
        double x = u.real();
        return {x * x * x - rho_ * rho_ * x, 0.0};
      }
      case PotentialKind::UserPolynomial: {
        double x = u.real(), y = m_ == 1 ? 0.0 : u.imag();
        double gx = 0.0, gy = 0.0;
        for (const auto& t : terms_) {
          if (t.px > 0) gx += t.coeff * t.px * rpow(x, t.px - 1) * rpow(y, t.py);
          if (m_ == 2 && t.py > 0) gy += t.coeff * t.py * rpow(x, t.px) * rpow(y, t.py - 1);
        }
        return {gx, gy};
      }
    }
    return {};
  }

  // Project onto the target space (drops the imaginary part when m = 1).
  Point project(Point u) const { return m_ == 1 ? Point(u.real(), 0.0) : u; }

 private:
  Potential(PotentialKind k, int m, int N, int h, double rho) : kind_(k), m_(m), N_(N), h_(h), rho_(rho) {
    if (N < 2) throw ParameterError("symmetry order N must be >= 2");
    if (h < 1) throw ParameterError("domain fold h must be >= 1");
    if (m != 1 && m != 2) throw ParameterError("target dimension m must be 1 or 2");
    if (m == 1 && N != 2) throw ParameterError("m=1 requires N=2");
    if (!(rho > 0) || !std::isfinite(rho)) throw ParameterError("well_radius must be positive");
    if (m == 1) {
      omega_ = -1.0;
      a_ = Point(-rho, 0.0);
    } else {
      omega_ = std::polar(1.0, 2.0 * std::numbers::pi / N);
      a_ = Point(rho, 0.0);
    }
  }

  static void check_finite(Point u) {
    if (!std::isfinite(u.real()) || !std::isfinite(u.imag()))
      throw DomainError("non-finite argument to the potential");
  }
  static Point ipow(Point z, int k) {
    Point r = 1.0;
    for (int i = 0; i < k; ++i) r *= z;
    return r;
  }
  static double rpow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
  }

  PotentialKind kind_;
  int m_, N_, h_;
  double rho_;
  double aN_ = 0.0;
  Point omega_{1.0, 0.0};
  Point a_{1.0, 0.0};
  std::vector<Monomial> terms_;
};

inline double eval_w(const Potential& p, Point u) { return p.value(u); }
inline Point grad_w(const Potential& p, Point u) { return p.gradient(u); }

inline RotationPair rotation_generator(int N, int h, int m = 2) {
  if (N < 2) throw ParameterError("symmetry order N must be >= 2");
  if (h < 1) throw ParameterError("domain fold h must be >= 1");
  if (m != 1 && m != 2) throw ParameterError("target dimension m must be 1 or 2");
  if (m == 1 && N != 2) throw ParameterError("m=1 requires N=2");
  RotationPair out;
  out.target_dim = m;
  out.target = m == 1 ? Mat2{-1, 0, 0, -1} : Mat2::rotation(2.0 * std::numbers::pi / N);
  out.domain = Mat2::rotation(2.0 * std::numbers::pi / (double(h) * N));
  // snap round-off so exact angles give exact entries
  for (double* e : {&out.target.a00, &out.target.a01, &out.target.a10, &out.target.a11,
                    &out.domain.a00, &out.domain.a01, &out.domain.a10, &out.domain.a11})
    if (std::abs(*e) < 1e-15) *e = 0.0;
  return out;
}

struct PotentialConstants {
  double c_W = 0;
  double C_W = 0;
  double delta_W = 0;
  double M = 0;
  double delta0 = 0;
  double delta_star = 0;
  double lambda_min = 0;
  double lambda_max = 0;
};

struct EstimateOptions {
  // Probe radii in units of |a|, tried from largest to smallest.
  std::vector<double> probe_grid{0.5, 0.4, 0.3, 0.2, 0.15, 0.1, 0.075, 0.05, 0.03, 0.02, 0.01};
  int sphere_samples = 64;
  int radial_samples = 24;
  double margin = 0.05;
  double delta_star_fraction = 0.5;  // delta_star = fraction * delta_W
};

namespace detail {

// Symmetric Hessian of W at z by central differences of the analytic gradient.
inline std::array<double, 3> hessian(const Potential& p, Point z) {
  double e = 1e-5 * std::max(1.0, std::abs(z));
  if (p.dim() == 1) {
    double d = (p.gradient(z + e).real() - p.gradient(z - e).real()) / (2 * e);
    return {d, 0.0, d};
  }
  Point gx = (p.gradient(z + e) - p.gradient(z - e)) / (2 * e);
  Point gy = (p.gradient(z + Point(0, e)) - p.gradient(z - Point(0, e))) / (2 * e);
  return {gx.real(), 0.5 * (gx.imag() + gy.real()), gy.imag()};
}

inline std::pair<double, double> sym_eigs(const std::array<double, 3>& H) {
  double tr = H[0] + H[2], det = H[0] * H[2] - H[1] * H[1];
  double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return {0.5 * tr - disc, 0.5 * tr + disc};
}

inline double dot(Point a, Point b) { return a.real() * b.real() + a.imag() * b.imag(); }

inline double nearest_well_distance(const Potential& p, Point z) {
  double d = 1e300;
  for (const auto& w : p.wells()) d = std::min(d, std::abs(z - w));
  return d;
}

// Unit directions around a well: the two signs for m = 1, a circle for m = 2.
inline std::vector<Point> directions(const Potential& p, int count) {
  if (p.dim() == 1) return {Point(1, 0), Point(-1, 0)};
  std::vector<Point> d;
  for (int k = 0; k < count; ++k) d.push_back(std::polar(1.0, 2 * std::numbers::pi * (k + 0.5) / count));
  return d;
}

// Points of B_R for the far-field check.
inline std::vector<Point> ball_samples(const Potential& p, double R, int n) {
  std::vector<Point> out;
  if (p.dim() == 1) {
    for (int i = 0; i <= 4 * n * n; ++i) out.emplace_back(-R + 2 * R * i / (4.0 * n * n), 0.0);
    return out;
  }
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      Point z(-R + 2 * R * i / n, -R + 2 * R * j / n);
      if (std::abs(z) <= R) out.push_back(z);
    }
  return out;
}

}  // namespace detail

// Smallest M on a geometric ladder with W_u(u).u >= 0 sampled on M <= |u| <= 4M.
inline double coercivity_radius(const Potential& p) {
  auto dirs = detail::directions(p, 128);
  double rho = p.well_radius();
  for (int k = 0; k < 80; ++k) {
    double M = rho * std::pow(1.1, k);
    bool ok = true;
    for (int s = 0; s <= 60 && ok; ++s) {
      double r = M * (1.0 + 3.0 * s / 60.0);
      for (const auto& d : dirs) {
        Point u = r * d;
        if (detail::dot(p.gradient(u), u) < 0) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return M;
  }
  throw HypothesisError("no coercivity radius found: W_u(u).u < 0 far from the wells");
}

inline PotentialConstants estimate_constants(const Potential& p, const EstimateOptions& opt = {}) {
  const Point a = p.a();
  auto [lmin, lmax] = detail::sym_eigs(detail::hessian(p, a));
  if (!(lmin > 0)) throw HypothesisError("Hessian of W at the well is not positive definite");

  PotentialConstants k;
  k.lambda_min = lmin;
  k.lambda_max = lmax;
  k.M = coercivity_radius(p);
  double c = (1 - opt.margin) * std::sqrt(lmin);
  double C = (1 + opt.margin) * std::sqrt(lmax);

  const auto dirs = detail::directions(p, opt.sphere_samples);
  const double Rb = std::max(2 * k.M, 2 * p.well_radius());
  const auto ball = detail::ball_samples(p, Rb, 160);

  std::vector<double> probes;
  for (double g : opt.probe_grid) probes.push_back(g * p.well_radius());
  std::sort(probes.begin(), probes.end(), std::greater<>());
  if (probes.empty()) throw ParameterError("empty probe grid");

  // Lower and upper ratios 2W/rho^2, W_u.(z-a)/rho^2 and the far-field ratio for radius delta.
  auto measure = [&](double delta, double& lo, double& hi) {
    lo = 1e300;
    hi = 0;
    for (int s = 1; s <= opt.radial_samples; ++s) {
      double rr = delta * s / opt.radial_samples;
      for (const auto& d : dirs) {
        Point z = a + rr * d;
        double w = p.value(z);
        lo = std::min({lo, 2 * w / (rr * rr), detail::dot(p.gradient(z), z - a) / (rr * rr)});
        hi = std::max(hi, 2 * w / (rr * rr));
      }
    }
    for (const auto& z : ball) {
      double dist = std::min(detail::nearest_well_distance(p, z), delta);
      if (dist <= 1e-6 * p.well_radius()) continue;  // covered by the radial probes
      lo = std::min(lo, 2 * p.value(z) / (dist * dist));
    }
  };

  bool found = false;
  for (double delta : probes) {
    double lo, hi;
    measure(delta, lo, hi);
    if (lo >= c * c && hi <= C * C) {
      k.delta_W = delta;
      found = true;
      break;
    }
  }
  if (!found) {
    k.delta_W = probes.back();
    double lo, hi;
    measure(k.delta_W, lo, hi);
    if (!(lo > 0)) throw HypothesisError("W is not quadratically bounded below near the well");
    c = std::min(c, (1 - opt.margin) * std::sqrt(lo));
    C = std::max(C, (1 + opt.margin) * std::sqrt(hi));
  }
  k.c_W = c;
  k.C_W = C;
  k.delta_star = opt.delta_star_fraction * k.delta_W;

  // delta0: W(a + delta n) < W(a + d n) for delta <= delta0 < d, away from the other wells.
  const auto rays = detail::directions(p, 64);
  auto monotone = [&](double d0) {
    for (const auto& n : rays) {
      for (int s = 1; s <= 8; ++s) {
        double dl = d0 * s / 8.0;
        double wl = p.value(a + dl * n);
        for (int t = 1; t <= 200; ++t) {
          double dd = dl + (Rb + p.well_radius()) * t / 200.0;
          Point z = a + dd * n;
          if (std::abs(z) > k.M) break;
          bool excluded = false;
          for (int j = 1; j < p.order(); ++j)
            if (std::abs(z - p.well(j)) < k.delta_star) excluded = true;
          if (excluded) continue;
          if (!(wl < p.value(z))) return false;
        }
      }
    }
    return true;
  };
  double d0 = k.delta_W;
  while (d0 > 1e-6 * p.well_radius() && !monotone(d0)) d0 *= 0.8;
  k.delta0 = d0;
  return k;
}

struct HypothesisReport {
  double h1_residual = 0;
  bool h1_pass = false;
  int well_count = 0;
  std::vector<Point> wells;
  double max_well_value = 0;
  bool wells_distinct = false;
  double hessian_min = 0;
  double hessian_max = 0;
  bool h2_pass = false;
  double coercivity_radius = 0;
  bool pass = false;
};

inline HypothesisReport verify_hypotheses(const Potential& p) {
  HypothesisReport r;
  std::uint64_t state = 0x9e3779b97f4a7c15ULL;
  auto next = [&]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return (state >> 11) * (1.0 / 9007199254740992.0);
  };
  for (int i = 0; i < 1000; ++i) {
    double rad = 10 * std::sqrt(next()), ang = 2 * std::numbers::pi * next();
    Point u = p.dim() == 1 ? Point(rad * (next() < 0.5 ? -1 : 1), 0) : std::polar(rad, ang);
    double w = p.value(u);
    double res = std::abs(p.value(p.project(p.omega() * u)) - w) / (1 + std::abs(w));
    r.h1_residual = std::max(r.h1_residual, res);
  }
  r.h1_pass = r.h1_residual <= 1e-12;

  r.wells = p.wells();
  r.well_count = int(r.wells.size());
  r.wells_distinct = true;
  for (int i = 0; i < r.well_count; ++i) {
    r.max_well_value = std::max(r.max_well_value, std::abs(p.value(r.wells[i])));
    for (int j = i + 1; j < r.well_count; ++j)
      if (std::abs(r.wells[i] - r.wells[j]) < 1e-9) r.wells_distinct = false;
  }
  auto [lo, hi] = detail::sym_eigs(detail::hessian(p, p.a()));
  r.hessian_min = lo;
  r.hessian_max = hi;
  try {
    r.coercivity_radius = coercivity_radius(p);
  } catch (const HypothesisError&) {
    r.coercivity_radius = -1;
  }
  r.h2_pass = r.wells_distinct && r.max_well_value <= 1e-12 && lo > 0 && r.coercivity_radius > 0;
  r.pass = r.h1_pass && r.h2_pass;
  return r;
}

}  // namespace nj
