#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "connect1d.hpp"
#include "disk2d.hpp"
#include "errors.hpp"
#include "fiber.hpp"
#include "potential.hpp"

namespace nj {

// ---------------------------------------------------------------- bad set

struct SigmaSet {
  std::vector<int> rows;  // grid rows with r >= r_delta
  std::vector<double> radii;
  std::vector<bool> flags;  // true = not VSTAR
  std::vector<FiberClass> classes;
  double measure = 0;
  double dr = 0;
  double delta = 0, alpha = 0;
  double r_start = 0;
  std::vector<bool> row_flag;  // per grid row; rows below r_delta are not flagged

  bool flagged_row(int i) const { return row_flag[i]; }
  int count() const { return int(std::count(flags.begin(), flags.end(), true)); }
};

inline SigmaSet detect_sigma(const Potential& p, const EquivariantField& f, const AnalysisParams& prm) {
  SigmaSet s;
  const auto& g = f.grid;
  s.dr = g.dr();
  s.delta = prm.delta;
  s.alpha = prm.alpha;
  s.r_start = prm.r_delta;
  s.row_flag.assign(g.n_r, false);
  for (int i = 0; i < g.n_r; ++i) {
    double r = g.radius(i);
    if (r < prm.r_delta) continue;
    auto cls = classify_fiber(grid_fiber(p, f, i), prm);
    bool bad = cls.tag != FiberTag::VSTAR;
    s.rows.push_back(i);
    s.radii.push_back(r);
    s.flags.push_back(bad);
    s.classes.push_back(cls);
    s.row_flag[i] = bad;
  }
  s.measure = s.dr * s.count();
  return s;
}

// Back-solved constant of the bad-set bound: C2 = 2 C0 + C1 + N sigma r0.
inline double sigma_bound_constant(double C0, double C1, int layers, double sigma, double r0) {
  return 2 * C0 + C1 + layers * sigma * r0;
}

// ---------------------------------------------------------------- theta map

enum class BracketMode { Measured, Nu };

struct ThetaEntry {
  int row = 0;
  double r = 0;
  double theta = 0;       // in [0, sector)
  double half_width = 0;  // bracket half-width in radians
  double s_transition = 0;
};

struct ThetaMap {
  std::vector<ThetaEntry> entries;
  double nu_used = 0;  // length scale behind the brackets
  double sector = 0;
  double dtheta = 0;
  BracketMode mode = BracketMode::Measured;

  const ThetaEntry* find_row(int row) const {
    for (const auto& e : entries)
      if (e.row == row) return &e;
    return nullptr;
  }
};

inline ThetaMap theta_map(const EquivariantField& f, const SigmaSet& s, const AnalysisParams& prm,
                          BracketMode mode = BracketMode::Measured) {
  ThetaMap tm;
  tm.sector = f.grid.sector_angle();
  tm.dtheta = f.grid.dtheta();
  tm.mode = mode;
  double width = 0;
  for (std::size_t k = 0; k < s.rows.size(); ++k)
    if (!s.flags[k]) width = std::max(width, s.classes[k].s_transition);
  tm.nu_used = mode == BracketMode::Nu ? prm.nu : width;
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    if (s.flags[k]) continue;
    ThetaEntry e;
    e.row = s.rows[k];
    e.r = s.radii[k];
    e.theta = s.classes[k].theta_r;
    e.s_transition = s.classes[k].s_transition;
    e.half_width = tm.nu_used / (2 * e.r);
    tm.entries.push_back(e);
  }
  return tm;
}

inline double circular_diff(double a, double b, double period) {
  double d = std::fmod(a - b, period);
  if (d > 0.5 * period) d -= period;
  if (d < -0.5 * period) d += period;
  return d;
}

// Shift (in cells) that moves theta at the largest structured radius to 0.
inline long gauge_shift(const ThetaMap& tm) {
  if (tm.entries.empty()) return 0;
  double th = tm.entries.back().theta;
  if (th > 0.5 * tm.sector) th -= tm.sector;
  return std::lround(th / tm.dtheta);
}

// ---------------------------------------------------------------- Lipschitz check

struct LipschitzViolation {
  double r_star = 0, r = 0, diff = 0, bound = 0;
};

struct LipschitzReport {
  long pairs_checked = 0;
  std::vector<LipschitzViolation> violations;
  int cap_violations = 0;
  double c_hat = 0;
  double beta = 0;
};

// c_hat with the measured radial kinetic integral in place of 2 (C0 + C1).
inline double measured_c_hat(double radial_kin, const AnalysisParams& prm) {
  double sep = std::abs(prm.wells[prm.wells.size() - 1] - prm.wells[0]);
  double gap = sep - 2 * prm.delta_prime;
  if (!(gap > 0)) throw ParameterError("delta' too large for the Lipschitz constant");
  return radial_kin / (prm.layers * gap * gap);
}

inline double lipschitz_beta(double c_hat, int layers) {
  if (!(c_hat > 0)) return 0.5;
  return std::min(0.5, 1 - std::exp(-std::numbers::pi / (2 * c_hat * layers)));
}

inline LipschitzReport lipschitz_violations(const ThetaMap& tm, double c_hat, double beta) {
  LipschitzReport rep;
  rep.c_hat = c_hat;
  rep.beta = beta;
  const double nu = tm.nu_used;
  const auto& E = tm.entries;
  for (const auto& e : E)
    if (!(2 * e.half_width < tm.sector)) ++rep.cap_violations;
  for (std::size_t a = 0; a < E.size(); ++a) {
    const double rs = E[a].r;
    for (std::size_t b = 0; b < E.size(); ++b) {
      if (a == b) continue;
      const double r = E[b].r;
      if (!(r > rs * (1 - beta) && r < rs * (1 + beta))) continue;
      ++rep.pairs_checked;
      double diff = std::abs(circular_diff(E[b].theta, E[a].theta, tm.sector));
      double bound = nu / rs + nu / r + c_hat * std::abs(std::log(r / rs)) + tm.dtheta;
      if (diff > bound) rep.violations.push_back({rs, r, diff, bound});
    }
  }
  return rep;
}

// ---------------------------------------------------------------- interface

struct InterfaceLevel {
  double r = 0;
  double target = 0;  // (j + c1)^2
  double mu = 0;
  double lambda = 0;
  double theta = 0;  // unwrapped layer angle
  double p_minus = 0, p_plus = 0;      // angles
  double q_minus = 0, q_plus = 0;      // angles, j >= 2
  double hat_minus = 0, hat_plus = 0;  // angles
  bool has_q = false;
};

struct InterfaceGraph {
  int c1 = 0;
  double c_tilde = 0;
  double nu = 0;
  double c_hat = 0;
  double beta = 0;
  double R = 0;
  double dr = 0;
  double dtheta = 0;
  double sector = 0;
  std::vector<InterfaceLevel> levels;  // levels[0] is r_1
  // achieved constants
  double c0 = 0, C0 = 0;
  double beta_max = 0;
  bool spacing_beta_ok = false;
  bool pq_ok = false;
  std::vector<double> width_ratio;  // |p_j^+ - p_j^-| / (r_{j+1} - r_j)

  int cells() const { return int(levels.size()) - 1; }
  static Point at(double r, double th) { return std::polar(r, th); }
};

struct InterfaceOptions {
  std::optional<int> c1;
  std::optional<double> c_tilde;
  double kbar = 1.0;  // decay rate behind the default c_tilde = 2 / kbar
};

inline InterfaceGraph build_interface(const EquivariantField& f, const ThetaMap& tm, const SigmaSet& s,
                                      const AnalysisParams& prm, double c_hat, double beta,
                                      const InterfaceOptions& opt = {}) {
  const auto& g = f.grid;
  InterfaceGraph ig;
  ig.R = g.R;
  ig.dr = g.dr();
  ig.dtheta = g.dtheta();
  ig.sector = g.sector_angle();
  ig.nu = tm.nu_used;
  ig.c_hat = c_hat;
  ig.beta = beta;
  ig.c_tilde = opt.c_tilde ? *opt.c_tilde : 2.0 / opt.kbar;
  if (tm.entries.empty()) throw ConstructionError("no structured radii: theta map is empty");

  // Lowest admissible first radius: past r_delta, four cells, and the leading bad run.
  double r_req = std::max(prm.r_delta, 4 * g.dr());
  r_req = std::max(r_req, tm.entries.front().r);
  const double half = 0.5 * ig.sector;
  auto arc_half = [&](double r) { return 1.5 * ig.nu / r + ig.c_tilde * std::log(std::max(r, 1.0)) / r; };

  const double r_last = g.radius(g.n_r - 1);
  auto non_sigma_at_or_below = [&](double target, double max_shift, int j) -> std::pair<double, int> {
    for (int i = g.n_r - 1; i >= 0; --i) {
      double r = g.radius(i);
      if (r > target + 1e-12) continue;
      if (target - r > max_shift + g.dr()) break;
      if (tm.find_row(i)) return {r, i};
    }
    throw ConstructionError("no structured radius within |Sigma| below the scheduled radius", j);
  };

  int c1 = 0;
  if (opt.c1) {
    c1 = *opt.c1;
  } else {
    while ((1.0 + c1) * (1.0 + c1) < r_req || arc_half((1.0 + c1) * (1.0 + c1)) >= half) {
      ++c1;
      if ((1.0 + c1) * (1.0 + c1) >= r_last) break;
    }
  }
  ig.c1 = c1;

  std::vector<int> rows;
  for (int j = 1;; ++j) {
    double t = double(j + c1) * double(j + c1);
    if (t >= r_last) break;
    auto [r, row] = non_sigma_at_or_below(t, s.measure, j);
    if (!rows.empty() && row <= rows.back()) continue;
    InterfaceLevel L;
    L.r = r;
    L.target = t;
    L.mu = t - r;
    rows.push_back(row);
    ig.levels.push_back(L);
  }
  // Last level pinned to the outermost structured radius.
  {
    int j = int(ig.levels.size()) + 1;
    auto [r, row] = non_sigma_at_or_below(r_last, s.measure, j);
    while (!rows.empty() && (row <= rows.back() || r - ig.levels.back().r < 2 * g.dr())) {
      rows.pop_back();
      ig.levels.pop_back();
    }
    InterfaceLevel L;
    L.r = r;
    L.target = r_last;
    L.mu = r_last - r;
    rows.push_back(row);
    ig.levels.push_back(L);
  }
  if (ig.cells() < 3) throw ConstructionError("fewer than 3 interface cells fit inside the disk", ig.cells());

  // Unwrapped layer angles, anchored at the outermost level.
  const int n1 = int(ig.levels.size());
  for (int k = n1 - 1; k >= 0; --k) {
    double th = tm.find_row(rows[k])->theta;
    if (k == n1 - 1) {
      if (th > half) th -= ig.sector;
    } else {
      double prev = ig.levels[k + 1].theta;
      th = prev + circular_diff(th, prev, ig.sector);
    }
    ig.levels[k].theta = th;
  }

  const double nu = ig.nu;
  for (int k = 0; k < n1; ++k) {
    auto& L = ig.levels[k];
    L.lambda = ig.c_tilde * std::log(L.r);
    double w = 1.5 * nu / L.r + L.lambda / L.r;
    L.p_minus = L.theta - w;
    L.p_plus = L.theta + w;
    L.hat_minus = L.theta - 1.5 * nu / L.r;
    L.hat_plus = L.theta + 1.5 * nu / L.r;
    if (k > 0) {
      const auto& P = ig.levels[k - 1];
      double wq = 1.5 * nu / P.r + nu / L.r + c_hat * std::log(L.r / P.r) + L.lambda / L.r;
      L.q_minus = P.theta - wq;
      L.q_plus = P.theta + wq;
      L.has_q = true;
    }
  }

  ig.c0 = 1e300;
  ig.C0 = 0;
  ig.beta_max = 0;
  ig.pq_ok = true;
  for (int k = 0; k + 1 < n1; ++k) {
    const auto& A = ig.levels[k];
    const auto& B = ig.levels[k + 1];
    double gap = B.r - A.r;
    ig.c0 = std::min(ig.c0, gap / std::sqrt(A.r));
    ig.C0 = std::max(ig.C0, gap / std::sqrt(A.r));
    ig.beta_max = std::max(ig.beta_max, gap / A.r);
    ig.width_ratio.push_back(std::abs(InterfaceGraph::at(A.r, A.p_plus) - InterfaceGraph::at(A.r, A.p_minus)) / gap);
  }
  for (int k = 1; k < n1; ++k) {
    const auto& L = ig.levels[k];
    if (!(L.q_plus > L.p_plus && L.q_minus < L.p_minus)) ig.pq_ok = false;
  }
  ig.spacing_beta_ok = ig.beta_max <= 0.5 * beta;
  return ig;
}

// ---------------------------------------------------------------- minimal curve

struct MinimalCurve {
  std::vector<Point> vertices;  // gamma_j for levels 2 .. n+1
  std::vector<double> radii;
  std::vector<double> angles;
  std::vector<int> level;  // index into InterfaceGraph::levels
  std::vector<Point> tau, upsilon;
  double length = 0;
  bool kkt_ok = true;
  double kkt_max_interior_angle = 0;
  int corner_count = 0;
  int sweeps = 0;
};

namespace detail {

inline double polyline_length(const std::vector<Point>& v) {
  double s = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) s += std::abs(v[i + 1] - v[i]);
  return s;
}

inline double cross(Point a, Point b) { return a.real() * b.imag() - a.imag() * b.real(); }

}  // namespace detail

// Shortest chain with fixed end points and one vertex per interior arc.
// Arcs are given as (radius, angle_lo, angle_hi); the first and last must be degenerate.
inline MinimalCurve minimal_curve_arcs(const std::vector<double>& radii, const std::vector<double>& lo,
                                       const std::vector<double>& hi, int K = 65) {
  if (K < 65) throw ParameterError("minimal curve needs K >= 65 arc points");
  const int m = int(radii.size());
  if (m < 2) throw ParameterError("minimal curve needs at least two levels");
  MinimalCurve mc;
  std::vector<std::vector<double>> ang(m);
  for (int j = 0; j < m; ++j) {
    int kk = (j == 0 || j == m - 1 || hi[j] <= lo[j]) ? 1 : K;
    for (int q = 0; q < kk; ++q) ang[j].push_back(kk == 1 ? 0.5 * (lo[j] + hi[j]) : lo[j] + (hi[j] - lo[j]) * q / (kk - 1));
  }
  // layered DP
  std::vector<std::vector<double>> cost(m);
  std::vector<std::vector<int>> from(m);
  cost[0].assign(ang[0].size(), 0.0);
  from[0].assign(ang[0].size(), -1);
  for (int j = 1; j < m; ++j) {
    cost[j].assign(ang[j].size(), std::numeric_limits<double>::infinity());
    from[j].assign(ang[j].size(), -1);
    for (std::size_t b = 0; b < ang[j].size(); ++b) {
      Point xb = std::polar(radii[j], ang[j][b]);
      for (std::size_t a = 0; a < ang[j - 1].size(); ++a) {
        double c = cost[j - 1][a] + std::abs(xb - std::polar(radii[j - 1], ang[j - 1][a]));
        if (c < cost[j][b]) cost[j][b] = c, from[j][b] = int(a);
      }
    }
  }
  std::vector<double> t(m);
  int idx = int(std::min_element(cost[m - 1].begin(), cost[m - 1].end()) - cost[m - 1].begin());
  for (int j = m - 1; j >= 0; --j) {
    t[j] = ang[j][idx];
    idx = from[j][idx];
  }

  auto pt = [&](int j) { return std::polar(radii[j], t[j]); };
  auto local = [&](int j, double th) {
    Point x = std::polar(radii[j], th);
    return std::abs(x - pt(j - 1)) + std::abs(pt(j + 1) - x);
  };
  // cyclic golden-section refinement
  std::vector<Point> v(m);
  for (int j = 0; j < m; ++j) v[j] = pt(j);
  double len = detail::polyline_length(v);
  const double gr = 0.5 * (std::sqrt(5.0) - 1);
  for (int sweep = 0; sweep < 10000; ++sweep) {
    for (int j = 1; j + 1 < m; ++j) {
      if (hi[j] <= lo[j]) continue;
      // bracket around the current value, one DP cell wide on each side
      double cell = (hi[j] - lo[j]) / (K - 1);
      double a = std::max(lo[j], t[j] - 2 * cell), b = std::min(hi[j], t[j] + 2 * cell);
      double c = b - gr * (b - a), d = a + gr * (b - a);
      double fc = local(j, c), fd = local(j, d);
      for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(t[j])); ++it) {
        if (fc < fd) {
          b = d, d = c, fd = fc;
          c = b - gr * (b - a);
          fc = local(j, c);
        } else {
          a = c, c = d, fc = fd;
          d = a + gr * (b - a);
          fd = local(j, d);
        }
      }
      double cand = 0.5 * (a + b);
      for (double e : {lo[j], hi[j], cand})
        if (local(j, e) < local(j, t[j])) t[j] = e;
    }
    for (int j = 0; j < m; ++j) v[j] = pt(j);
    double nl = detail::polyline_length(v);
    mc.sweeps = sweep + 1;
    bool done = len - nl < 1e-10;
    len = nl;
    if (done) break;
  }

  mc.vertices = v;
  mc.radii = radii;
  mc.angles = t;
  mc.length = len;
  for (int j = 0; j + 1 < m; ++j) {
    Point d = v[j + 1] - v[j];
    double L = std::abs(d);
    Point tau = L > 0 ? d / L : Point(1, 0);
    mc.tau.push_back(tau);
    mc.upsilon.push_back(Point(0, 1) * tau);
  }
  // corner rule: straight through interior arc points, turning toward the arc at end points
  for (int j = 1; j + 1 < m; ++j) {
    double turn = std::arg(mc.tau[j] / mc.tau[j - 1]);
    const double tol_ang = 1e-9 * std::max(1.0, std::abs(t[j]));
    bool at_lo = t[j] - lo[j] <= tol_ang, at_hi = hi[j] - t[j] <= tol_ang;
    if (hi[j] <= lo[j] || (!at_lo && !at_hi)) {
      mc.kkt_max_interior_angle = std::max(mc.kkt_max_interior_angle, std::abs(turn));
      if (std::abs(turn) > 1e-6) mc.kkt_ok = false;
    } else if (std::abs(turn) > 1e-6) {
      ++mc.corner_count;
      if (at_hi && turn < 0) mc.kkt_ok = false;
      if (at_lo && turn > 0) mc.kkt_ok = false;
    }
  }
  return mc;
}

inline MinimalCurve minimal_curve(const InterfaceGraph& ig, int K = 65) {
  const int n1 = int(ig.levels.size());
  std::vector<double> radii, lo, hi;
  std::vector<int> lev;
  for (int k = 1; k < n1; ++k) {
    const auto& L = ig.levels[k];
    radii.push_back(L.r);
    bool end = k == 1 || k == n1 - 1;
    lo.push_back(end ? L.theta : L.p_minus);
    hi.push_back(end ? L.theta : L.p_plus);
    lev.push_back(k);
  }
  auto mc = minimal_curve_arcs(radii, lo, hi, K);
  mc.level = lev;
  return mc;
}

inline double length_excess(const MinimalCurve& mc, double R) { return mc.length - R; }

// Confinement constant: max_j |theta(gamma_j) - theta(gamma_last)| sqrt(r_j).
inline double confinement_constant(const MinimalCurve& mc) {
  double c = 0;
  const double last = mc.angles.back();
  for (std::size_t j = 0; j < mc.angles.size(); ++j) c = std::max(c, std::abs(mc.angles[j] - last) * std::sqrt(mc.radii[j]));
  return c;
}

// ---------------------------------------------------------------- transverse profile

struct TransverseRow {
  double r = 0;
  double ds = 0;
  double Jstar = 0;
  double delta_minus = 0, delta_plus = 0;
  double bound = 0;
  bool bound_checked = false;
  bool bound_ok = true;
  double half_minus = 0, half_plus = 0;  // extents along the normal
};

struct TransverseReport {
  std::vector<TransverseRow> rows;
  double integral = 0;  // layers * sum J* ds
  double total_energy = 0;
  bool energy_ok = false;
  int bound_checks = 0;
  int bound_violations = 0;
  int skipped = 0;
  bool disjoint = true;
  std::vector<std::string> warnings;
};

inline double segment_energy_1d(const Potential& p, const EquivariantField& f, Point x0, Point x1, int samples) {
  const double hs = std::abs(x1 - x0) / samples;
  if (!(hs > 0)) return 0.0;
  long double e = 0;
  Point prev = f.sample_xy(x0);
  e += 0.5 * hs * p.value(prev);
  for (int k = 1; k <= samples; ++k) {
    Point cur = f.sample_xy(x0 + (x1 - x0) * (double(k) / samples));
    e += 0.5 * std::norm(cur - prev) / hs + (k == samples ? 0.5 : 1.0) * hs * p.value(cur);
    prev = cur;
  }
  return double(e);
}

namespace detail {

// Smallest t > 0 where x + t n leaves the cell bounded by the segments [pm, qm], [pp, qp]
// and the arcs of radius r0 (angles [a0, a1]) and r1 (angles [b0, b1]). NaN when nothing is hit.
inline double cell_exit(Point x, Point n, Point pm, Point qm, Point pp, Point qp, double r0, double a0, double a1,
                        double r1, double b0, double b1) {
  double best = std::numeric_limits<double>::infinity();
  auto seg = [&](Point b0p, Point b1p) {
    Point e = b1p - b0p;
    double den = cross(n, e);
    if (std::abs(den) < 1e-14) return;
    double t = cross(b0p - x, e) / den;
    double s = cross(b0p - x, n) / den;
    if (t > 1e-12 && s >= -1e-12 && s <= 1 + 1e-12) best = std::min(best, t);
  };
  auto arc = [&](double r, double lo, double hi, double ref) {
    // |x + t n|^2 = r^2 with |n| = 1
    double bq = (x * std::conj(n)).real();
    double disc = bq * bq - (std::norm(x) - r * r);
    if (disc < 0) return;
    for (double t : {-bq - std::sqrt(disc), -bq + std::sqrt(disc)}) {
      if (!(t > 1e-12)) continue;
      double th = ref + std::remainder(std::arg(x + t * n) - ref, 2 * std::numbers::pi);
      if (th >= lo - 1e-12 && th <= hi + 1e-12) best = std::min(best, t);
    }
  };
  seg(pm, qm);
  seg(pp, qp);
  arc(r0, a0, a1, 0.5 * (a0 + a1));
  arc(r1, b0, b1, 0.5 * (b0 + b1));
  return std::isfinite(best) ? best : std::numeric_limits<double>::quiet_NaN();
}

inline int nearest_well(const std::vector<Point>& wells, Point z, double* dist = nullptr) {
  int best = 0;
  double d = 1e300;
  for (int j = 0; j < int(wells.size()); ++j)
    if (std::abs(z - wells[j]) < d) d = std::abs(z - wells[j]), best = j;
  if (dist) *dist = d;
  return best;
}

}  // namespace detail

inline TransverseReport transverse_profile(const Potential& p, const EquivariantField& f, const MinimalCurve& mc,
                                           const InterfaceGraph& ig, const AnalysisParams& prm,
                                           int per_segment = 8, double bound_tolerance = 0.01) {
  TransverseReport rep;
  const double res = std::min(f.grid.dr(), f.grid.R * f.grid.dtheta());
  for (std::size_t s = 0; s + 1 < mc.vertices.size(); ++s) {
    const int k = mc.level[s];  // cell between levels k and k+1
    const auto& A = ig.levels[k];
    const auto& B = ig.levels[k + 1];
    Point pm = InterfaceGraph::at(A.r, A.p_minus), pp = InterfaceGraph::at(A.r, A.p_plus);
    Point qm = InterfaceGraph::at(B.r, B.q_minus), qp = InterfaceGraph::at(B.r, B.q_plus);
    Point x0 = mc.vertices[s], x1 = mc.vertices[s + 1];
    Point n = mc.upsilon[s];
    double seg = std::abs(x1 - x0);
    std::vector<double> offsets;
    for (int q = 0; q < per_segment; ++q) {
      Point x = x0 + (x1 - x0) * ((q + 0.5) / per_segment);
      double tp = detail::cell_exit(x, n, pm, qm, pp, qp, A.r, A.p_minus, A.p_plus, B.r, B.q_minus, B.q_plus);
      double tm = -detail::cell_exit(x, -n, pm, qm, pp, qp, A.r, A.p_minus, A.p_plus, B.r, B.q_minus, B.q_plus);
      if (!(tp > 0) || !(tm < 0)) {
        ++rep.skipped;
        rep.warnings.push_back("degenerate transverse segment at r=" + std::to_string(std::abs(x)));
        continue;
      }
      TransverseRow row;
      row.r = std::abs(x);
      row.ds = seg / per_segment;
      row.half_minus = tm;
      row.half_plus = tp;
      Point a = x + tm * n, b = x + tp * n;
      int samples = std::max(64, int(std::ceil(std::abs(b - a) / (0.25 * res))));
      row.Jstar = segment_energy_1d(p, f, a, b, samples);
      int wm = detail::nearest_well(prm.wells, f.sample_xy(a), &row.delta_minus);
      int wp = detail::nearest_well(prm.wells, f.sample_xy(b), &row.delta_plus);
      double cap = std::min(prm.delta_prime, prm.delta_W);
      if (wm != wp && row.delta_minus <= cap && row.delta_plus <= cap) {
        row.bound = segment_lower_bound(prm.sigma, prm.C_W, row.delta_minus, row.delta_plus);
        row.bound_checked = true;
        row.bound_ok = row.Jstar >= row.bound - bound_tolerance * prm.sigma;
        ++rep.bound_checks;
        if (!row.bound_ok) ++rep.bound_violations;
      }
      offsets.push_back(((x - x0) * std::conj(mc.tau[s])).real());
      rep.integral += prm.layers * row.Jstar * row.ds;
      rep.rows.push_back(row);
    }
    // parallel normals at distinct offsets never meet
    for (std::size_t i = 1; i < offsets.size(); ++i)
      if (!(offsets[i] > offsets[i - 1])) rep.disjoint = false;
  }
  rep.total_energy = total_energy(p, f);
  rep.energy_ok = rep.integral <= 1.05 * rep.total_energy;
  return rep;
}

// ---------------------------------------------------------------- decay

struct DecayRegion {
  double C_ring = 0;
  double r_ring = 0;
  double sector = 0;
};

// Distance from x to the boundary of Q = {r > r_ring, C/sqrt(r) < theta < sector - C/sqrt(r)}.
inline double distance_to_region_boundary(Point x, const DecayRegion& q, double r_max) {
  const double C = q.C_ring, S = q.sector, r0 = q.r_ring;
  auto curve = [&](double rho, int side) {
    double th = C / std::sqrt(rho);
    return std::polar(rho, side == 0 ? th : S - th);
  };
  double best = 1e300;
  for (int side = 0; side < 2; ++side) {
    const int M = 96;
    double hi = std::max(2 * r_max, r0 * 2 + 1);
    auto dist = [&](double rho) { return std::abs(x - curve(rho, side)); };
    int bi = 0;
    double bd = 1e300;
    for (int i = 0; i <= M; ++i) {
      double rho = r0 + (hi - r0) * i / M;
      double d = dist(rho);
      if (d < bd) bd = d, bi = i;
    }
    double a = r0 + (hi - r0) * std::max(0, bi - 1) / M, b = r0 + (hi - r0) * std::min(M, bi + 1) / M;
    const double gr = 0.5 * (std::sqrt(5.0) - 1);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = dist(c), fd = dist(d);
    for (int it = 0; it < 80; ++it) {
      if (fc < fd) b = d, d = c, fd = fc, c = b - gr * (b - a), fc = dist(c);
      else a = c, c = d, fc = fd, d = a + gr * (b - a), fd = dist(d);
    }
    best = std::min({best, bd, fc, fd});
  }
  // inner arc r = r0 between the two curves
  double t0 = C / std::sqrt(std::max(r0, 1e-300)), t1 = S - t0;
  double th = std::arg(x);
  if (th < 0) th += 2 * std::numbers::pi;
  if (th >= t0 && th <= t1) best = std::min(best, std::abs(std::abs(x) - r0));
  else best = std::min({best, std::abs(x - std::polar(r0, t0)), std::abs(x - std::polar(r0, t1))});
  return best;
}

inline DecayRegion decay_region(const MinimalCurve& mc, int layers) {
  DecayRegion q;
  q.C_ring = confinement_constant(mc);
  q.r_ring = std::pow(q.C_ring * layers, 2) / (std::numbers::pi * std::numbers::pi);
  q.sector = 2 * std::numbers::pi / layers;
  return q;
}

inline bool in_region(double r, double theta, const DecayRegion& q) {
  if (!(r > q.r_ring)) return false;
  double w = q.C_ring / std::sqrt(r);
  return theta > w && theta < q.sector - w;
}

struct DecayFit {
  double C_ring = 0, r_ring = 0;
  double K = 0, k = 0, rms = 0;
  int count = 0;
  int well = 0;
};

inline DecayFit decay_fit(const EquivariantField& f, const std::vector<Point>& wells, const DecayRegion& q,
                          std::optional<int> well = {}) {
  const auto& g = f.grid;
  DecayFit out;
  out.C_ring = q.C_ring;
  out.r_ring = q.r_ring;
  if (well) {
    out.well = *well;
  } else {
    Point probe = f.sample(g.radius(g.n_r - 1), 0.5 * g.sector_angle());
    out.well = detail::nearest_well(wells, probe);
  }
  const Point w = wells[out.well];
  std::vector<double> xs, ys;
  for (int i = 0; i < g.n_r; ++i) {
    double r = g.radius(i);
    for (int j = 0; j < g.n_theta; ++j) {
      double th = g.angle(j);
      if (!in_region(r, th, q)) continue;
      double dev = std::abs(f(i, j) - w);
      if (!(dev > 1e-12)) continue;
      xs.push_back(distance_to_region_boundary(std::polar(r, th), q, g.R));
      ys.push_back(std::log(dev));
    }
  }
  out.count = int(xs.size());
  if (out.count < 30) throw InsufficientDataError("decay fit has " + std::to_string(out.count) + " usable nodes (< 30)");
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sx += xs[i], sy += ys[i], sxx += xs[i] * xs[i], sxy += xs[i] * ys[i];
  const long double n = xs.size();
  long double den = n * sxx - sx * sx;
  if (!(std::abs(double(den)) > 0)) throw InsufficientDataError("decay fit distances are degenerate");
  double slope = double((n * sxy - sx * sy) / den);
  double icpt = double((sy - slope * sx) / n);
  out.k = -slope;
  out.K = std::exp(icpt);
  long double ss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double e = ys[i] - (icpt + slope * xs[i]);
    ss += e * e;
  }
  out.rms = std::sqrt(double(ss / n));
  return out;
}

// ---------------------------------------------------------------- pointwise estimate

struct PointwiseResult {
  bool hypothesis = false;
  bool conclusion = true;
  int well = 0;
  double deviation = 0;
};

struct PointwiseReport {
  int samples = 0;
  int tested = 0;
  int violations = 0;
  double l = 0;
  double max_deviation_tested = 0;
};

// Full-disk node (i, jf) with jf in [0, layers * n_theta).
inline PointwiseResult pointwise_at(const EquivariantField& f, const SigmaSet& s, const AnalysisParams& prm, double l,
                                    int i0, long jf0) {
  const auto& g = f.grid;
  PointwiseResult out;
  const Point x0 = std::polar(g.radius(i0), g.angle(0) + jf0 * g.dtheta());
  const Point u0 = f.at(i0, jf0);
  out.well = detail::nearest_well(prm.wells, u0, &out.deviation);
  const Point w = prm.wells[out.well];
  const long total = long(g.layers) * g.n_theta;
  bool seen = false;
  for (int i = 0; i < g.n_r; ++i) {
    double r = g.radius(i);
    if (std::abs(r - std::abs(x0)) > l) continue;
    if (s.row_flag.size() == std::size_t(g.n_r) && s.row_flag[i]) continue;
    // angular window containing the ball
    double th0 = std::arg(x0);
    double span = r > l ? std::asin(l / r) + 2 * g.dtheta() : std::numbers::pi;
    long jc = std::lround(th0 / g.dtheta());
    long js = long(std::ceil(span / g.dtheta()));
    for (long dj = -js; dj <= js; ++dj) {
      long jf = jc + dj;
      Point x = std::polar(r, jf * g.dtheta());
      if (std::abs(x - x0) > l) continue;
      long jm = ((jf % total) + total) % total;
      seen = true;
      if (std::abs(f.at(i, jm) - w) > prm.delta_prime) return out;  // hypothesis fails
    }
  }
  out.hypothesis = seen;
  if (out.hypothesis) out.conclusion = out.deviation <= 2 * prm.delta;
  return out;
}

inline double default_pointwise_radius(const EquivariantField& f, const AnalysisParams& prm) {
  const auto& g = f.grid;
  double res = std::max(g.dr(), g.R * g.dtheta());
  double decay = 2 * std::log(prm.delta_prime / (2 * prm.delta)) / prm.c_W;
  return std::max(4 * res, decay);
}

inline PointwiseReport pointwise_check(const EquivariantField& f, const SigmaSet& s, const AnalysisParams& prm, double l,
                                       int sample_count, std::uint64_t seed = 12345) {
  const auto& g = f.grid;
  if (l < 4 * std::min(g.dr(), g.R * g.dtheta())) throw ParameterError("pointwise radius l below 4 grid cells");
  PointwiseReport rep;
  rep.l = l;
  std::vector<int> rows;
  for (int i = 0; i < g.n_r; ++i)
    if (g.radius(i) >= prm.r_delta + l) rows.push_back(i);
  if (rows.empty()) return rep;
  std::mt19937_64 rng(seed);
  const long total = long(g.layers) * g.n_theta;
  std::uniform_int_distribution<std::size_t> pick_row(0, rows.size() - 1);
  std::uniform_int_distribution<long> pick_col(0, total - 1);
  for (int k = 0; k < sample_count; ++k) {
    int i = rows[pick_row(rng)];
    long j = pick_col(rng);
    ++rep.samples;
    auto res = pointwise_at(f, s, prm, l, i, j);
    if (!res.hypothesis) continue;
    ++rep.tested;
    rep.max_deviation_tested = std::max(rep.max_deviation_tested, res.deviation);
    if (!res.conclusion) ++rep.violations;
  }
  return rep;
}

}  // namespace nj
