#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <njunction/analysis.hpp>

using namespace nj;
using Catch::Approx;

namespace {

struct World {
  Potential p = Potential::complex_well(3);
  PotentialConstants k = estimate_constants(p);
  HeteroclinicProfile pr = solve_heteroclinic(p, 8, 4000, 1e-9);
  AnalysisParams prm = make_analysis_params(p, k, pr.sigma);
};

const World& world() {
  static const World w;
  return w;
}

// Test map on a disk of radius 80 with everything downstream of it.
struct Chain {
  EquivariantField f;
  SigmaSet s;
  ThetaMap tm;
  double c_hat = 0, beta = 0;
  InterfaceGraph ig;
  MinimalCurve mc;

  explicit Chain(const EquivariantField& field) : f(field) {
    const auto& w = world();
    s = detect_sigma(w.p, f, w.prm);
    tm = theta_map(f, s, w.prm);
    c_hat = measured_c_hat(radial_kinetic(f), w.prm);
    beta = lipschitz_beta(c_hat, w.prm.layers);
    InterfaceOptions o;
    o.kbar = w.k.c_W * std::numbers::pi / w.p.layers();
    ig = build_interface(f, tm, s, w.prm, c_hat, beta, o);
    mc = minimal_curve(ig);
  }
};

const Chain& test_chain() {
  static const Chain c(build_test_function(world().p, world().pr, PolarGrid(80, 320, 768, 3)));
  return c;
}

// Layered shortest path over dense arc samples, written out independently of the library.
double dense_chain_length(const std::vector<double>& r, const std::vector<double>& lo, const std::vector<double>& hi,
                          int K) {
  std::vector<double> prev_cost{0.0}, prev_ang{lo[0]};
  for (std::size_t j = 1; j < r.size(); ++j) {
    int kk = hi[j] > lo[j] ? K : 1;
    std::vector<double> ang(kk), cost(kk, 1e300);
    for (int q = 0; q < kk; ++q) ang[q] = kk == 1 ? lo[j] : lo[j] + (hi[j] - lo[j]) * q / (kk - 1);
    for (int q = 0; q < kk; ++q) {
      double x = r[j] * std::cos(ang[q]), y = r[j] * std::sin(ang[q]);
      for (std::size_t a = 0; a < prev_ang.size(); ++a) {
        double px = r[j - 1] * std::cos(prev_ang[a]), py = r[j - 1] * std::sin(prev_ang[a]);
        cost[q] = std::min(cost[q], prev_cost[a] + std::hypot(x - px, y - py));
      }
    }
    prev_cost = cost;
    prev_ang = ang;
  }
  return *std::min_element(prev_cost.begin(), prev_cost.end());
}

// Distance to the boundary of Q by dense sampling of its three pieces.
double brute_distance(Point x, const DecayRegion& q, double r_max, int M = 200000) {
  double best = 1e300;
  const double hi = std::max(2 * r_max, 2 * q.r_ring + 1);
  for (int i = 0; i <= M; ++i) {
    double rho = q.r_ring + (hi - q.r_ring) * i / double(M);
    double t = q.C_ring / std::sqrt(rho);
    best = std::min({best, std::abs(x - std::polar(rho, t)), std::abs(x - std::polar(rho, q.sector - t))});
  }
  double t0 = q.C_ring / std::sqrt(q.r_ring);
  for (int i = 0; i <= 20000; ++i) {
    double t = t0 + (q.sector - 2 * t0) * i / 20000.0;
    best = std::min(best, std::abs(x - std::polar(q.r_ring, t)));
  }
  return best;
}

}  // namespace

TEST_CASE("zero field is entirely bad") {
  const auto& w = world();
  PolarGrid g(20, 40, 48, 3);
  auto f = make_field(w.p, g);
  auto s = detect_sigma(w.p, f, w.prm);
  CHECK(s.count() == g.n_r);
  CHECK(s.measure == Approx(g.R - w.prm.r_delta));
  for (const auto& c : s.classes) CHECK(c.tag == FiberTag::V1);
  CHECK(theta_map(f, s, w.prm).entries.empty());
  CHECK_THROWS_AS(build_interface(f, theta_map(f, s, w.prm), s, w.prm, 1, 0.5), ConstructionError);
}

TEST_CASE("test map is mostly structured with its layer on the zero ray") {
  const auto& c = test_chain();
  CHECK(c.s.measure / (c.f.grid.R - world().prm.r_delta) < 0.2);
  CHECK(c.s.measure == Approx(c.s.dr * c.s.count()));
  REQUIRE(c.tm.entries.size() > 100);
  for (const auto& e : c.tm.entries) {
    CHECK(e.theta >= 0);
    CHECK(e.theta < c.tm.sector);
    CHECK(std::abs(circular_diff(e.theta, 0, c.tm.sector)) <= 2 * c.tm.dtheta);
    CHECK(e.half_width == Approx(c.tm.nu_used / (2 * e.r)));
  }
  // recomputation is idempotent
  auto again = detect_sigma(world().p, c.f, world().prm);
  CHECK(again.flags == c.s.flags);
}

TEST_CASE("theta map is covariant under domain rotation") {
  const auto& w = world();
  const auto& c = test_chain();
  for (long k : {5L, 64L, 767L}) {
    auto g = rotate_cells(c.f, k);
    auto s = detect_sigma(w.p, g, w.prm);
    auto tm = theta_map(g, s, w.prm);
    REQUIRE(s.flags == c.s.flags);
    REQUIRE(tm.entries.size() == c.tm.entries.size());
    for (std::size_t i = 0; i < tm.entries.size(); ++i) {
      double expect = c.tm.entries[i].theta - k * c.tm.dtheta;
      CHECK(std::abs(circular_diff(tm.entries[i].theta, expect, tm.sector)) < 1e-9);
    }
    // the gauge shift undoes the rotation
    CHECK(((gauge_shift(tm) - gauge_shift(c.tm) + k) % 768 + 768) % 768 == 0);
  }
}

TEST_CASE("Lipschitz check on synthetic maps") {
  ThetaMap tm;
  tm.sector = 2 * std::numbers::pi / 3;
  tm.dtheta = tm.sector / 192;
  tm.nu_used = 1.0;
  for (int i = 0; i < 200; ++i) {
    ThetaEntry e;
    e.row = i;
    e.r = 20 + 0.25 * i;
    e.theta = 0.3;
    e.half_width = tm.nu_used / (2 * e.r);
    tm.entries.push_back(e);
  }
  auto rep = lipschitz_violations(tm, 0.01, 0.2);
  CHECK(rep.pairs_checked > 0);
  CHECK(rep.violations.empty());
  CHECK(rep.cap_violations == 0);

  auto jump = tm;
  for (std::size_t i = 100; i < jump.entries.size(); ++i) jump.entries[i].theta += std::numbers::pi / 6;
  auto bad = lipschitz_violations(jump, 0.01, 0.2);
  REQUIRE_FALSE(bad.violations.empty());
  for (const auto& v : bad.violations) {
    CHECK(v.diff == Approx(std::numbers::pi / 6));
    CHECK(v.diff > v.bound);
  }
  // a large c_hat absorbs the same jump
  CHECK(lipschitz_violations(jump, 100, 0.2).violations.empty());

  CHECK(lipschitz_beta(0, 3) == 0.5);
  CHECK(lipschitz_beta(10, 3) == Approx(1 - std::exp(-std::numbers::pi / 60)));
  CHECK(sigma_bound_constant(1, 2, 3, 4, 5) == Approx(2 + 2 + 60));
}

TEST_CASE("interface on the test map") {
  const auto& c = test_chain();
  const auto& ig = c.ig;
  REQUIRE(ig.cells() >= 3);
  CHECK(ig.pq_ok);
  for (std::size_t k = 1; k < ig.levels.size(); ++k) {
    CHECK(ig.levels[k].r > ig.levels[k - 1].r);
    CHECK(ig.levels[k].q_plus > ig.levels[k].p_plus);
  }
  // concentric cells around theta = 0
  for (const auto& L : ig.levels) {
    CHECK(std::abs(L.theta) <= 2 * ig.dtheta);
    CHECK(L.p_plus + L.p_minus == Approx(2 * L.theta).margin(1e-12));
    CHECK(L.mu >= 0);
    CHECK(L.mu <= c.s.measure + ig.dr);
  }
  REQUIRE(ig.width_ratio.size() >= 3);
  CHECK(ig.width_ratio.back() < ig.width_ratio.front());
  CHECK(ig.c0 > 0);
  CHECK(ig.C0 >= ig.c0);
}

TEST_CASE("straight and offset minimal curves") {
  std::vector<double> r = {9, 16, 25, 36, 49}, lo = {0, -0.1, -0.05, -0.03, 0}, hi = {0, 0.1, 0.05, 0.03, 0};
  auto mc = minimal_curve_arcs(r, lo, hi);
  CHECK(mc.length == Approx(49 - 9).margin(1e-9));
  CHECK(mc.kkt_ok);
  CHECK(mc.corner_count == 0);
  CHECK(length_excess(mc, 50) == Approx(-10).margin(1e-8));
  for (std::size_t j = 0; j < mc.angles.size(); ++j) {
    CHECK(mc.angles[j] >= lo[j] - 1e-15);
    CHECK(mc.angles[j] <= hi[j] + 1e-15);
  }

  auto lo2 = lo, hi2 = hi;
  lo2[2] = 0.2, hi2[2] = 0.3;
  auto off = minimal_curve_arcs(r, lo2, hi2);
  CHECK(off.length > 49 - 9 + 1e-3);
  CHECK(off.angles[2] == Approx(0.2));
  CHECK(off.corner_count >= 1);
  CHECK(off.kkt_ok);
  CHECK_THROWS_AS(minimal_curve_arcs(r, lo, hi, 64), ParameterError);
}

TEST_CASE("minimal curve against a dense layered search") {
  std::vector<double> r = {10, 14, 19, 25, 32}, lo = {0.02, -0.08, 0.03, -0.06, -0.02}, hi = {0.02, 0.02, 0.12, 0.0, -0.02};
  auto mc = minimal_curve_arcs(r, lo, hi, 65);
  double dense = dense_chain_length(r, lo, hi, 1025);
  CHECK(mc.length <= dense + 1e-12);
  CHECK(dense - mc.length < 1e-6);
  auto mc2 = minimal_curve_arcs(r, lo, hi, 130);
  CHECK(std::abs(mc2.length - mc.length) < 1e-6 * mc.length);
  CHECK(mc.kkt_ok);
}

TEST_CASE("minimal curve on the test map interface") {
  const auto& c = test_chain();
  const auto& mc = c.mc;
  CHECK(mc.kkt_ok);
  CHECK(mc.length >= mc.radii.back() - mc.radii.front() - 1e-12);
  auto mc2 = minimal_curve(c.ig, 130);
  CHECK(std::abs(mc2.length - mc.length) < 1e-6 * mc.length);
  // nearly straight: excess close to minus the first vertex radius
  CHECK(length_excess(mc, c.f.grid.R) == Approx(-mc.radii.front() - (c.f.grid.R - mc.radii.back())).margin(0.05));
  CHECK(std::isfinite(confinement_constant(mc)));
}

TEST_CASE("transverse profile of the test map") {
  const auto& w = world();
  const auto& c = test_chain();
  auto tr = transverse_profile(w.p, c.f, c.mc, c.ig, w.prm);
  CHECK(tr.skipped == 0);
  CHECK(tr.disjoint);
  CHECK(tr.energy_ok);
  CHECK(tr.bound_violations == 0);
  int far = 0;
  for (const auto& row : tr.rows)
    if (row.r >= 40) {
      ++far;
      CHECK(row.Jstar == Approx(w.pr.sigma).epsilon(0.02));
    }
  CHECK(far > 0);

  // constant a on the whole disk, so the seam identification is switched off
  auto a = make_field(w.p, c.f.grid, w.p.a());
  a.omega = 1.0;
  auto tz = transverse_profile(w.p, a, c.mc, c.ig, w.prm);
  for (const auto& row : tz.rows) CHECK(row.Jstar == 0.0);
}

TEST_CASE("region distance agrees with dense sampling") {
  DecayRegion q;
  q.C_ring = 1.2;
  q.r_ring = std::pow(q.C_ring * 3, 2) / (std::numbers::pi * std::numbers::pi);
  q.sector = 2 * std::numbers::pi / 3;
  for (Point x : {std::polar(5.0, 1.0), std::polar(12.0, 0.5), std::polar(3.0, 2.0), std::polar(18.0, 1.9)})
    CHECK(distance_to_region_boundary(x, q, 20) == Approx(brute_distance(x, q, 20)).margin(1e-3));
}

TEST_CASE("decay fit recovers a planted rate") {
  const auto& w = world();
  PolarGrid g(20, 80, 96, 3);
  DecayRegion q;
  q.C_ring = 1.0;
  q.r_ring = std::pow(q.C_ring * 3, 2) / (std::numbers::pi * std::numbers::pi);
  q.sector = g.sector_angle();
  auto f = make_field(w.p, g, w.p.a());
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j) {
      Point x = std::polar(g.radius(i), g.angle(j));
      double d = brute_distance(x, q, g.R, 8000);
      f(i, j) = w.p.a() + 0.1 * std::exp(-0.7 * d) * Point(0.6, 0.8);
    }
  auto fit = decay_fit(f, w.p.wells(), q, 0);
  CHECK(fit.k == Approx(0.7).margin(0.02));
  CHECK(fit.K == Approx(0.1).epsilon(0.05));
  CHECK(fit.count >= 30);
  CHECK(fit.rms < 0.05);

  auto flat = make_field(w.p, g, w.p.a());
  CHECK_THROWS_AS(decay_fit(flat, w.p.wells(), q, 0), InsufficientDataError);
}

TEST_CASE("pointwise estimate gating") {
  const auto& w = world();
  const auto& c = test_chain();
  const auto& g = c.f.grid;
  const double l = default_pointwise_radius(c.f, w.prm);
  const int i = g.n_r - 40;
  // bisector of the first full-disk sector: deep in a well region
  auto deep = pointwise_at(c.f, c.s, w.prm, l, i, g.n_theta / 2);
  CHECK(deep.hypothesis);
  CHECK(deep.conclusion);
  // on the interface ray the ball meets the layer
  auto ray = pointwise_at(c.f, c.s, w.prm, l, i, 0);
  CHECK_FALSE(ray.hypothesis);
  auto rep = pointwise_check(c.f, c.s, w.prm, l, 200);
  CHECK(rep.samples == 200);
  CHECK(rep.tested > 0);
  CHECK(rep.violations == 0);
  CHECK_THROWS_AS(pointwise_check(c.f, c.s, w.prm, 0.5 * g.dr(), 10), ParameterError);
}

TEST_CASE("Sigma and length excess do not depend on the rotation gauge") {
  const auto& c = test_chain();
  for (long k : {11L, 70L}) {
    Chain r(rotate_cells(c.f, k));
    CHECK(r.s.measure == c.s.measure);
    CHECK(length_excess(r.mc, r.f.grid.R) == Approx(length_excess(c.mc, c.f.grid.R)).margin(1e-6));
  }
}
