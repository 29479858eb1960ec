#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "analysis.hpp"
#include "config.hpp"
#include "connect1d.hpp"
#include "disk2d.hpp"
#include "errors.hpp"
#include "fiber.hpp"
#include "potential.hpp"

namespace nj {

namespace fs = std::filesystem;

// Error raised by run(): keeps the exit code of the failure and names the stage.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& cause)
      : Error("stage '" + stage + "': " + cause.what()), code_(cause.exit_code()), stage_(stage) {}
  int exit_code() const noexcept override { return code_; }
  const std::string& stage() const { return stage_; }

 private:
  int code_;
  std::string stage_;
};

inline std::string fmt_g(double v, int prec = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

inline int worker_count() {
  int n = int(std::thread::hardware_concurrency());
  if (const char* e = std::getenv("NJ_THREADS")) {
    int v = std::atoi(e);
    if (v > 0) n = v;
  }
  return std::max(1, n);
}

// Window half-length giving about 30 decay lengths on each side of the layer.
inline double default_half_length(const Potential& p) {
  auto [lmin, lmax] = detail::sym_eigs(detail::hessian(p, p.a()));
  (void)lmax;
  return 30.0 / std::sqrt(lmin);
}

// ---------------------------------------------------------------- shared state

struct Context {
  RunConfig cfg;
  Potential p = Potential::scalar_bistable();
  PotentialConstants k;
  HeteroclinicProfile pr;
  AnalysisParams prm;
};

inline Context prepare(const RunConfig& cfg) {
  Context c;
  c.cfg = cfg;
  c.p = cfg.potential.build();
  c.k = estimate_constants(c.p, cfg.potential.estimate_options());
  double L = cfg.hetero.L ? *cfg.hetero.L : default_half_length(c.p);
  c.pr = solve_heteroclinic(c.p, L, cfg.hetero.n, cfg.hetero.tol);
  const auto& A = cfg.analysis;
  c.prm = make_analysis_params(c.p, c.k, c.pr.sigma, A.delta, A.alpha, A.alpha_prime, A.r_delta);
  return c;
}

// ---------------------------------------------------------------- profile

inline void write_profile_csv(const fs::path& path, const HeteroclinicProfile& pr, int m) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "s,u1,u2\n";
  for (int i = 0; i <= pr.intervals(); ++i) {
    os << fmt_g(pr.s(i)) << ',' << fmt_g(pr.u[i].real()) << ',';
    if (m == 2) os << fmt_g(pr.u[i].imag());
    os << '\n';
  }
}

inline json profile_json(const HeteroclinicProfile& pr) {
  return {{"sigma", pr.sigma},         {"energy", pr.energy},   {"residual", pr.residual},
          {"tail_rate", pr.tail_rate}, {"equipartition", pr.equipartition},
          {"L", pr.half_length},       {"n", pr.intervals()},   {"iterations", pr.iterations},
          {"monotone", pr.monotone}};
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- fibers

inline std::vector<double> default_fiber_radii(const Context& c) {
  double r0 = std::ceil(seed_threshold_radius(c.pr, c.p, c.k)) + 1;
  return {r0, r0 + 1, r0 + 2, r0 + 3, r0 + 4};
}

inline FiberGapTable run_fibers(const Context& c, std::vector<double> radii) {
  if (radii.empty()) radii = default_fiber_radii(c);
  return fiber_gap(c.p, c.pr, c.k, radii, c.prm, c.cfg.fiber.tol, c.cfg.fiber.n_arc);
}

inline void write_fibers_csv(const fs::path& path, const FiberGapTable& t) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "r,J_r,gap,class,theta_r,s_transition\n";
  for (const auto& r : t.rows)
    os << fmt_g(r.r) << ',' << fmt_g(r.J) << ',' << fmt_g(r.gap) << ',' << to_string(r.cls.tag) << ','
       << fmt_g(r.cls.theta_r) << ',' << fmt_g(r.cls.s_transition) << '\n';
}

// ---------------------------------------------------------------- disk

inline EquivariantField initial_field(const Context& c, const PolarGrid& g, const std::string& init) {
  if (init == "test")
    return build_test_function(c.p, c.pr, g, c.cfg.solver.core_radius ? *c.cfg.solver.core_radius : -1.0);
  if (init == "zero") return make_field(c.p, g);
  if (init.rfind("file:", 0) == 0) {
    auto f = read_field(c.cfg.resolve(init.substr(5)).string());
    if (!(f.grid == g)) throw ConfigError("init field grid does not match the requested grid");
    if (f.m != c.p.dim()) throw ConfigError("init field dimension does not match the potential");
    return f;
  }
  throw ConfigError("unknown init '" + init + "'");
}

inline EquivariantField solve_disk(const Context& c, double R, SolveReport* rep = nullptr,
                                   std::optional<std::string> init = {}) {
  PolarGrid g(R, c.cfg.grid.n_r, c.cfg.grid.n_theta, c.p.layers());
  auto u0 = initial_field(c, g, init ? *init : c.cfg.solver.init);
  return minimize_disk(c.p, u0, c.cfg.solver.tol, c.cfg.solver.max_iter, rep);
}

// ---------------------------------------------------------------- analysis

struct AnalysisOutcome {
  double R = 0;
  double energy = 0;
  double n_sigma_R = 0;
  double residual = 0;
  double radial_kin = 0;
  long gauge = 0;
  EquivariantField field;  // gauge-rotated
  SigmaSet sigma;
  ThetaMap tmap;
  LipschitzReport lipschitz;
  std::optional<InterfaceGraph> interface;
  std::optional<MinimalCurve> curve;
  std::optional<TransverseReport> transverse;
  std::optional<DecayFit> decay;
  PointwiseReport pointwise;
  std::vector<std::string> errors;
  int soft_exit = 0;  // exit code of the first recorded failure

  double length_excess_value() const {
    return curve ? length_excess(*curve, R) : std::numeric_limits<double>::quiet_NaN();
  }
};

inline AnalysisOutcome analyze_field(const Context& c, const EquivariantField& input) {
  const auto& A = c.cfg.analysis;
  const auto& prm = c.prm;
  AnalysisOutcome out;
  if (input.grid.layers != c.p.layers() || input.m != c.p.dim())
    throw ConfigError("field does not match the configured potential");
  out.R = input.grid.R;
  const BracketMode mode = A.bracket == "nu" ? BracketMode::Nu : BracketMode::Measured;

  auto s0 = detect_sigma(c.p, input, prm);
  auto t0 = theta_map(input, s0, prm, mode);
  out.gauge = gauge_shift(t0);
  out.field = out.gauge ? rotate_cells(input, out.gauge) : input;
  const auto& f = out.field;
  out.energy = total_energy(c.p, f);
  out.n_sigma_R = c.p.layers() * c.pr.sigma * out.R;
  out.residual = el_residual(c.p, f);
  out.radial_kin = radial_kinetic(f);
  out.sigma = detect_sigma(c.p, f, prm);
  out.tmap = theta_map(f, out.sigma, prm, mode);

  auto soft = [&](const Error& e, const std::string& what) {
    out.errors.push_back(what + ": " + e.what());
    if (!out.soft_exit) out.soft_exit = e.exit_code();
    if (A.strict) throw;
  };

  double c_hat = 0, beta = 0.5;
  try {
    c_hat = measured_c_hat(out.radial_kin, prm);
    beta = lipschitz_beta(c_hat, prm.layers);
  } catch (const Error& e) {
    soft(e, "lipschitz");
  }
  out.lipschitz = lipschitz_violations(out.tmap, c_hat, beta);

  try {
    InterfaceOptions io;
    io.c1 = A.c1;
    io.c_tilde = A.c_tilde;
    io.kbar = c.pr.tail_rate;
    out.interface = build_interface(f, out.tmap, out.sigma, prm, c_hat, beta, io);
    out.curve = minimal_curve(*out.interface, A.arc_points);
    out.transverse = transverse_profile(c.p, f, *out.curve, *out.interface, prm);
  } catch (const Error& e) {
    soft(e, "interface");
  }

  try {
    DecayRegion q;
    q.sector = f.grid.sector_angle();
    if (out.curve) q = decay_region(*out.curve, c.p.layers());
    if (A.C_ring) q.C_ring = *A.C_ring;
    q.r_ring = A.r_ring ? *A.r_ring : std::pow(q.C_ring * c.p.layers(), 2) / (std::numbers::pi * std::numbers::pi);
    out.decay = decay_fit(f, prm.wells, q);
  } catch (const Error& e) {
    soft(e, "decay");
  }

  double l = A.pointwise_l ? *A.pointwise_l : default_pointwise_radius(f, prm);
  out.pointwise = pointwise_check(f, out.sigma, prm, l, A.pointwise_samples, A.seed);
  return out;
}

inline json interface_json(const InterfaceGraph& ig, const MinimalCurve* mc) {
  json lv = json::array();
  for (const auto& L : ig.levels)
    lv.push_back({{"r", L.r},
                  {"target", L.target},
                  {"mu", L.mu},
                  {"lambda", L.lambda},
                  {"theta", L.theta},
                  {"p_minus", L.p_minus},
                  {"p_plus", L.p_plus},
                  {"q_minus", L.has_q ? json(L.q_minus) : json(nullptr)},
                  {"q_plus", L.has_q ? json(L.q_plus) : json(nullptr)},
                  {"hat_minus", L.hat_minus},
                  {"hat_plus", L.hat_plus}});
  json j = {{"R", ig.R},
            {"sector", ig.sector},
            {"c1", ig.c1},
            {"c_tilde", ig.c_tilde},
            {"nu", ig.nu},
            {"c_hat", ig.c_hat},
            {"beta", ig.beta},
            {"levels", lv},
            {"constants",
             {{"c0", ig.c0},
              {"C0", ig.C0},
              {"beta_max", ig.beta_max},
              {"spacing_beta_ok", ig.spacing_beta_ok},
              {"pq_ok", ig.pq_ok},
              {"width_ratio", ig.width_ratio}}}};
  if (mc) {
    json v = json::array();
    for (auto z : mc->vertices) v.push_back({z.real(), z.imag()});
    j["curve"] = {{"vertices", v}, {"length", mc->length}, {"kkt_ok", mc->kkt_ok}, {"corners", mc->corner_count}};
  }
  return j;
}

inline void write_theta_map_csv(const fs::path& path, const ThetaMap& tm) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "r,theta,half_width,s_transition\n";
  for (const auto& e : tm.entries)
    os << fmt_g(e.r) << ',' << fmt_g(e.theta) << ',' << fmt_g(e.half_width) << ',' << fmt_g(e.s_transition) << '\n';
}

inline json report_json(const Context& c, const AnalysisOutcome& o) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["R"] = o.R;
  j["grid"] = {{"n_r", o.field.grid.n_r}, {"n_theta", o.field.grid.n_theta}};
  j["energy"] = o.energy;
  j["n_sigma_R"] = o.n_sigma_R;
  j["el_residual"] = o.residual;
  j["radial_kinetic"] = o.radial_kin;
  j["gauge_shift_cells"] = o.gauge;
  j["params"] = {{"delta", c.prm.delta},
                 {"delta_prime", c.prm.delta_prime},
                 {"delta_prime_raw", c.prm.delta_prime_raw},
                 {"nu", c.prm.nu},
                 {"r_delta", c.prm.r_delta},
                 {"r_delta_theory", c.prm.r_delta_theory},
                 {"alpha", c.prm.alpha},
                 {"alpha_prime", c.prm.alpha_prime}};
  j["sigma_measure"] = o.sigma.measure;
  j["sigma_count"] = o.sigma.count();
  j["nu_used"] = o.tmap.nu_used;
  j["lipschitz"] = {{"pairs_checked", o.lipschitz.pairs_checked},
                    {"violations", o.lipschitz.violations.size()},
                    {"cap_violations", o.lipschitz.cap_violations},
                    {"c_hat", o.lipschitz.c_hat},
                    {"beta", o.lipschitz.beta}};
  j["gamma_length"] = o.curve ? json(o.curve->length) : json(nullptr);
  j["length_excess"] = num(o.length_excess_value());
  if (o.transverse)
    j["transverse"] = {{"integral", o.transverse->integral},
                       {"total_energy", o.transverse->total_energy},
                       {"energy_ok", o.transverse->energy_ok},
                       {"bound_checks", o.transverse->bound_checks},
                       {"bound_violations", o.transverse->bound_violations},
                       {"skipped", o.transverse->skipped},
                       {"disjoint", o.transverse->disjoint}};
  if (o.decay)
    j["decay"] = {{"K", o.decay->K}, {"k", o.decay->k}, {"rms", o.decay->rms}, {"count", o.decay->count},
                  {"C_ring", o.decay->C_ring}, {"r_ring", o.decay->r_ring}};
  else
    j["decay"] = nullptr;
  j["pointwise"] = {{"samples", o.pointwise.samples},
                    {"tested", o.pointwise.tested},
                    {"violations", o.pointwise.violations},
                    {"l", o.pointwise.l}};
  j["errors"] = o.errors;
  return j;
}

// Writes report.json at `report`, and theta_map.csv / interface.json next to it.
inline void write_analysis(const Context& c, const AnalysisOutcome& o, const fs::path& report) {
  fs::path dir = report.has_parent_path() ? report.parent_path() : fs::path(".");
  write_json(report, report_json(c, o));
  write_theta_map_csv(dir / "theta_map.csv", o.tmap);
  if (o.interface) write_json(dir / "interface.json", interface_json(*o.interface, o.curve ? &*o.curve : nullptr));
}

// ---------------------------------------------------------------- run

struct RunSummaryRow {
  double R = 0, J = 0, n_sigma_R = 0, sigma_measure = 0, excess = 0, k = 0;
};

inline std::string radius_tag(double R) { return "R" + fmt_g(R, 10); }

template <class F>
auto staged(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

// Executes hetero -> fibers -> disk per R -> analyze. Returns the process exit code.
inline int run(const RunConfig& cfg, const fs::path& out_dir, std::FILE* log = stderr) {
  fs::create_directories(out_dir);
  write_json(out_dir / "config.resolved.json", to_json(cfg));
  auto ctx = staged("hetero", [&] { return prepare(cfg); });
  staged("hetero", [&] {
    write_profile_csv(out_dir / "profile.csv", ctx.pr, ctx.p.dim());
    write_json(out_dir / "profile.json", profile_json(ctx.pr));
    return 0;
  });
  if (log) std::fprintf(log, "hetero: sigma=%.10g tail_rate=%.6g\n", ctx.pr.sigma, ctx.pr.tail_rate);

  auto table = staged("fiber", [&] { return run_fibers(ctx, cfg.fiber.radii); });
  staged("fiber", [&] {
    write_fibers_csv(out_dir / "fibers.csv", table);
    return 0;
  });
  if (log) std::fprintf(log, "fiber: %zu radii, %d positive gaps\n", table.rows.size(), table.positive);

  const auto& Rs = cfg.R_list;
  std::vector<std::optional<AnalysisOutcome>> results(Rs.size());
  std::vector<std::exception_ptr> errs(Rs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < Rs.size();) {
      const double R = Rs[i];
      try {
        fs::path dir = out_dir / radius_tag(R);
        fs::create_directories(dir);
        SolveReport rep;
        auto u = staged("disk " + radius_tag(R), [&] { return solve_disk(ctx, R, &rep); });
        staged("disk " + radius_tag(R), [&] {
          write_field((dir / "field.bin").string(), u);
          return 0;
        });
        auto o = staged("analyze " + radius_tag(R), [&] { return analyze_field(ctx, u); });
        staged("analyze " + radius_tag(R), [&] {
          write_analysis(ctx, o, dir / "report.json");
          return 0;
        });
        if (log) {
          std::lock_guard lk(log_mu);
          std::fprintf(log, "disk %s: J=%.10g iterations=%d time=%.2fs\n", radius_tag(R).c_str(), rep.energy,
                       rep.iterations, rep.wall_time);
        }
        results[i] = std::move(o);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  int nt = std::min<int>(worker_count(), int(Rs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  {
    std::ofstream os(out_dir / "summary.csv");
    if (!os) throw StageError("summary", ConfigError("cannot write summary.csv"));
    os << "R,J,NsigmaR,sigma_measure,length_excess,k\n";
    for (std::size_t i = 0; i < Rs.size(); ++i) {
      if (!results[i]) continue;
      const auto& o = *results[i];
      double k = o.decay ? o.decay->k : std::numeric_limits<double>::quiet_NaN();
      os << fmt_g(o.R) << ',' << fmt_g(o.energy) << ',' << fmt_g(o.n_sigma_R) << ',' << fmt_g(o.sigma.measure) << ','
         << fmt_g(o.length_excess_value()) << ',' << fmt_g(k) << '\n';
    }
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  for (const auto& o : results)
    for (const auto& msg : o->errors)
      if (log) std::fprintf(log, "note %s: %s\n", radius_tag(o->R).c_str(), msg.c_str());
  return 0;
}

}  // namespace nj
