#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "potential.hpp"

namespace nj {

using json = nlohmann::json;

struct PotentialConfig {
  PotentialKind kind = PotentialKind::ComplexWell;
  int N = 3;
  int h = 1;
  int m = 2;
  double well_radius = 1.0;
  std::vector<Monomial> coefficients;
  double delta_star_fraction = 0.5;

  Potential build() const {
    switch (kind) {
      case PotentialKind::ComplexWell:
        if (m != 2) throw ConfigError("polynomial-complex-well needs m = 2");
        return Potential::complex_well(N, well_radius, h);
      case PotentialKind::ScalarBistable:
        if (m != 1 || N != 2) throw ConfigError("scalar-bistable needs m = 1 and N = 2");
        return Potential::scalar_bistable(h, well_radius);
      case PotentialKind::UserPolynomial:
        return Potential::user_polynomial(m, N, h, well_radius, coefficients);
    }
    throw ConfigError("unknown potential kind");
  }
  EstimateOptions estimate_options() const {
    EstimateOptions o;
    o.delta_star_fraction = delta_star_fraction;
    return o;
  }
};

struct HeteroConfig {
  std::optional<double> L;  // default scales with the well's decay length
  int n = 4000;
  double tol = 1e-9;
};

struct FiberConfig {
  std::vector<double> radii;
  int n_arc = 0;  // 0: match the profile step
  double tol = 1e-10;
};

struct GridConfig {
  double R = 40;
  int n_r = 256;
  int n_theta = 192;
};

struct SolverConfig {
  double tol = 1e-6;
  int max_iter = 100000;
  std::string init = "test";  // test | zero | file:PATH
  std::optional<double> core_radius;
};

struct AnalysisConfig {
  std::optional<double> delta;
  double alpha = 0.25;
  double alpha_prime = 0.25;
  std::optional<double> r_delta;
  std::string bracket = "measured";  // measured | nu
  std::optional<int> c1;
  std::optional<double> c_tilde;
  std::optional<double> C_ring;
  std::optional<double> r_ring;
  int arc_points = 65;
  int pointwise_samples = 200;
  std::optional<double> pointwise_l;
  std::uint64_t seed = 12345;
  bool strict = false;  // treat construction / data failures as run failures
};

struct RunConfig {
  PotentialConfig potential;
  HeteroConfig hetero;
  FiberConfig fiber;
  GridConfig grid;
  SolverConfig solver;
  AnalysisConfig analysis;
  std::vector<double> R_list;
  std::string output = "out";
  std::filesystem::path base_dir;  // directory of the config file

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base_dir / q;
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in '" + where + "'");
}

template <class T>
void get_to(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

template <class T>
void get_opt(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  get_to(j, key, v, where);
  out = v;
}

}  // namespace detail

// "a:b:step" inclusive range, or a comma list.
inline std::vector<double> parse_range(const std::string& s) {
  std::vector<double> out;
  auto num = [&](const std::string& t) {
    try {
      std::size_t used = 0;
      double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + t + "' in range '" + s + "'");
    }
  };
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string t; std::getline(ss, t, ':');) parts.push_back(t);
    if (parts.size() != 3) throw ConfigError("range '" + s + "' must be start:stop:step");
    double a = num(parts[0]), b = num(parts[1]), st = num(parts[2]);
    if (!(st > 0) || b < a) throw ConfigError("range '" + s + "' is empty or has a non-positive step");
    for (long k = 0;; ++k) {
      double v = a + k * st;
      if (v > b + 1e-9 * st) break;
      out.push_back(v);
    }
  } else {
    std::stringstream ss(s);
    for (std::string t; std::getline(ss, t, ',');) out.push_back(num(t));
  }
  return out;
}

namespace detail {

inline std::vector<double> parse_radii(const json& v, const std::string& where) {
  if (v.is_string()) return parse_range(v.get<std::string>());
  if (!v.is_array()) throw ConfigError("'" + where + "' must be a list or a start:stop:step string");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("'" + where + "' entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace detail

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann counts characters read; report the 0-based offset of the offending byte
    throw ParseError(what + ": " + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = ".") {
  using namespace detail;
  RunConfig c;
  c.base_dir = base_dir;
  check_keys(j, "config", {"potential", "hetero", "fiber", "grid", "solver", "analysis", "sweep", "output"});

  if (!j.contains("potential")) throw ConfigError("missing 'potential' block");
  {
    const auto& p = j.at("potential");
    check_keys(p, "potential", {"kind", "N", "h", "m", "well_radius", "coefficients", "delta_star_fraction"});
    std::string kind = "polynomial-complex-well";
    get_to(p, "kind", kind, "potential");
    try {
      c.potential.kind = parse_kind(kind);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (c.potential.kind == PotentialKind::ScalarBistable) c.potential.N = 2, c.potential.m = 1;
    get_to(p, "N", c.potential.N, "potential");
    get_to(p, "h", c.potential.h, "potential");
    get_to(p, "m", c.potential.m, "potential");
    get_to(p, "well_radius", c.potential.well_radius, "potential");
    get_to(p, "delta_star_fraction", c.potential.delta_star_fraction, "potential");
    if (p.contains("coefficients")) {
      const auto& cs = p.at("coefficients");
      if (!cs.is_array()) throw ConfigError("'potential.coefficients' must be a list of [px, py, coeff]");
      for (const auto& t : cs) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_number_integer() || !t[2].is_number())
          throw ConfigError("each coefficient must be [px, py, coeff] with integer exponents");
        c.potential.coefficients.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<double>()});
      }
    }
    if (c.potential.kind == PotentialKind::UserPolynomial && c.potential.coefficients.empty())
      throw ConfigError("user-polynomial needs 'coefficients'");
    if (!(c.potential.well_radius > 0)) throw ConfigError("'potential.well_radius' must be positive");
  }
  if (j.contains("hetero")) {
    const auto& h = j.at("hetero");
    check_keys(h, "hetero", {"L", "n", "tol"});
    get_opt(h, "L", c.hetero.L, "hetero");
    get_to(h, "n", c.hetero.n, "hetero");
    get_to(h, "tol", c.hetero.tol, "hetero");
    if (c.hetero.L && !(*c.hetero.L > 0)) throw ConfigError("'hetero.L' must be positive");
    if (c.hetero.n < 200) throw ConfigError("'hetero.n' must be at least 200");
  }
  if (j.contains("fiber")) {
    const auto& f = j.at("fiber");
    check_keys(f, "fiber", {"radii", "n_arc", "tol"});
    if (f.contains("radii")) c.fiber.radii = parse_radii(f.at("radii"), "fiber.radii");
    get_to(f, "n_arc", c.fiber.n_arc, "fiber");
    get_to(f, "tol", c.fiber.tol, "fiber");
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, "grid", {"R", "n_r", "n_theta"});
    get_to(g, "R", c.grid.R, "grid");
    get_to(g, "n_r", c.grid.n_r, "grid");
    get_to(g, "n_theta", c.grid.n_theta, "grid");
    if (!(c.grid.R > 0) || c.grid.n_r < 4 || c.grid.n_theta < 4) throw ConfigError("grid needs R > 0, n_r >= 4, n_theta >= 4");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, "solver", {"tol", "max_iter", "init", "core_radius"});
    get_to(s, "tol", c.solver.tol, "solver");
    get_to(s, "max_iter", c.solver.max_iter, "solver");
    get_to(s, "init", c.solver.init, "solver");
    get_opt(s, "core_radius", c.solver.core_radius, "solver");
    const auto& in = c.solver.init;
    if (in.rfind("file:", 0) == 0) {
      auto path = c.resolve(in.substr(5));
      if (!std::filesystem::exists(path)) throw ConfigError("solver.init file not found: " + path.string());
    } else if (in != "test" && in != "zero") {
      throw ConfigError("solver.init must be test, zero or file:PATH");
    }
    if (!(c.solver.tol > 0) || c.solver.max_iter < 1) throw ConfigError("solver needs tol > 0 and max_iter >= 1");
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    check_keys(a, "analysis", {"delta", "alpha", "alpha_prime", "r_delta", "bracket", "c1", "c_tilde", "C_ring", "r_ring",
                               "arc_points", "pointwise_samples", "pointwise_l", "seed", "strict"});
    auto& A = c.analysis;
    get_opt(a, "delta", A.delta, "analysis");
    get_to(a, "alpha", A.alpha, "analysis");
    get_to(a, "alpha_prime", A.alpha_prime, "analysis");
    get_opt(a, "r_delta", A.r_delta, "analysis");
    get_to(a, "bracket", A.bracket, "analysis");
    get_opt(a, "c1", A.c1, "analysis");
    get_opt(a, "c_tilde", A.c_tilde, "analysis");
    get_opt(a, "C_ring", A.C_ring, "analysis");
    get_opt(a, "r_ring", A.r_ring, "analysis");
    get_to(a, "arc_points", A.arc_points, "analysis");
    get_to(a, "pointwise_samples", A.pointwise_samples, "analysis");
    get_opt(a, "pointwise_l", A.pointwise_l, "analysis");
    get_to(a, "seed", A.seed, "analysis");
    get_to(a, "strict", A.strict, "analysis");
    if (A.bracket != "measured" && A.bracket != "nu") throw ConfigError("analysis.bracket must be measured or nu");
    if (A.arc_points < 65) throw ConfigError("analysis.arc_points must be at least 65");
  }
  if (!(2 * c.analysis.alpha + c.analysis.alpha_prime < 1))
    throw ConfigError("analysis needs 2 alpha + alpha' < 1");
  if (!(c.analysis.alpha > 0 && c.analysis.alpha_prime > 0)) throw ConfigError("alpha and alpha' must be positive");
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"R_list"});
    if (s.contains("R_list")) c.R_list = parse_radii(s.at("R_list"), "sweep.R_list");
    for (double R : c.R_list)
      if (!(R > 0)) throw ConfigError("sweep.R_list entries must be positive");
  }
  if (c.R_list.empty()) c.R_list = {c.grid.R};
  get_to(j, "output", c.output, "config");
  // validate the potential block eagerly
  try {
    (void)c.potential.build();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("potential: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  auto text = read_text_file(path);
  auto j = parse_json_text(text, path.string());
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

inline json to_json(const RunConfig& c) {
  json p = {{"kind", to_string(c.potential.kind)},
            {"N", c.potential.N},
            {"h", c.potential.h},
            {"m", c.potential.m},
            {"well_radius", c.potential.well_radius},
            {"delta_star_fraction", c.potential.delta_star_fraction}};
  if (!c.potential.coefficients.empty()) {
    json cs = json::array();
    for (const auto& t : c.potential.coefficients) cs.push_back({t.px, t.py, t.coeff});
    p["coefficients"] = cs;
  }
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  const auto& A = c.analysis;
  return {{"potential", p},
          {"hetero", {{"L", opt(c.hetero.L)}, {"n", c.hetero.n}, {"tol", c.hetero.tol}}},
          {"fiber", {{"radii", c.fiber.radii}, {"n_arc", c.fiber.n_arc}, {"tol", c.fiber.tol}}},
          {"grid", {{"R", c.grid.R}, {"n_r", c.grid.n_r}, {"n_theta", c.grid.n_theta}}},
          {"solver",
           {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}, {"init", c.solver.init}, {"core_radius", opt(c.solver.core_radius)}}},
          {"analysis",
           {{"delta", opt(A.delta)},
            {"alpha", A.alpha},
            {"alpha_prime", A.alpha_prime},
            {"r_delta", opt(A.r_delta)},
            {"bracket", A.bracket},
            {"c1", opt(A.c1)},
            {"c_tilde", opt(A.c_tilde)},
            {"C_ring", opt(A.C_ring)},
            {"r_ring", opt(A.r_ring)},
            {"arc_points", A.arc_points},
            {"pointwise_samples", A.pointwise_samples},
            {"pointwise_l", opt(A.pointwise_l)},
            {"seed", A.seed},
            {"strict", A.strict}}},
          {"sweep", {{"R_list", c.R_list}}},
          {"output", c.output}};
}

}  // namespace nj
