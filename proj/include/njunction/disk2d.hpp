#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "connect1d.hpp"
#include "descent.hpp"
#include "errors.hpp"
#include "fiber.hpp"
#include "potential.hpp"
#include "spectral.hpp"

namespace nj {

// Fundamental sector [0, 2 pi/(hN)) x (0, R]; nodes at r_i = (i + 1/2) dr, theta_j = j dtheta.
struct PolarGrid {
  double R = 1;
  int n_r = 1;
  int n_theta = 1;
  int layers = 1;  // hN

  PolarGrid() = default;
  PolarGrid(double R_, int nr, int nt, int layers_) : R(R_), n_r(nr), n_theta(nt), layers(layers_) {
    if (!(R > 0) || nr < 1 || nt < 2 || layers < 2) throw ParameterError("invalid polar grid");
  }
  double dr() const { return R / n_r; }
  double sector_angle() const { return 2 * std::numbers::pi / layers; }
  double dtheta() const { return sector_angle() / n_theta; }
  double radius(int i) const { return (i + 0.5) * dr(); }
  double angle(int j) const { return j * dtheta(); }
  double r_min() const { return 0.5 * dr(); }
  std::size_t size() const { return std::size_t(n_r) * n_theta; }
  bool operator==(const PolarGrid&) const = default;
};

struct EquivariantField {
  PolarGrid grid;
  int m = 2;
  Point omega{1.0, 0.0};
  std::vector<Point> u;  // n_r * n_theta, radius-major

  Point center_value() const { return 0.0; }
  Point& operator()(int i, int j) { return u[std::size_t(i) * grid.n_theta + j]; }
  Point operator()(int i, int j) const { return u[std::size_t(i) * grid.n_theta + j]; }

  // Node (i, j) for any integer j, using the twisted identification.
  Point at(int i, long j) const {
    const long n = grid.n_theta;
    long q = j >= 0 ? j / n : -((-j + n - 1) / n);
    Point w = (*this)(i, int(j - q * n));
    if (q > 0)
      for (long s = 0; s < q; ++s) w *= omega;
    else
      for (long s = 0; s < -q; ++s) w /= omega;
    return w;
  }

  // Bilinear value at polar point (r, theta) of the full disk.
  Point sample(double r, double theta) const {
    const double dt = grid.dtheta();
    double x = theta / dt;
    long j = long(std::floor(x));
    double ft = x - j;
    auto ring = [&](int i) { return (1 - ft) * at(i, j) + ft * at(i, j + 1); };
    double y = r / grid.dr() - 0.5;
    if (y < 0) {
      double f = std::max(0.0, r / grid.r_min());
      return f * ring(0);
    }
    int i = int(std::floor(y));
    if (i >= grid.n_r - 1) return ring(grid.n_r - 1);
    double fr = y - i;
    return (1 - fr) * ring(i) + fr * ring(i + 1);
  }
  Point sample_xy(Point x) const {
    double th = std::arg(x);
    if (th < 0) th += 2 * std::numbers::pi;
    return sample(std::abs(x), th);
  }
};

inline EquivariantField make_field(const Potential& p, const PolarGrid& g, Point fill = 0.0) {
  if (g.layers != p.layers()) throw ParameterError("grid sector does not match the potential's hN");
  EquivariantField f;
  f.grid = g;
  f.m = p.dim();
  f.omega = p.omega();
  f.u.assign(g.size(), p.project(fill));
  return f;
}

struct SectorEnergy {
  double center = 0, radial = 0, angular = 0, potential = 0;
  double sum() const { return center + radial + angular + potential; }
};

// Sector energy of rows [i0, i1); a radial link (i, i+1) belongs to row i.
inline SectorEnergy sector_energy(const Potential& p, const PolarGrid& g, Point omega, std::span<const Point> x,
                                  int i0 = 0, int i1 = -1) {
  if (i1 < 0) i1 = g.n_r;
  const int nt = g.n_theta;
  const double dr = g.dr(), dt = g.dtheta();
  auto X = [&](int i, int j) { return x[std::size_t(i) * nt + j]; };
  long double ec = 0, er = 0, ea = 0, ew = 0;
  for (int i = i0; i < i1; ++i) {
    const double ri = g.radius(i);
    const double wa = 0.5 * dr / (ri * dt);
    const double wr = 0.5 * dt * (i + 1);
    const double ww = ri * dr * dt;
    for (int j = 0; j < nt; ++j) {
      Point v = X(i, j);
      Point nx = j + 1 < nt ? X(i, j + 1) : omega * X(i, 0);
      ea += wa * std::norm(nx - v);
      ew += ww * p.value(v);
      if (i + 1 < g.n_r) er += wr * std::norm(X(i + 1, j) - v);
      if (i == 0) ec += 0.25 * dt * std::norm(v);
    }
  }
  return {double(ec), double(er), double(ea), double(ew)};
}

inline SectorEnergy sector_energy(const Potential& p, const EquivariantField& f, int i0 = 0, int i1 = -1) {
  return sector_energy(p, f.grid, f.omega, f.u, i0, i1);
}

inline double total_energy(const Potential& p, const EquivariantField& f) {
  return f.grid.layers * sector_energy(p, f).sum();
}

// Full-disk integral of |d_r u|^2 r over the links between grid rings.
inline double radial_kinetic(const EquivariantField& f) {
  const auto& g = f.grid;
  long double s = 0;
  for (int i = 0; i + 1 < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j) s += g.dtheta() * (i + 1) * std::norm(f(i + 1, j) - f(i, j));
  return double(s) * g.layers;
}

namespace detail {

class DiskProblem {
 public:
  DiskProblem(const Potential& p, const PolarGrid& g, double kappa)
      : p_(p), g_(g), omega_(p.omega()), fft_(g.n_r, g.n_theta, std::arg(p.omega())) {
    const int nr = g.n_r;
    const double dr = g.dr(), dt = g.dtheta();
    base_.assign(nr, 0.0);
    ang_.assign(nr, 0.0);
    lower_.assign(nr, 0.0);
    mass_.assign(nr, 0.0);
    for (int i = 0; i < nr; ++i) {
      double ri = g.radius(i);
      mass_[i] = ri * dr * dt;
      ang_[i] = dr / (ri * dt);
      base_[i] = kappa * mass_[i] + (i == 0 ? 0.5 * dt : 0.0) + (i + 1 < nr ? dt * (i + 1) : 0.0) +
                 (i > 0 ? dt * i : 0.0);
      lower_[i] = i > 0 ? -dt * i : 0.0;
    }
    diag_.resize(nr);
    col_.resize(nr);
  }

  double energy(std::span<const Point> x) const { return sector_energy(p_, g_, omega_, x).sum(); }

  double energy_gradient(std::span<const Point> x, std::span<Point> grad) const {
    const int nr = g_.n_r, nt = g_.n_theta;
    const double dr = g_.dr(), dt = g_.dtheta();
    auto X = [&](int i, int j) { return x[std::size_t(i) * nt + j]; };
    for (int i = 0; i < nr; ++i) {
      const double ri = g_.radius(i);
      const double wa = dr / (ri * dt);
      for (int j = 0; j < nt; ++j) {
        Point v = X(i, j);
        Point gv = mass_[i] * p_.gradient(v);
        Point nx = j + 1 < nt ? X(i, j + 1) : omega_ * X(i, 0);
        Point pv = j > 0 ? X(i, j - 1) : X(i, nt - 1) / omega_;
        gv += wa * (2.0 * v - nx - pv);
        if (i + 1 < nr) gv += dt * (i + 1) * (v - X(i + 1, j));
        if (i > 0) gv += dt * i * (v - X(i - 1, j));
        if (i == 0) gv += 0.5 * dt * v;
        grad[std::size_t(i) * nt + j] = p_.project(gv);
      }
    }
    return energy(x);
  }

  void precondition(std::span<const Point> gr, std::span<Point> d) {
    const int nr = g_.n_r, nt = g_.n_theta;
    fft_.forward(gr);
    for (int k = 0; k < nt; ++k) {
      const double lam = fft_.eigenvalue(k);
      for (int i = 0; i < nr; ++i) {
        diag_[i] = base_[i] + ang_[i] * lam;
        col_[i] = fft_.mode(i, k);
      }
      solve_tridiagonal(diag_, lower_, col_, scratch_);
      for (int i = 0; i < nr; ++i) fft_.mode(i, k) = col_[i];
    }
    fft_.backward(d);
    for (auto& z : d) z = p_.project(z);
  }

  double residual(std::span<const Point> gr) const {
    const int nt = g_.n_theta;
    double r = 0;
    for (int i = 0; i < g_.n_r; ++i)
      for (int j = 0; j < nt; ++j) r = std::max(r, std::abs(gr[std::size_t(i) * nt + j]) / mass_[i]);
    return r;
  }

 private:
  const Potential& p_;
  PolarGrid g_;
  Point omega_;
  TwistedFFT fft_;
  std::vector<double> base_, ang_, lower_, mass_, diag_, scratch_;
  std::vector<Point> col_;
};

}  // namespace detail

// Sector energy gradient, exposed for finite-difference checks.
inline std::vector<Point> energy_gradient(const Potential& p, const EquivariantField& f) {
  detail::DiskProblem prob(p, f.grid, 0.0);
  std::vector<Point> g(f.u.size());
  prob.energy_gradient(f.u, g);
  return g;
}

// Pointwise Euler-Lagrange residual |grad| / (r dr dtheta), maximum over nodes.
inline double el_residual(const Potential& p, const EquivariantField& f) {
  detail::DiskProblem prob(p, f.grid, 0.0);
  std::vector<Point> g(f.u.size());
  prob.energy_gradient(f.u, g);
  return prob.residual(g);
}

// Heteroclinic-based construction: omega^{-1} u(y) near theta = 0, a theta-blend in the
// middle half of the sector, and the equivariant image near theta = sector.
inline Point test_value(const Potential& p, const HeteroclinicProfile& pr, double r, double theta) {
  const double S = p.domain_angle();
  const Point winv = 1.0 / p.omega();
  double t = std::fmod(theta, S);
  if (t < 0) t += S;
  Point v;
  if (t <= 0.25 * S) {
    v = winv * pr.eval(r * std::sin(t));
  } else if (t < 0.75 * S) {
    double y = std::sin(0.25 * S) * r;
    v = winv * pr.eval(y) * (1.5 - 2 * t / S) + pr.eval(-y) * (2 * t / S - 0.5);
  } else {
    v = pr.eval(r * std::sin(t - S));
  }
  return p.project(v);
}

// Core radius inside which the construction is ramped linearly to the pinned centre value 0.
// Without it the blend is multi-valued at the origin and its energy grows like log(1/dr).
inline double default_core_radius(const HeteroclinicProfile& pr) {
  return pr.tail_rate > 0 ? 2.0 / pr.tail_rate : 2.0;
}

inline EquivariantField build_test_function(const Potential& p, const HeteroclinicProfile& pr, const PolarGrid& g,
                                            double core_radius = -1) {
  if (core_radius < 0) core_radius = default_core_radius(pr);
  auto f = make_field(p, g);
  for (int i = 0; i < g.n_r; ++i) {
    const double r = g.radius(i);
    const double ramp = core_radius > 0 ? std::min(1.0, r / core_radius) : 1.0;
    for (int j = 0; j < g.n_theta; ++j) f(i, j) = ramp * test_value(p, pr, r, g.angle(j));
  }
  return f;
}

struct SolveReport {
  double energy = 0;
  double gradient_norm = 0;
  int iterations = 0;
  double wall_time = 0;
  bool monotone = true;
  bool converged = false;
  std::string stop_reason;
};

inline EquivariantField minimize_disk(const Potential& p, const EquivariantField& init, double tol, int max_iter,
                                      SolveReport* report = nullptr) {
  if (init.grid.layers != p.layers()) throw ParameterError("initial field grid does not match the potential");
  auto t0 = std::chrono::steady_clock::now();
  EquivariantField f = init;
  detail::DiskProblem prob(p, f.grid, detail::hessian_scale(p));
  DescentOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  auto res = descend(prob, f.u, opt);
  SolveReport rep;
  rep.energy = f.grid.layers * res.energy;
  rep.gradient_norm = res.residual;
  rep.iterations = res.iterations;
  rep.monotone = res.monotone;
  rep.converged = res.converged;
  rep.stop_reason = res.stop_reason;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (report) *report = rep;
  if (res.residual > 10 * tol)
    throw ConvergenceError("disk descent stopped (" + res.stop_reason + ")", res.residual, res.iterations);
  return f;
}

// Rotates the field in the domain by -shift cells: u'(r, theta_j) = u(r, theta_{j + shift}).
inline EquivariantField rotate_cells(const EquivariantField& f, long shift) {
  EquivariantField out = f;
  for (int i = 0; i < f.grid.n_r; ++i)
    for (int j = 0; j < f.grid.n_theta; ++j) out(i, j) = f.at(i, j + shift);
  return out;
}

inline FiberProfile restrict_fiber(const Potential& p, const EquivariantField& f, double r) {
  const auto& g = f.grid;
  if (!(r >= g.r_min() * (1 - 1e-12)) || r > g.R * (1 + 1e-12))
    throw ParameterError("restrict_fiber radius " + std::to_string(r) + " outside [r_min, R]");
  FiberProfile fp;
  fp.r = r;
  fp.layers = g.layers;
  fp.omega = f.omega;
  fp.theta0 = 0;
  fp.arc_step = r * g.dtheta();
  fp.v.resize(g.n_theta);
  double y = std::clamp(r / g.dr() - 0.5, 0.0, double(g.n_r - 1));
  int i = std::min(int(std::floor(y)), g.n_r - 1);
  double fr = y - i;
  for (int j = 0; j < g.n_theta; ++j)
    fp.v[j] = i + 1 < g.n_r ? (1 - fr) * f(i, j) + fr * f(i + 1, j) : f(i, j);
  fp.energy = fiber_energy(p, fp);
  return fp;
}

inline FiberProfile grid_fiber(const Potential& p, const EquivariantField& f, int i) {
  return restrict_fiber(p, f, f.grid.radius(i));
}

inline void write_field(const std::string& path, const EquivariantField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write field file '" + path + "'");
  const int N = f.m == 1 ? 2 : int(std::lround(2 * std::numbers::pi / std::arg(f.omega)));
  const int h = f.grid.layers / N;
  char head[256];
  std::snprintf(head, sizeof head, "NJFIELD v1 %d %d %d %d %d %.17g\n", f.m, N, h, f.grid.n_r, f.grid.n_theta,
                f.grid.R);
  os << head;
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  for (const auto& v : f.u) {
    double re = v.real(), im = v.imag();
    os.write(reinterpret_cast<const char*>(&re), 8);
    if (f.m == 2) os.write(reinterpret_cast<const char*>(&im), 8);
  }
  if (!os) throw ConfigError("short write to '" + path + "'");
}

inline EquivariantField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open field file '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw ParseError("missing field header", 0);
  std::istringstream hs(line);
  std::string magic, ver;
  int m = 0, N = 0, h = 0, nr = 0, nt = 0;
  double R = 0;
  hs >> magic >> ver >> m >> N >> h >> nr >> nt >> R;
  if (magic != "NJFIELD" || ver != "v1") throw ParseError("bad field magic '" + magic + " " + ver + "'", 0);
  if (!hs || (m != 1 && m != 2) || N < 2 || h < 1 || nr < 1 || nt < 2 || !(R > 0))
    throw ParseError("malformed field header '" + line + "'", 0);
  const std::size_t header = line.size() + 1;
  EquivariantField f;
  f.grid = PolarGrid(R, nr, nt, N * h);
  f.m = m;
  f.omega = m == 1 ? Point(-1, 0) : std::polar(1.0, 2 * std::numbers::pi / N);
  f.u.resize(f.grid.size());
  std::vector<double> buf(f.u.size() * m);
  is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 8));
  if (std::size_t(is.gcount()) != buf.size() * 8)
    throw ParseError("field payload truncated: expected " + std::to_string(buf.size()) + " values",
                     header + std::size_t(is.gcount()));
  if (is.peek() != std::char_traits<char>::eof())
    throw ParseError("trailing bytes after field payload", header + buf.size() * 8);
  for (std::size_t k = 0; k < f.u.size(); ++k) f.u[k] = m == 2 ? Point(buf[2 * k], buf[2 * k + 1]) : Point(buf[k], 0);
  return f;
}

}  // namespace nj
