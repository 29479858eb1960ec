#pragma once

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "config.hpp"
#include "disk2d.hpp"
#include "errors.hpp"

namespace nj {

struct SvgStyle {
  int size = 640;
  int max_rings = 160;
  int max_spokes = 720;
  double contour = -1;  // |u - a_j| level; negative disables contours
};

namespace detail {

inline const char* well_color(int j) {
  static const char* pal[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000"};
  return pal[j % 8];
}

inline std::string f3(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3f", v);
  return b;
}

struct Canvas {
  double scale, c;
  std::string X(double x) const { return f3(c + scale * x); }
  std::string Y(double y) const { return f3(c - scale * y); }
  std::string P(Point z) const { return X(z.real()) + "," + Y(z.imag()); }
};

inline std::string svg_open(int size) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) + "\" height=\"" +
       std::to_string(size) + "\" viewBox=\"0 0 " + std::to_string(size) + " " + std::to_string(size) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  return s;
}

// Annular sector between radii r0 < r1 and angles a0 < a1 (a1 - a0 < 2 pi).
inline std::string annular_path(const Canvas& cv, double r0, double r1, double a0, double a1) {
  int large = (a1 - a0) > std::numbers::pi ? 1 : 0;
  std::string s = "M" + cv.P(std::polar(r1, a0)) + "A" + f3(cv.scale * r1) + "," + f3(cv.scale * r1) + " 0 " +
                  std::to_string(large) + " 0 " + cv.P(std::polar(r1, a1));
  if (r0 > 0) {
    s += "L" + cv.P(std::polar(r0, a1)) + "A" + f3(cv.scale * r0) + "," + f3(cv.scale * r0) + " 0 " +
         std::to_string(large) + " 1 " + cv.P(std::polar(r0, a0));
  } else {
    s += "L" + cv.P(0.0);
  }
  return s + "Z";
}

inline std::string ring_path(const Canvas& cv, double r0, double r1) {
  auto circ = [&](double r) {
    std::string R = f3(cv.scale * r);
    return "M" + cv.P(Point(r, 0)) + "A" + R + "," + R + " 0 1 0 " + cv.P(Point(-r, 0)) + "A" + R + "," + R +
           " 0 1 0 " + cv.P(Point(r, 0)) + "Z";
  };
  return r0 > 0 ? circ(r1) + circ(r0) : circ(r1);
}

}  // namespace detail

// Full-disk rendering colored by nearest well, with the |u - a_j| = contour level drawn as cell edges.
inline std::string render_field_svg(const EquivariantField& f, const std::vector<Point>& wells, const SvgStyle& st = {}) {
  using namespace detail;
  const auto& g = f.grid;
  Canvas cv{0.45 * st.size / g.R, 0.5 * st.size};
  const int rstep = std::max(1, (g.n_r + st.max_rings - 1) / st.max_rings);
  const long total = long(g.layers) * g.n_theta;
  const long jstep = std::max(1L, (total + st.max_spokes - 1) / st.max_spokes);
  const double dphi = jstep * g.dtheta();
  auto cls = [&](int i, long j, bool* inside) {
    Point u = f.at(i, j);
    int best = 0;
    double d = 1e300;
    for (int w = 0; w < int(wells.size()); ++w)
      if (std::abs(u - wells[w]) < d) d = std::abs(u - wells[w]), best = w;
    if (inside) *inside = st.contour > 0 && d <= st.contour;
    return best;
  };
  std::vector<int> rows;
  for (int i = 0; i < g.n_r; i += rstep) rows.push_back(i);
  std::vector<long> cols;
  for (long j = 0; j < total; j += jstep) cols.push_back(j);
  const int nR = int(rows.size()), nC = int(cols.size());
  auto r_in = [&](int a) { return a == 0 ? 0.0 : 0.5 * (g.radius(rows[a - 1]) + g.radius(rows[a])); };
  auto r_out = [&](int a) { return a + 1 == nR ? g.R : 0.5 * (g.radius(rows[a]) + g.radius(rows[a + 1])); };
  std::vector<int> W(std::size_t(nR) * nC);
  std::vector<char> In(std::size_t(nR) * nC);
  for (int a = 0; a < nR; ++a)
    for (int b = 0; b < nC; ++b) {
      bool in = false;
      W[std::size_t(a) * nC + b] = cls(rows[a], cols[b], &in);
      In[std::size_t(a) * nC + b] = in;
    }

  std::string s = svg_open(st.size);
  std::vector<std::string> paths(wells.size());
  for (int a = 0; a < nR; ++a) {
    const int* row = &W[std::size_t(a) * nC];
    bool uniform = std::all_of(row, row + nC, [&](int w) { return w == row[0]; });
    if (uniform) {
      paths[row[0]] += ring_path(cv, r_in(a), r_out(a));
      continue;
    }
    // start runs at a color change so no run wraps
    int b0 = 0;
    while (row[b0] == row[(b0 + nC - 1) % nC]) ++b0;
    for (int k = 0; k < nC;) {
      int b = (b0 + k) % nC, len = 1;
      while (k + len < nC && row[(b0 + k + len) % nC] == row[b]) ++len;
      double a0 = (cols[b] - 0.5 * jstep) * g.dtheta();
      paths[row[b]] += annular_path(cv, r_in(a), r_out(a), a0, a0 + len * dphi);
      k += len;
    }
  }
  for (std::size_t w = 0; w < paths.size(); ++w)
    if (!paths[w].empty())
      s += "<path fill=\"" + std::string(well_color(int(w))) + "\" fill-rule=\"evenodd\" stroke=\"none\" d=\"" +
           paths[w] + "\"/>\n";

  if (st.contour > 0) {
    std::string d;
    for (int a = 0; a < nR; ++a)
      for (int b = 0; b < nC; ++b) {
        bool here = In[std::size_t(a) * nC + b];
        bool next = In[std::size_t(a) * nC + (b + 1) % nC];
        if (here != next) {
          double phi = (cols[b] + 0.5 * jstep) * g.dtheta();
          d += "M" + cv.P(std::polar(r_in(a), phi)) + "L" + cv.P(std::polar(r_out(a), phi));
        }
        if (a + 1 < nR && here != bool(In[std::size_t(a + 1) * nC + b])) {
          double p0 = (cols[b] - 0.5 * jstep) * g.dtheta();
          d += "M" + cv.P(std::polar(r_out(a), p0)) + "L" + cv.P(std::polar(r_out(a), p0 + dphi));
        }
      }
    if (!d.empty()) s += "<path fill=\"none\" stroke=\"#000000\" stroke-width=\"0.8\" d=\"" + d + "\"/>\n";
  }
  s += "<circle cx=\"" + cv.X(0) + "\" cy=\"" + cv.Y(0) + "\" r=\"" + f3(cv.scale * g.R) +
       "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  return s + "</svg>\n";
}

// Interface cells, marker points and the minimal curve from an interface.json document.
inline std::string render_interface_svg(const json& j, const SvgStyle& st = {}) {
  using namespace detail;
  double R = 0;
  std::vector<json> levels;
  try {
    R = j.at("R").get<double>();
    for (const auto& L : j.at("levels")) levels.push_back(L);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed interface document: ") + e.what(), 0);
  }
  if (!(R > 0) || levels.size() < 2) throw ParseError("interface document needs R > 0 and at least two levels", 0);
  Canvas cv{0.45 * st.size / R, 0.5 * st.size};
  auto num = [](const json& L, const char* k) {
    if (!L.contains(k) || !L.at(k).is_number()) throw ParseError(std::string("interface level lacks '") + k + "'", 0);
    return L.at(k).get<double>();
  };
  std::string s = svg_open(st.size);
  s += "<circle cx=\"" + cv.X(0) + "\" cy=\"" + cv.Y(0) + "\" r=\"" + f3(cv.scale * R) +
       "\" fill=\"none\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
  std::string cells, arcs, marks;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& L = levels[k];
    double r = num(L, "r"), pm = num(L, "p_minus"), pp = num(L, "p_plus");
    std::string rr = f3(cv.scale * r);
    int large = (pp - pm) > std::numbers::pi ? 1 : 0;
    arcs += "M" + cv.P(std::polar(r, pm)) + "A" + rr + "," + rr + " 0 " + std::to_string(large) + " 0 " +
            cv.P(std::polar(r, pp));
    for (double a : {pm, pp})
      marks += "<circle cx=\"" + cv.X(r * std::cos(a)) + "\" cy=\"" + cv.Y(r * std::sin(a)) +
               "\" r=\"2\" fill=\"#ee6677\"/>\n";
    for (const char* key : {"hat_minus", "hat_plus"}) {
      double a = num(L, key);
      marks += "<circle cx=\"" + cv.X(r * std::cos(a)) + "\" cy=\"" + cv.Y(r * std::sin(a)) +
               "\" r=\"1.5\" fill=\"#228833\"/>\n";
    }
    if (k + 1 < levels.size()) {
      const auto& B = levels[k + 1];
      double rb = num(B, "r"), qm = num(B, "q_minus"), qp = num(B, "q_plus");
      cells += "M" + cv.P(std::polar(r, pm)) + "L" + cv.P(std::polar(rb, qm));
      cells += "M" + cv.P(std::polar(r, pp)) + "L" + cv.P(std::polar(rb, qp));
      for (double a : {qm, qp})
        marks += "<circle cx=\"" + cv.X(rb * std::cos(a)) + "\" cy=\"" + cv.Y(rb * std::sin(a)) +
                 "\" r=\"2\" fill=\"#4477aa\"/>\n";
    }
  }
  s += "<path fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1\" d=\"" + cells + "\"/>\n";
  s += "<path fill=\"none\" stroke=\"#ee6677\" stroke-width=\"1.5\" d=\"" + arcs + "\"/>\n";
  if (j.contains("curve")) {
    std::string d;
    try {
      for (const auto& v : j.at("curve").at("vertices"))
        d += (d.empty() ? "M" : "L") + cv.P(Point(v.at(0).get<double>(), v.at(1).get<double>()));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed curve vertices: ") + e.what(), 0);
    }
    s += "<path fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\" d=\"" + d + "\"/>\n";
  }
  s += marks;
  return s + "</svg>\n";
}

inline std::string render_interface_svg_text(const std::string& text, const SvgStyle& st = {}) {
  return render_interface_svg(parse_json_text(text, "interface"), st);
}

}  // namespace nj
