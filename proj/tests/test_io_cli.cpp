#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <njunction/njunction.hpp>

namespace fs = std::filesystem;
using namespace nj;
using Catch::Approx;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / "nj_test_io_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

int njx(const std::string& args) {
  std::string cmd = std::string(NJX_PATH) + " " + args + " >/dev/null 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string config_path(const std::string& name) { return std::string(NJ_SOURCE_DIR) + "/configs/" + name; }

const std::string kScalar = R"({
  "potential": {"kind": "scalar-bistable"},
  "grid": {"R": 20, "n_r": 64, "n_theta": 48},
  "sweep": {"R_list": [20]}
})";

}  // namespace

TEST_CASE("ranges and radii") {
  auto r = parse_range("1:2:0.5");
  REQUIRE(r.size() == 3);
  CHECK(r[1] == Approx(1.5));
  CHECK(parse_range("3, 4,7") == std::vector<double>{3, 4, 7});
  CHECK_THROWS_AS(parse_range("1:2:0"), ConfigError);
  CHECK_THROWS_AS(parse_range("a,b"), ConfigError);
}

TEST_CASE("JSON syntax errors carry byte offsets") {
  try {
    parse_json_text("{\"grid\": {\"R\": }}", "config");
    FAIL("accepted bad JSON");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 15);
    CHECK(e.exit_code() == 2);
  }
  CHECK_THROWS_AS(render_interface_svg_text("{\"R\": 10, \"levels\": [1"), ParseError);
  CHECK_THROWS_AS(render_interface_svg_text("{\"R\": 10, \"levels\": []}"), ParseError);
}

TEST_CASE("config validation") {
  auto ok = parse_config(parse_json_text(kScalar, "config"));
  CHECK(ok.potential.kind == PotentialKind::ScalarBistable);
  CHECK(ok.R_list == std::vector<double>{20});
  // resolved form parses back to itself
  CHECK(to_json(parse_config(to_json(ok))) == to_json(ok));

  auto bad = [](const std::string& text) { return parse_config(parse_json_text(text, "config")); };
  CHECK_THROWS_AS(bad(R"({"potential": {"kind": "scalar-bistable"}, "gird": {}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"potential": {"kind": "quartic"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"potential": {"kind": "scalar-bistable"}, "analysis": {"alpha": 0.4, "alpha_prime": 0.3}})"),
                  ConfigError);
  CHECK_THROWS_AS(bad(R"({"potential": {"kind": "scalar-bistable"}, "solver": {"init": "file:/no/such/field.bin"}})"),
                  ConfigError);
  CHECK_THROWS_AS(bad(R"({"grid": {"R": 10}})"), ConfigError);
  CHECK_THROWS_AS(load_config("/no/such/config.json"), ConfigError);

  for (const char* name : {"scalar_minimal.json", "n3_sweep.json", "saddle.json"}) CHECK_NOTHROW(load_config(config_path(name)));
}

TEST_CASE("exit codes") {
  auto d = scratch("exit");
  spit(d / "bad.json", R"({"potential": {"kind": "scalar-bistable"}, "analysis": {"alpha": 0.45}})");
  spit(d / "broken.json", "{\"potential\": ");
  spit(d / "ok.json", kScalar);
  CHECK(njx("run --config " + (d / "bad.json").string() + " --out " + (d / "o1").string()) == 2);
  CHECK(njx("run --config " + (d / "broken.json").string() + " --out " + (d / "o2").string()) == 2);
  CHECK(njx("disk --config " + (d / "ok.json").string() + " --init file:/nope --out " + (d / "f.bin").string()) == 2);
  CHECK(njx("analyze --config " + (d / "ok.json").string() + " --field /nope.bin --out " + (d / "r.json").string()) ==
        2);
  spit(d / "iface.json", "{\"R\": 10, \"levels\": [{\"r\": 1}");
  CHECK(njx("render --interface " + (d / "iface.json").string() + " --out " + (d / "x.svg").string()) == 2);
  CHECK(njx("hetero --config " + (d / "ok.json").string() + " --out " + (d / "p.csv").string()) == 0);
  CHECK(fs::exists(d / "p.json"));
}

TEST_CASE("run writes every artifact and is reproducible") {
  auto d = scratch("run");
  spit(d / "c.json", kScalar);
  REQUIRE(njx("run --config " + (d / "c.json").string() + " --out " + (d / "a").string()) == 0);
  for (const char* f : {"profile.csv", "fibers.csv", "summary.csv", "R20/field.bin", "R20/report.json",
                        "config.resolved.json", "R20/theta_map.csv"})
    CHECK(fs::exists(d / "a" / f));

  auto report = parse_json_text(slurp(d / "a/R20/report.json"), "report");
  for (const char* k : {"sigma_measure", "length_excess", "pointwise", "lipschitz"}) CHECK(report.contains(k));
  auto field = read_field((d / "a/R20/field.bin").string());
  CHECK(field.grid.R == 20);

  std::istringstream summary(slurp(d / "a/summary.csv"));
  std::string head, row;
  std::getline(summary, head);
  std::getline(summary, row);
  CHECK(head == "R,J,NsigmaR,sigma_measure,length_excess,k");
  CHECK(row.rfind("20,", 0) == 0);
  CHECK(slurp(d / "a/profile.csv").rfind("s,u1", 0) == 0);
  CHECK(slurp(d / "a/fibers.csv").rfind("r,J_r,gap,class", 0) == 0);

  REQUIRE(njx("run --config " + (d / "c.json").string() + " --out " + (d / "b").string()) == 0);
  CHECK(slurp(d / "a/R20/field.bin") == slurp(d / "b/R20/field.bin"));
  CHECK(slurp(d / "a/summary.csv") == slurp(d / "b/summary.csv"));

  // the stand-alone subcommands reproduce the pipeline's field
  REQUIRE(njx("disk --config " + (d / "c.json").string() + " --R 20 --out " + (d / "f.bin").string()) == 0);
  auto solo = read_field((d / "f.bin").string());
  auto ctx = prepare(parse_config(parse_json_text(kScalar, "config")));
  CHECK(total_energy(ctx.p, solo) == Approx(total_energy(ctx.p, field)).epsilon(1e-12));
  REQUIRE(njx("analyze --config " + (d / "c.json").string() + " --field " + (d / "f.bin").string() + " --out " +
              (d / "r.json").string()) == 0);
  CHECK(fs::exists(d / "r.json"));
}

TEST_CASE("SVG rendering") {
  auto p = Potential::complex_well(3);
  PolarGrid g(10, 40, 48, 3);
  auto zero = make_field(p, g);
  SvgStyle st;
  st.contour = 0.2;
  auto s0 = render_field_svg(zero, p.wells(), st);
  CHECK(s0 == render_field_svg(zero, p.wells(), st));
  CHECK(s0.rfind("<?xml", 0) == 0);
  CHECK(s0.find("</svg>") != std::string::npos);
  // one colour, no contour strokes
  int fills = 0;
  for (auto pos = s0.find("<path fill=\"#"); pos != std::string::npos; pos = s0.find("<path fill=\"#", pos + 1)) ++fills;
  CHECK(fills == 1);
  CHECK(s0.find("stroke=\"#000000\"") == std::string::npos);

  auto pr = solve_heteroclinic(p, 8, 4000, 1e-9);
  auto t = build_test_function(p, pr, g);
  auto s1 = render_field_svg(t, p.wells(), st);
  for (int j = 0; j < 3; ++j) CHECK(s1.find(std::string("fill=\"") + detail::well_color(j) + "\"") != std::string::npos);
  CHECK(s1.find("stroke=\"#000000\"") != std::string::npos);

  auto d = scratch("svg");
  write_field((d / "t.bin").string(), t);
  spit(d / "c.json", R"({"potential": {"kind": "polynomial-complex-well", "N": 3}})");
  REQUIRE(njx("render --config " + (d / "c.json").string() + " --field " + (d / "t.bin").string() + " --out " +
              (d / "a.svg").string()) == 0);
  REQUIRE(njx("render --config " + (d / "c.json").string() + " --field " + (d / "t.bin").string() + " --out " +
              (d / "b.svg").string()) == 0);
  CHECK(slurp(d / "a.svg") == slurp(d / "b.svg"));
  CHECK(njx("render --field " + (d / "t.bin").string() + " --out " + (d / "c.svg").string()) == 2);
}

TEST_CASE("interface rendering from a constant theta map") {
  json doc;
  doc["R"] = 50.0;
  doc["levels"] = json::array();
  for (double r : {9.0, 16.0, 25.0, 36.0, 49.0}) {
    double w = 2.0 / r;
    doc["levels"].push_back({{"r", r}, {"p_minus", -w}, {"p_plus", w}, {"q_minus", -1.5 * w}, {"q_plus", 1.5 * w},
                             {"hat_minus", -0.5 * w}, {"hat_plus", 0.5 * w}});
  }
  doc["curve"] = {{"vertices", {{16.0, 0.0}, {25.0, 0.0}, {36.0, 0.0}}}};
  auto s = render_interface_svg(doc);
  CHECK(s == render_interface_svg(doc));
  CHECK(s.find("</svg>") != std::string::npos);
  // the polyline runs along the positive x axis: every y coordinate is the centre row
  auto pos = s.find("stroke=\"#000000\" stroke-width=\"1.5\" d=\"");
  REQUIRE(pos != std::string::npos);
  auto path = s.substr(pos, s.find("\"/>", pos) - pos);
  CHECK(path.find(",320.000L") != std::string::npos);
}

TEST_CASE("run on the sample N=3 configuration reproduces the sweep shape") {
  auto d = scratch("n3");
  auto cfg = load_config(config_path("n3_sweep.json"));
  cfg.R_list = {40};
  std::FILE* log = std::tmpfile();
  REQUIRE(run(cfg, d, log) == 0);
  std::fclose(log);
  auto rep = parse_json_text(slurp(d / "R40/report.json"), "report");
  CHECK(rep.at("pointwise").at("violations").get<int>() == 0);
  CHECK(rep.at("lipschitz").at("violations").get<int>() == 0);
  CHECK(fs::exists(d / "R40/interface.json"));
  auto svg = render_interface_svg_text(slurp(d / "R40/interface.json"));
  CHECK(svg.find("</svg>") != std::string::npos);
}
