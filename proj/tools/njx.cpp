// njx: command-line front end for the njunction library.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <njunction/njunction.hpp>

namespace fs = std::filesystem;
using namespace nj;

namespace {

void write_text(const fs::path& path, const std::string& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << s;
}

fs::path sidecar(const fs::path& out, const char* ext) {
  fs::path p = out;
  return p.replace_extension(ext);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"njx: equivariant N-junction experiments"};
  app.require_subcommand(1);

  std::string config, out, field_path, interface_path, radii, init;
  double R = 0;

  auto* hetero = app.add_subcommand("hetero", "solve the heteroclinic connection");
  hetero->add_option("--config", config, "run configuration (JSON)")->required();
  hetero->add_option("--out", out, "profile CSV")->required();

  auto* fiber = app.add_subcommand("fiber", "fiber minimizers and gaps");
  fiber->add_option("--config", config, "run configuration (JSON)")->required();
  fiber->add_option("--radii", radii, "start:stop:step or comma list");
  fiber->add_option("--out", out, "fibers CSV")->required();

  auto* disk = app.add_subcommand("disk", "minimize on the disk");
  disk->add_option("--config", config, "run configuration (JSON)")->required();
  disk->add_option("--R", R, "disk radius (default: grid.R)");
  disk->add_option("--init", init, "test | zero | file:PATH");
  disk->add_option("--out", out, "field file")->required();

  auto* analyze = app.add_subcommand("analyze", "structure analysis of a field");
  analyze->add_option("--field", field_path, "field file")->required();
  analyze->add_option("--config", config, "run configuration (JSON)")->required();
  analyze->add_option("--out", out, "report JSON")->required();

  auto* render = app.add_subcommand("render", "SVG rendering of a field or interface");
  auto* rf = render->add_option("--field", field_path, "field file");
  auto* ri = render->add_option("--interface", interface_path, "interface JSON");
  rf->excludes(ri);
  render->add_option("--config", config, "run configuration, needed for fields");
  render->add_option("--out", out, "SVG file")->required();

  auto* run = app.add_subcommand("run", "full pipeline over the sweep");
  run->add_option("--config", config, "run configuration (JSON)")->required();
  run->add_option("--out", out, "output directory (default: config output)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*hetero) {
      auto ctx = prepare(load_config(config));
      write_profile_csv(out, ctx.pr, ctx.p.dim());
      write_json(sidecar(out, ".json"), profile_json(ctx.pr));
      std::printf("sigma %.12g residual %.3e tail_rate %.6g\n", ctx.pr.sigma, ctx.pr.residual, ctx.pr.tail_rate);
    } else if (*fiber) {
      auto cfg = load_config(config);
      auto ctx = prepare(cfg);
      auto t = run_fibers(ctx, radii.empty() ? cfg.fiber.radii : parse_range(radii));
      write_fibers_csv(out, t);
      std::printf("%zu radii, %d positive gaps, fitted rate %.6g, kbar %.6g\n", t.rows.size(), t.positive,
                  t.fitted_rate, t.kbar);
    } else if (*disk) {
      auto cfg = load_config(config);
      auto ctx = prepare(cfg);
      SolveReport rep;
      std::optional<std::string> in;
      if (!init.empty()) {
        if (init.rfind("file:", 0) == 0 && !fs::exists(init.substr(5)))
          throw ConfigError("init file not found: " + init.substr(5));
        in = init.rfind("file:", 0) == 0 ? "file:" + fs::absolute(init.substr(5)).string() : init;
      }
      auto u = solve_disk(ctx, R > 0 ? R : cfg.grid.R, &rep, in);
      write_field(out, u);
      std::printf("J %.12g iterations %d residual %.3e time %.2fs\n", rep.energy, rep.iterations, rep.gradient_norm,
                  rep.wall_time);
    } else if (*analyze) {
      auto ctx = prepare(load_config(config));
      auto u = read_field(field_path);
      auto o = analyze_field(ctx, u);
      write_analysis(ctx, o, out);
      for (const auto& e : o.errors) std::fprintf(stderr, "note: %s\n", e.c_str());
      std::printf("|Sigma| %.6g length_excess %.6g pointwise %d/%d\n", o.sigma.measure, o.length_excess_value(),
                  o.pointwise.violations, o.pointwise.tested);
    } else if (*render) {
      SvgStyle st;
      if (!field_path.empty()) {
        if (config.empty()) throw ConfigError("render --field needs --config for the wells");
        auto cfg = load_config(config);
        auto p = cfg.potential.build();
        auto f = read_field(field_path);
        auto k = estimate_constants(p, cfg.potential.estimate_options());
        double delta = cfg.analysis.delta ? *cfg.analysis.delta : default_delta(p, k);
        st.contour = structure_radius(p, k, delta, cfg.analysis.alpha);
        write_text(out, render_field_svg(f, p.wells(), st));
      } else if (!interface_path.empty()) {
        write_text(out, render_interface_svg_text(read_text_file(interface_path), st));
      } else {
        throw ConfigError("render needs --field or --interface");
      }
    } else if (*run) {
      auto cfg = load_config(config);
      fs::path dir = out.empty() ? cfg.resolve(cfg.output) : fs::path(out);
      return nj::run(cfg, dir);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "njx: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "njx: %s\n", e.what());
    return 1;
  }
  return 0;
}
