// Command-line driver: subcommands over the geotomo library with a shared
// key=value configuration surface. Exit codes: 0 ok, 1 usage, 2 numeric
// failure, 3 I/O.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geotomo/experiment.hpp"
#include "geotomo/phantoms.hpp"

namespace gt = geotomo;

namespace {

struct CliState {
  bool desk = false;
  std::string config_path;
  std::vector<std::string> sets;  // key=value overrides, command-line order
};

void add_config_options(CLI::App* app, CliState& st) {
  app->add_flag("--desk", st.desk, "start from the desk (CI-scale) profile");
  app->add_option("--config", st.config_path, "key=value config file applied over the defaults");
  auto push = [&st](const std::string& kv) { st.sets.push_back(kv); };
  app->add_option_function<std::string>("--set", push, "KEY=VALUE override (repeatable)")
      ->trigger_on_parse();
  const std::pair<const char*, const char*> mirrors[] = {
      {"--metric", "metric"},       {"--mesh-target", "mesh_target"},
      {"--mesh-file", "mesh_file"}, {"--nbeta", "n_beta"},
      {"--nalpha", "n_alpha"},      {"--epsilon", "epsilon"},
      {"--sigma", "sigma"},         {"--nu", "nu"},
      {"--ell", "ell"},             {"--phantom", "phantom"},
      {"--variant", "variant"},     {"--seed", "seed"},
      {"--outdir", "outdir"},       {"--ndraws", "n_draws"},
      {"--level", "level"},         {"--quad-step", "quad_step"},
      {"--replicates", "replicates"}, {"--truth", "truth"},
      {"--cross-res", "cross_res"}, {"--raster-res", "raster_res"}};
  for (const auto& [flag, key] : mirrors) {
    std::string k = key;
    app->add_option_function<std::string>(
           flag, [&st, k](const std::string& v) { st.sets.push_back(k + "=" + v); },
           std::string("sets ") + k)
        ->trigger_on_parse();
  }
}

// Overlay precedence: base profile, --desk scale, --config file, then flags
// and --set in command-line order.
gt::ExperimentConfig resolve_config(const CliState& st, gt::ExperimentConfig base) {
  if (st.desk) {
    const gt::ExperimentConfig d = gt::ExperimentConfig::desk();
    base.mesh_target = d.mesh_target;
    base.n_beta = d.n_beta;
    base.n_alpha = d.n_alpha;
  }
  if (!st.config_path.empty()) {
    std::ifstream in(st.config_path);
    if (!in) throw gt::IoError("cannot open config: " + st.config_path);
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto a = line.find_first_not_of(" \t\r\n");
      if (a == std::string::npos) continue;
      const auto b = line.find_last_not_of(" \t\r\n");
      gt::apply_override(base, line.substr(a, b - a + 1));
    }
  }
  for (const std::string& kv : st.sets) gt::apply_override(base, kv);
  return base;
}

void ensure_outdir(const gt::ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.outdir, ec);
  if (ec) throw gt::IoError("cannot create output directory: " + cfg.outdir);
}

std::string in_outdir(const gt::ExperimentConfig& cfg, const std::string& name) {
  return cfg.outdir + "/" + name;
}

gt::RayTransformMatrix assemble_from_config(const gt::ExperimentConfig& cfg,
                                            const gt::TriMesh& mesh,
                                            const gt::FanBeamGrid& grid,
                                            const gt::ConformalMetric& metric,
                                            double atten_const) {
  if (cfg.variant == "plain") return gt::assemble_A(mesh, grid, metric, cfg.quad_step);
  if (cfg.variant == "weighted")
    return gt::assemble_A_weighted(mesh, grid, metric, cfg.quad_step);
  if (cfg.variant == "attenuated")
    return gt::assemble_A_attenuated(
        mesh, grid, metric, Eigen::VectorXd::Constant(mesh.num_nodes(), atten_const),
        cfg.quad_step);
  throw gt::UsageError("unknown variant '" + cfg.variant + "'");
}

void dump_traced_ray(const gt::ConformalMetric& metric, double beta, double alpha,
                     double step, const std::string& path) {
  const gt::GeodesicPath p = gt::geodesic_trace(metric, {beta, alpha}, step);
  std::ofstream out(path);
  if (!out) throw gt::IoError("cannot open for writing: " + path);
  out << "t,x1,x2,v1,v2\n";
  char buf[192];
  for (const gt::PathSample& s : p.samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.x.x, s.x.y,
                  s.v.x, s.v.y);
    out << buf;
  }
  if (!out) throw gt::IoError("write failure: " + path);
}

int dispatch(CLI::App& app, int argc, char** argv) {
  // Populated by the option groups below.
  static CliState st;
  static std::string out_path, matrix_path, data_path;
  static bool table = false;
  static double atten_const = 0.7;
  static double trace_beta = 0.0, trace_alpha = 0.0;
  static std::string trace_out;
  static int example_which = 1;

  auto* mesh_gen = app.add_subcommand("mesh-gen", "generate a disk mesh and save it");
  add_config_options(mesh_gen, st);
  mesh_gen->add_option("--out", out_path, "mesh file path")->required();

  auto* assemble = app.add_subcommand("assemble", "assemble the ray transform matrix");
  add_config_options(assemble, st);
  assemble->add_option("--out", out_path, "matrix file path")->required();
  assemble->add_option("--atten-const", atten_const,
                       "constant attenuation coefficient (attenuated variant)");
  assemble->add_option("--trace-beta", trace_beta, "debug: entry angle of a ray to dump");
  assemble->add_option("--trace-alpha", trace_alpha, "debug: direction offset of the ray");
  assemble->add_option("--trace-out", trace_out,
                       "debug: write the traced ray as CSV (t,x1,x2,v1,v2)");

  auto* simulate = app.add_subcommand("simulate", "simulate noisy sinogram data");
  add_config_options(simulate, st);
  simulate->add_option("--out", out_path, "sinogram CSV path")->required();
  simulate->add_option("--matrix", matrix_path,
                       "assembled matrix: use the matrix route instead of direct quadrature");

  auto* invert = app.add_subcommand("invert", "posterior mean from matrix + data");
  add_config_options(invert, st);
  invert->add_option("--matrix", matrix_path, "assembled matrix file")->required();
  invert->add_option("--data", data_path, "sinogram CSV file")->required();
  invert->add_option("--out", out_path, "posterior summary path")->required();

  auto* sample = app.add_subcommand("sample", "posterior draws -> cross-section CSV");
  add_config_options(sample, st);
  sample->add_option("--matrix", matrix_path, "assembled matrix file")->required();
  sample->add_option("--data", data_path, "sinogram CSV file")->required();
  sample->add_option("--out", out_path, "cross-section CSV path")->required();

  auto* credible = app.add_subcommand(
      "credible", "credible interval for the smooth functional psi = exp(-4|x|^2)");
  add_config_options(credible, st);
  credible->add_option("--matrix", matrix_path, "assembled matrix file")->required();
  credible->add_option("--data", data_path, "sinogram CSV file")->required();
  credible->add_option("--out", out_path, "report path (optional)");

  auto* coverage = app.add_subcommand("coverage", "replicated coverage experiment");
  add_config_options(coverage, st);

  auto* example = app.add_subcommand("example", "run a worked example end to end");
  add_config_options(example, st);
  example->add_option("which", example_which, "example index")->required()->check(CLI::Range(1, 3));

  auto* oracles = app.add_subcommand("oracles", "run the analytic oracle suite");
  add_config_options(oracles, st);

  auto* dump_phantom = app.add_subcommand("dump-phantom", "rasterize a phantom (or dump the table)");
  add_config_options(dump_phantom, st);
  dump_phantom->add_option("--out", out_path, "output path")->required();
  dump_phantom->add_flag("--table", table, "dump the ellipse table CSV instead of a raster");

  app.require_subcommand(1);
  app.parse(argc, argv);

  if (app.got_subcommand(mesh_gen)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    int rings = 0;
    const gt::TriMesh mesh = gt::generate_disk_mesh(cfg.mesh_target, &rings);
    gt::save_mesh(mesh, out_path);
    std::printf("mesh-gen: nodes=%d triangles=%d rings=%d -> %s\n", mesh.num_nodes(),
                mesh.num_triangles(), rings, out_path.c_str());
    return 0;
  }

  if (app.got_subcommand(assemble)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    const gt::TriMesh mesh = gt::mesh_from_config(cfg);
    const gt::FanBeamGrid grid = gt::build_grid(cfg.n_beta, cfg.n_alpha);
    const gt::ConformalMetric metric = gt::metric_from_config(cfg);
    if (!trace_out.empty()) dump_traced_ray(metric, trace_beta, trace_alpha, cfg.quad_step, trace_out);
    const gt::RayTransformMatrix A = assemble_from_config(cfg, mesh, grid, metric, atten_const);
    gt::save_matrix(A, out_path);
    std::printf("assemble: %s %dx%d nnz=%lld -> %s\n", gt::variant_name(A.variant).c_str(),
                A.rows(), A.cols(), static_cast<long long>(A.entries.nonZeros()),
                out_path.c_str());
    return 0;
  }

  if (app.got_subcommand(simulate)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    const gt::FanBeamGrid grid = gt::build_grid(cfg.n_beta, cfg.n_alpha);
    gt::Sinogram Y;
    if (!matrix_path.empty()) {
      const gt::RayTransformMatrix A = gt::load_matrix(matrix_path);
      const gt::TriMesh mesh = gt::mesh_from_config(cfg);
      Y = gt::simulate_data(A, grid, gt::phantom_coeffs(cfg.phantom, mesh), cfg.epsilon,
                            cfg.seed);
    } else {
      const gt::ConformalMetric metric = gt::metric_from_config(cfg);
      const auto f = gt::phantom_function(cfg.phantom);
      if (cfg.variant == "weighted")
        Y = gt::simulate_data_analytic_weighted(metric, grid, f, cfg.epsilon, cfg.seed,
                                                cfg.quad_step);
      else if (cfg.variant == "plain")
        Y = gt::simulate_data_analytic(metric, grid, f, cfg.epsilon, cfg.seed, cfg.quad_step);
      else
        throw gt::UsageError("attenuated data needs an assembled matrix (--matrix)");
    }
    gt::save_sinogram(grid, Y, out_path);
    std::printf("simulate: n=%d eps=%g seed=%llu -> %s\n", grid.size(), cfg.epsilon,
                static_cast<unsigned long long>(cfg.seed), out_path.c_str());
    return 0;
  }

  if (app.got_subcommand(invert) || app.got_subcommand(sample) ||
      app.got_subcommand(credible)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    const gt::TriMesh mesh = gt::mesh_from_config(cfg);
    const gt::FanBeamGrid grid = gt::build_grid(cfg.n_beta, cfg.n_alpha);
    const gt::RayTransformMatrix A = gt::load_matrix(matrix_path);
    if (A.cols() != mesh.num_nodes())
      throw gt::UsageError("matrix columns do not match the configured mesh");
    const gt::Sinogram Y = gt::load_sinogram(grid, data_path);
    const auto prior = std::make_shared<const gt::PriorCovariance>(
        gt::assemble_prior_cov(mesh, gt::MaternParams{cfg.nu, cfg.ell, cfg.sigma}));
    const gt::GaussianPosterior post =
        gt::compute_posterior(A, grid, prior, cfg.sigma, cfg.epsilon, Y);

    if (app.got_subcommand(invert)) {
      gt::write_posterior_summary(post, cfg, out_path);
      std::printf("invert: m=%d n=%d residual=%.3g -> %s\n", post.mesh_nodes, post.n_rays,
                  post.residual, out_path.c_str());
      return 0;
    }
    if (app.got_subcommand(sample)) {
      const Eigen::MatrixXd draws = gt::sample_posterior(post, cfg.n_draws, cfg.seed + 1);
      const gt::CrossSection cs = gt::cross_section(draws, mesh, cfg.cross_res);
      gt::write_cross_section_csv(cs, out_path);
      std::printf("sample: %d draws, cross-section res=%d -> %s\n", cfg.n_draws,
                  cfg.cross_res, out_path.c_str());
      return 0;
    }
    const gt::MassMatrix mass = gt::mass_matrix(mesh);
    Eigen::VectorXd psi(mesh.num_nodes());
    for (int j = 0; j < mesh.num_nodes(); ++j)
      psi[j] = std::exp(-4.0 * mesh.nodes[j].norm2());
    const gt::FunctionalReport rep =
        gt::functional_credible(post, psi, mass, cfg.level, cfg.n_draws, cfg.seed + 1);
    std::printf("credible: estimate=%.10g radius=%.10g (gauss %.10g) sd=%.10g level=%g\n",
                rep.estimate, rep.radius, rep.radius_gauss, rep.sd, rep.level);
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) throw gt::IoError("cannot open for writing: " + out_path);
      char buf[256];
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %d\n", rep.estimate,
                    rep.radius, rep.radius_gauss, rep.sd, rep.level, rep.n_draws);
      out << "# estimate radius radius_gauss sd level n_draws\n" << buf;
      if (!out) throw gt::IoError("write failure: " + out_path);
    }
    return 0;
  }

  if (app.got_subcommand(coverage)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    ensure_outdir(cfg);
    const gt::CoverageResult res = gt::run_coverage(cfg);
    gt::write_coverage_csv(res, in_outdir(cfg, "coverage.csv"));
    gt::write_manifest(cfg, {"coverage.csv"}, in_outdir(cfg, "manifest.txt"));
    std::printf("coverage: %.4f at level %g, mean radius %.6g (%zu replicates) -> %s\n",
                res.coverage, cfg.level, res.mean_radius, res.rows.size(),
                in_outdir(cfg, "coverage.csv").c_str());
    return 0;
  }

  if (app.got_subcommand(example)) {
    const auto cfg = resolve_config(st, gt::example_config(example_which));
    const gt::ExampleSummary s = gt::run_example(example_which, cfg);
    if (example_which == 3)
      std::printf("example 3: band h=%.6g, f (h-units)=%.6g, rel L2 (h-route)=%.4f -> %s\n",
                  s.band_width_h, s.band_width_f, s.rel_l2_error, cfg.outdir.c_str());
    else
      std::printf("example %d: rel L2 error=%.4f -> %s\n", s.which, s.rel_l2_error,
                  cfg.outdir.c_str());
    return 0;
  }

  if (app.got_subcommand(oracles)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    ensure_outdir(cfg);
    const gt::OracleReport rep = gt::run_oracles(cfg);
    gt::write_oracle_csv(rep, in_outdir(cfg, "oracles.csv"));
    gt::write_manifest(cfg, {"oracles.csv"}, in_outdir(cfg, "manifest.txt"));
    for (const gt::OracleRow& r : rep.rows)
      std::printf("%-26s expected %-12.6g observed %-12.6g tol %-10.3g %s\n", r.name.c_str(),
                  r.expected, r.observed, r.tolerance, r.pass ? "pass" : "FAIL");
    std::printf("oracles: %s -> %s\n", rep.all_pass() ? "all pass" : "FAILURES PRESENT",
                in_outdir(cfg, "oracles.csv").c_str());
    return 0;
  }

  if (app.got_subcommand(dump_phantom)) {
    const auto cfg = resolve_config(st, gt::ExperimentConfig{});
    if (table) {
      std::ofstream out(out_path);
      if (!out) throw gt::IoError("cannot open for writing: " + out_path);
      out << "intensity,center_x,center_y,semi_a,semi_b,angle_deg\n";
      char buf[256];
      for (const gt::Ellipse& e : gt::shepp_logan_phantom().ellipses) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.intensity,
                      e.center.x, e.center.y, e.semi_a, e.semi_b, e.angle_deg);
        out << buf;
      }
      if (!out) throw gt::IoError("write failure: " + out_path);
    } else {
      gt::write_pgm(gt::raster_from_function(gt::phantom_function(cfg.phantom), cfg.raster_res),
                    out_path);
    }
    std::printf("dump-phantom: %s -> %s\n", table ? "table" : cfg.phantom.c_str(),
                out_path.c_str());
    return 0;
  }

  return 1;  // unreachable with require_subcommand(1)
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geodesic X-ray tomography with Gaussian-conjugate Bayesian inversion"};
  try {
    return dispatch(app, argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // --help exits 0; bad flags are usage errors
  } catch (const gt::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const gt::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const gt::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
