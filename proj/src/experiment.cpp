#include "geotomo/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geotomo/phantoms.hpp"
#include "geotomo/prior.hpp"

namespace geotomo {
namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw UsageError("config: bad numeric value for '" + key + "': " + value);
  }
  if (pos != value.size())
    throw UsageError("config: trailing garbage in value for '" + key + "': " + value);
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw UsageError("config: bad integer value for '" + key + "': " + value);
  }
  if (pos != value.size())
    throw UsageError("config: trailing garbage in value for '" + key + "': " + value);
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure: " + path);
  return ss.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.mesh_target = 800;
  c.n_beta = 50;
  c.n_alpha = 40;
  return c;
}

void apply_override(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw UsageError("config: expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (key.empty()) throw UsageError("config: empty key in '" + assignment + "'");

  if (key == "metric") {
    c.metric = value;
  } else if (key == "mesh_target") {
    c.mesh_target = static_cast<int>(parse_int(key, value));
  } else if (key == "mesh_file") {
    c.mesh_file = value;
  } else if (key == "n_beta") {
    c.n_beta = static_cast<int>(parse_int(key, value));
  } else if (key == "n_alpha") {
    c.n_alpha = static_cast<int>(parse_int(key, value));
  } else if (key == "epsilon") {
    c.epsilon = parse_double(key, value);
  } else if (key == "sigma") {
    c.sigma = parse_double(key, value);
  } else if (key == "nu") {
    c.nu = parse_double(key, value);
  } else if (key == "ell") {
    c.ell = parse_double(key, value);
  } else if (key == "phantom") {
    c.phantom = value;
  } else if (key == "variant") {
    c.variant = value;
  } else if (key == "seed") {
    const long long s = parse_int(key, value);
    if (s < 0) throw UsageError("config: seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "outdir") {
    c.outdir = value;
  } else if (key == "n_draws") {
    c.n_draws = static_cast<int>(parse_int(key, value));
  } else if (key == "level") {
    c.level = parse_double(key, value);
  } else if (key == "quad_step") {
    c.quad_step = parse_double(key, value);
  } else if (key == "replicates") {
    c.replicates = static_cast<int>(parse_int(key, value));
  } else if (key == "truth") {
    c.truth = value;
  } else if (key == "cross_res") {
    c.cross_res = static_cast<int>(parse_int(key, value));
  } else if (key == "raster_res") {
    c.raster_res = static_cast<int>(parse_int(key, value));
  } else {
    throw UsageError("config: unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    apply_override(c, line);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_file(path));
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "metric=" << c.metric << '\n';
  out << "mesh_target=" << c.mesh_target << '\n';
  out << "mesh_file=" << c.mesh_file << '\n';
  out << "n_beta=" << c.n_beta << '\n';
  out << "n_alpha=" << c.n_alpha << '\n';
  out << "epsilon=" << fmt_double(c.epsilon) << '\n';
  out << "sigma=" << fmt_double(c.sigma) << '\n';
  out << "nu=" << fmt_double(c.nu) << '\n';
  out << "ell=" << fmt_double(c.ell) << '\n';
  out << "phantom=" << c.phantom << '\n';
  out << "variant=" << c.variant << '\n';
  out << "seed=" << c.seed << '\n';
  out << "outdir=" << c.outdir << '\n';
  out << "n_draws=" << c.n_draws << '\n';
  out << "level=" << fmt_double(c.level) << '\n';
  out << "quad_step=" << fmt_double(c.quad_step) << '\n';
  out << "replicates=" << c.replicates << '\n';
  out << "truth=" << c.truth << '\n';
  out << "cross_res=" << c.cross_res << '\n';
  out << "raster_res=" << c.raster_res << '\n';
  return out.str();
}

ConformalMetric metric_from_config(const ExperimentConfig& c) {
  if (c.metric == "euclidean") return ConformalMetric::euclidean();
  if (c.metric == "bump") return ConformalMetric::bump();
  throw UsageError("unknown metric '" + c.metric + "' (expected euclidean|bump)");
}

TriMesh mesh_from_config(const ExperimentConfig& c) {
  if (!c.mesh_file.empty()) return load_mesh(c.mesh_file);
  return generate_disk_mesh(c.mesh_target);
}

std::function<double(Vec2)> phantom_function(const std::string& name) {
  if (name == "shepp_logan") return [](Vec2 x) { return shepp_logan(x); };
  if (name == "h2") return [](Vec2 x) { return h2_smooth(x); };
  if (name == "one") return [](Vec2) { return 1.0; };
  throw UsageError("unknown phantom '" + name + "' (expected shepp_logan|h2|one)");
}

Eigen::VectorXd phantom_coeffs(const std::string& name, const TriMesh& mesh) {
  const auto f = phantom_function(name);
  Eigen::VectorXd v(mesh.num_nodes());
  for (int j = 0; j < mesh.num_nodes(); ++j) v[j] = f(mesh.nodes[j]);
  return v;
}

//----------------------------------------------------------------------------
// Rasters.
//----------------------------------------------------------------------------

Raster raster_from_mesh(const TriMesh& mesh, const Eigen::VectorXd& coeffs, int res) {
  return raster_from_function(
      [&](Vec2 x) { return interp(mesh, coeffs, x); }, res);
}

Raster raster_from_function(const std::function<double(Vec2)>& f, int res) {
  if (res < 2) throw UsageError("raster resolution must be >= 2");
  Raster r;
  r.width = res;
  r.height = res;
  r.values.assign(static_cast<std::size_t>(res) * res, 0.0);
  for (int row = 0; row < res; ++row) {
    const double y = 1.0 - 2.0 * (row + 0.5) / res;
    for (int col = 0; col < res; ++col) {
      const double x = -1.0 + 2.0 * (col + 0.5) / res;
      const Vec2 p{x, y};
      r.values[static_cast<std::size_t>(row) * res + col] = p.norm2() <= 1.0 ? f(p) : 0.0;
    }
  }
  return r;
}

Raster raster_from_sinogram(const FanBeamGrid& grid, const Sinogram& sino) {
  if (sino.values.size() != grid.size())
    throw UsageError("sinogram length does not match the grid");
  Raster r;
  r.width = grid.n_beta;
  r.height = grid.n_alpha;
  r.values.assign(static_cast<std::size_t>(r.width) * r.height, 0.0);
  // Column = beta index, row 0 = largest alpha.
  for (int row = 0; row < r.height; ++row) {
    const int ia = grid.n_alpha - 1 - row;
    for (int col = 0; col < r.width; ++col)
      r.values[static_cast<std::size_t>(row) * r.width + col] =
          sino.values[col * grid.n_alpha + ia];
  }
  return r;
}

void write_pgm(const Raster& raster, const std::string& path) {
  if (raster.width < 1 || raster.height < 1 ||
      raster.values.size() != static_cast<std::size_t>(raster.width) * raster.height)
    throw UsageError("malformed raster");
  double lo = raster.values[0], hi = raster.values[0];
  for (double v : raster.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  auto out = open_out(path);
  out << "P2\n";
  out << "# range " << fmt_double(lo) << ' ' << fmt_double(hi) << '\n';
  out << raster.width << ' ' << raster.height << "\n255\n";
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  int on_line = 0;
  for (std::size_t k = 0; k < raster.values.size(); ++k) {
    const int g =
        std::min(255, std::max(0, static_cast<int>(std::lround((raster.values[k] - lo) * scale))));
    out << g << (++on_line % 16 == 0 ? '\n' : ' ');
  }
  if (on_line % 16 != 0) out << '\n';
  if (!out) throw IoError("write failure: " + path);
}

//----------------------------------------------------------------------------
// CSV / summary / manifest writers.
//----------------------------------------------------------------------------

bool OracleReport::all_pass() const {
  for (const OracleRow& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

void write_oracle_csv(const OracleReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "check,expected,observed,tolerance,pass\n";
  for (const OracleRow& r : report.rows)
    out << r.name << ',' << fmt_double(r.expected) << ',' << fmt_double(r.observed) << ','
        << fmt_double(r.tolerance) << ',' << (r.pass ? 1 : 0) << '\n';
  if (!out) throw IoError("write failure: " + path);
}

void write_coverage_csv(const CoverageResult& result, const std::string& path) {
  auto out = open_out(path);
  out << "replicate,estimate,radius,truth,covered\n";
  for (const CoverageRow& r : result.rows)
    out << r.replicate << ',' << fmt_double(r.estimate) << ',' << fmt_double(r.radius) << ','
        << fmt_double(r.truth) << ',' << (r.covered ? 1 : 0) << '\n';
  if (!out) throw IoError("write failure: " + path);
}

void write_cross_section_csv(const CrossSection& cs, const std::string& path) {
  auto out = open_out(path);
  out << "x1,mean,q05,q95";
  for (int d = 0; d < cs.values.cols(); ++d) out << ",draw_" << (d + 1);
  out << '\n';
  for (int i = 0; i < cs.x1.size(); ++i) {
    out << fmt_double(cs.x1[i]) << ',' << fmt_double(cs.mean[i]) << ',' << fmt_double(cs.q05[i])
        << ',' << fmt_double(cs.q95[i]);
    for (int d = 0; d < cs.values.cols(); ++d) out << ',' << fmt_double(cs.values(i, d));
    out << '\n';
  }
  if (!out) throw IoError("write failure: " + path);
}

void write_posterior_summary(const GaussianPosterior& post, const ExperimentConfig& config,
                             const std::string& path) {
  auto out = open_out(path);
  out << "# epsilon sigma nu ell mesh_nodes n_rays seed\n";
  out << fmt_double(post.epsilon) << ' ' << fmt_double(post.sigma) << ' '
      << fmt_double(config.nu) << ' ' << fmt_double(config.ell) << ' ' << post.mesh_nodes << ' '
      << post.n_rays << ' ' << config.seed << '\n';
  out << "# posterior mean (one coefficient per line)\n";
  for (int j = 0; j < post.mean.size(); ++j) out << fmt_double(post.mean[j]) << '\n';
  if (!out) throw IoError("write failure: " + path);
}

void write_manifest(const ExperimentConfig& config, const std::vector<std::string>& files,
                    const std::string& path) {
  const std::string cfg = serialize_config(config);
  char hex[32];
  auto out = open_out(path);
  std::snprintf(hex, sizeof hex, "%016" PRIx64, fnv1a64(cfg));
  out << "# run manifest\n# config (fnv1a " << hex << ")\n" << cfg;
  out << "# files (name bytes fnv1a)\n";
  for (const std::string& name : files) {
    const std::string full = config.outdir.empty() ? name : config.outdir + "/" + name;
    const std::string bytes = read_file(full);
    std::snprintf(hex, sizeof hex, "%016" PRIx64, fnv1a64(bytes));
    out << name << ' ' << bytes.size() << ' ' << hex << '\n';
  }
  if (!out) throw IoError("write failure: " + path);
}

//----------------------------------------------------------------------------
// 7-point Gauss quadrature (degree 5) of f0 * psi_h over the mesh.
//----------------------------------------------------------------------------

double integrate_against(const TriMesh& mesh, const Eigen::VectorXd& psi,
                         const std::function<double(Vec2)>& f0) {
  if (psi.size() != mesh.num_nodes())
    throw UsageError("integrate_against: psi length does not match the mesh");
  static const double wq[7] = {9.0 / 40.0,
                               0.13239415278850618,  // (155 + sqrt 15)/1200
                               0.13239415278850618,
                               0.13239415278850618,
                               0.12593918054482715,  // (155 - sqrt 15)/1200
                               0.12593918054482715,
                               0.12593918054482715};
  static const double a1 = 0.059715871789769820, b1 = 0.47014206410511509;
  static const double a2 = 0.79742698535308732, b2 = 0.10128650732345634;
  static const double bary[7][3] = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, {a1, b1, b1}, {b1, a1, b1},
                                    {b1, b1, a1},                      {a2, b2, b2}, {b2, a2, b2},
                                    {b2, b2, a2}};
  double total = 0.0;
  for (const auto& tri : mesh.triangles) {
    const Vec2 p0 = mesh.nodes[tri[0]], p1 = mesh.nodes[tri[1]], p2 = mesh.nodes[tri[2]];
    const double area =
        0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
    double acc = 0.0;
    for (int q = 0; q < 7; ++q) {
      const Vec2 x = bary[q][0] * p0 + bary[q][1] * p1 + bary[q][2] * p2;
      const double psi_h =
          bary[q][0] * psi[tri[0]] + bary[q][1] * psi[tri[1]] + bary[q][2] * psi[tri[2]];
      acc += wq[q] * f0(x) * psi_h;
    }
    total += area * acc;
  }
  return total;
}

}  // namespace geotomo
