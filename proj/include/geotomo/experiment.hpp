#pragma once

// Experiment driver: plain-text configuration, the three worked examples,
// the analytic-oracle suite, coverage runs, and file artifacts (CSV, PGM,
// posterior summaries, manifests).

#include <string>
#include <vector>

#include "geotomo/posterior.hpp"

namespace geotomo {

//----------------------------------------------------------------------------
// Configuration: key=value lines, '#' comments. Unknown keys are rejected.
//----------------------------------------------------------------------------

struct ExperimentConfig {
  std::string metric = "euclidean";  // euclidean | bump
  int mesh_target = 6027;
  std::string mesh_file;  // when set, overrides mesh_target
  int n_beta = 170;
  int n_alpha = 85;
  double epsilon = 1e-3;
  double sigma = 1.0;
  double nu = 1.5;
  double ell = 0.2;
  std::string phantom = "shepp_logan";  // shepp_logan | h2 | one
  std::string variant = "plain";        // plain | attenuated | weighted
  std::uint64_t seed = 1;
  std::string outdir = ".";
  int n_draws = 2000;
  double level = 0.9;
  double quad_step = 1e-3;
  int replicates = 200;
  std::string truth = "prior";  // prior | bump (coverage truth source)
  int cross_res = 201;          // cross-section sample count
  int raster_res = 256;         // PGM raster resolution

  // The small profile used by CI and the cheaper acceptance criteria.
  static ExperimentConfig desk();
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);
// "key=value" override, same keys as the file format.
void apply_override(ExperimentConfig& config, const std::string& assignment);

//----------------------------------------------------------------------------
// Shared experiment state assembled from a config.
//----------------------------------------------------------------------------

ConformalMetric metric_from_config(const ExperimentConfig& config);
TriMesh mesh_from_config(const ExperimentConfig& config);

// Analytic phantom by name (shepp_logan | h2 | one).
std::function<double(Vec2)> phantom_function(const std::string& name);

// Nodal coefficients of a named phantom.
Eigen::VectorXd phantom_coeffs(const std::string& name, const TriMesh& mesh);

//----------------------------------------------------------------------------
// Rasters and image output. PGM is plain P2, linear grayscale over the data
// range, the range recorded in a header comment. Row 0 is the top of the
// image (x2 = +1 for mesh rasters).
//----------------------------------------------------------------------------

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major
};

Raster raster_from_mesh(const TriMesh& mesh, const Eigen::VectorXd& coeffs, int res);
Raster raster_from_function(const std::function<double(Vec2)>& f, int res);
Raster raster_from_sinogram(const FanBeamGrid& grid, const Sinogram& sino);
void write_pgm(const Raster& raster, const std::string& path);

//----------------------------------------------------------------------------
// Example runs. Artifacts land in config.outdir; the returned summary holds
// the quantitative highlights.
//----------------------------------------------------------------------------

struct ExampleSummary {
  int which = 0;
  double rel_l2_error = 0.0;   // ||fbar - f_true||_m / ||f_true||_m (ex 1, 2)
  double band_width_h = 0.0;   // ex 3: mean boundary band width, h-route
  double band_width_f = 0.0;   // ex 3: f-route band width in h-units
  std::vector<std::string> artifacts;
};

// Per-example defaults (metric, phantom, noise level) on top of the global
// defaults; caller-supplied config overrides go on top of these.
ExperimentConfig example_config(int which);

ExampleSummary run_example(int which, const ExperimentConfig& config);

//----------------------------------------------------------------------------
// Oracle suite: analytic identities evaluated at the configured scale.
// Failures become report rows, never exceptions.
//----------------------------------------------------------------------------

struct OracleRow {
  std::string name;
  double expected = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;  // comparison scale: pass iff |obs-exp| <= tol
  bool pass = false;
};

struct OracleReport {
  std::vector<OracleRow> rows;
  bool all_pass() const;
};

OracleReport run_oracles(const ExperimentConfig& config);
void write_oracle_csv(const OracleReport& report, const std::string& path);

//----------------------------------------------------------------------------
// Coverage driver: wraps coverage_experiment with config-selected truth
// (fresh prior draws, or the fixed smooth bump f0 with fine-quadrature
// functional truth) and the functional psi(x) = exp(-4|x|^2).
//----------------------------------------------------------------------------

CoverageResult run_coverage(const ExperimentConfig& config);
void write_coverage_csv(const CoverageResult& result, const std::string& path);

//----------------------------------------------------------------------------
// Misc artifacts.
//----------------------------------------------------------------------------

void write_cross_section_csv(const CrossSection& cs, const std::string& path);
void write_posterior_summary(const GaussianPosterior& post, const ExperimentConfig& config,
                             const std::string& path);
// Config echo plus FNV-1a content hashes of the listed files.
void write_manifest(const ExperimentConfig& config, const std::vector<std::string>& files,
                    const std::string& path);

// <f0, psi_h>_{L^2} by per-triangle 7-point Gauss quadrature (exact to
// degree 5) of the analytic f0 against the P1 interpolant psi.
double integrate_against(const TriMesh& mesh, const Eigen::VectorXd& psi,
                         const std::function<double(Vec2)>& f0);

}  // namespace geotomo
