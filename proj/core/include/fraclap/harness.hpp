#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "fraclap/evolution.hpp"
#include "fraclap/fem.hpp"
#include "fraclap/mesh.hpp"
#include "fraclap/ratapprox.hpp"

namespace fraclap {

// L2 convergence rate for the fractional Poisson solve on quasi-uniform P1
// meshes: 2(s + 1/4) up to s = 3/4 (with a log(1/h) factor in the constant),
// saturating at the interpolation-limited rate 2 beyond.
struct RatePrediction {
  double slope = 0.0;
  bool log_factor = false;
};
RatePrediction predicted_rate(double s);

// Least squares y = slope * x + intercept; correlation is the Pearson
// coefficient of the point set. Needs >= 2 points with non-constant x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double correlation = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Worker count for the parallel studies: `requested` when positive, else
// FRACLAP_THREADS when set, else the logical core count.
int worker_count(int requested = 0);

// Deterministic pseudo-random coefficients in [-1, 1] (splitmix64). Property
// checks record the seed next to their results so runs can be replayed.
Vec seeded_vector(std::uint64_t seed, int size);

// ---- mesh refinement study -------------------------------------------------

struct ConvHRecord {
  double h = 0.0;
  double error_l2 = 0.0;
  double slope_running = 0.0;  // NaN on the coarsest row
};

struct ConvHStudy {
  double s = 0.0;
  std::vector<ConvHRecord> records;  // one per level except the reference
  double fitted_slope = 0.0;         // log-log least squares over the records
  double predicted_slope = 0.0;
  bool log_factor = false;
  double correlation = 0.0;
};

struct ConvHOptions {
  int dim = 1;                     // domain (0,1) or (0,1)^2
  std::vector<double> s_list = {0.5};
  ScalarField f;                   // empty: f = 1
  std::vector<double> h_list;      // strictly decreasing, >= 3 entries
  int n_rational = 12;
  BC bc = BC::Dirichlet;
  int threads = 0;
};

// Solves every (s, level) pair; the finest level serves as the reference and
// is excluded from the records and the fit. Errors are exact L2 distances:
// the nested uniform refinements represent each coarse solution exactly on
// the finest mesh, where the M-norm of the coefficient gap is taken.
std::vector<ConvHStudy> run_convergence_h(const ConvHOptions& opts);

// ---- rational degree study -------------------------------------------------

struct ConvNRecord {
  int n = 0;
  double error_M = 0.0;        // ||U_n - U_ref||_M
  double sup_error_fit = 0.0;  // achieved sup error of the degree-n fit
};

struct ConvNStudy {
  std::vector<ConvNRecord> records;
  double fitted_slope = 0.0;  // log(error) vs n over the decreasing prefix
  double correlation = 0.0;   // same prefix
  int prefix = 0;             // length of the strictly decreasing prefix
  std::string reference;      // "oracle" or "rational n_max+4"
};

struct ConvNOptions {
  int dim = 2;
  double s = 0.5;
  ScalarField f;           // empty: sin(pi x) (1D) or sin(pi x) sin(pi y)
  int cells_per_side = 64;
  std::vector<int> n_list = {4, 6, 8, 10, 12};
  BC bc = BC::Dirichlet;
  int threads = 0;
};

// Fixed mesh, increasing n. The reference is the dense spectral solve when
// the system has at most 2000 free nodes, else the rational solve at
// n_max + 4.
ConvNStudy run_convergence_n(const ConvNOptions& opts);

// ---- scalar minimax asymptotic ----------------------------------------------

struct StahlRecord {
  double s = 0.0;
  int n = 0;
  double sup_error = 0.0;
  double reference = 0.0;  // 4^{1+s} |sin(pi s)| e^{-2 pi sqrt(s n)}
  double ratio = 0.0;
};

// Fits x^s on [0,1] for each (s, n) and compares the achieved sup error
// against the asymptotic level.
std::vector<StahlRecord> run_stahl_check(const std::vector<double>& s_list,
                                         const std::vector<int>& n_list,
                                         const FitOptions& fit = {});

// ---- blow-up sweep -----------------------------------------------------------

struct SweepCell {
  double mass = 0.0;
  double sigma_gauss = 0.0;
  std::string outcome;  // "blowup", "no_blowup", or "error"
  double t_end = 0.0;
  long steps = 0;
  std::string note;  // error message; not serialized
};

struct SweepOptions {
  double s = 0.75;
  std::vector<double> masses;  // empty: 6-value default lattice
  std::vector<double> sigmas;  // empty: 6-value default lattice
  std::shared_ptr<const Mesh> mesh;  // empty: unit disc, ~2k nodes
  BC bc = BC::Neumann;
  double delta = 1e-7;
  double dt_max = 0.01;
  double t_final = 4.0;
  int n_rational = 12;
  int threads = 0;
};

// One Keller-Segel run per (mass, sigma_gauss) cell, all on the shared mesh.
// Workers reuse one fractional inverse each; a failed cell records outcome
// "error" and the sweep continues. Row-major cell order (mass outer, sigma
// inner) regardless of the worker count.
std::vector<SweepCell> run_blowup_sweep(const SweepOptions& opts);

// ---- CSV ---------------------------------------------------------------------

// All numeric fields print with %.17g, so equal configs give byte-identical
// files and values round-trip exactly.
void write_conv_h_csv(std::ostream& out, const std::vector<ConvHRecord>& rows);
void write_conv_n_csv(std::ostream& out, const std::vector<ConvNRecord>& rows);
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& rows);
void write_evolution_csv(std::ostream& out,
                         const std::vector<DiagnosticRecord>& rows);
void write_stahl_csv(std::ostream& out, const std::vector<StahlRecord>& rows);

std::vector<ConvHRecord> parse_conv_h_csv(std::istream& in);
std::vector<ConvNRecord> parse_conv_n_csv(std::istream& in);
std::vector<SweepCell> parse_sweep_csv(std::istream& in);
std::vector<DiagnosticRecord> parse_evolution_csv(std::istream& in);

// ---- config ------------------------------------------------------------------

struct DomainSpec {
  std::string kind = "rectangle";  // interval | rectangle | disc
  std::vector<double> params;      // [a,b] | [ax,ay,bx,by] | [radius]
};

struct MeshSpec {
  std::string kind = "uniform";  // uniform | rings
  std::vector<double> params;    // [m] | [mx,my] | [n_rings(,grading)]
};

struct InitialSpec {
  std::string kind = "gaussian";
  double mass = 1.0;
  double sigma_gauss = 1.0;
  std::array<double, 2> center{{0.0, 0.0}};
};

struct OutputSpec {
  std::string dir = ".";
  int stride = 1;
};

struct HarnessConfig {
  std::string model = "poisson";  // poisson|pme|pme-selfsimilar|keller-segel
  int dim = 2;
  DomainSpec domain;
  MeshSpec mesh;
  std::string bc = "neumann";  // dirichlet | neumann
  double s = 0.5;
  double sigma = 1.0;
  int n_rational = 12;
  std::string dt_policy = "adaptive";  // fixed | adaptive
  double dt_max = 0.01;
  double delta = 1e-7;
  double t_final = 1.0;
  InitialSpec initial;
  OutputSpec output;
};

// Strict parse: unknown keys, wrong types, and out-of-vocabulary enum
// strings all throw InvalidInput.
HarnessConfig parse_config(const std::string& json_text);
HarnessConfig load_config(const std::string& path);
std::string config_to_json(const HarnessConfig& cfg);

BC parse_bc(const std::string& name);
std::shared_ptr<const Mesh> build_mesh(const HarnessConfig& cfg);
EvolutionConfig to_evolution_config(const HarnessConfig& cfg);

}  // namespace fraclap
