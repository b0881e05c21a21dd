#pragma once

#include <Eigen/SparseCholesky>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "fraclap/fem.hpp"
#include "fraclap/fracsolve.hpp"

namespace fraclap {

// PME: d rho/dt = sigma Lap(rho) - div(rho grad c), -(-Lap)^s c = rho.
// PME_SelfSimilar adds the confining drift + div(x rho).
// KellerSegel: d rho/dt = Lap(rho) - div(rho grad c), (-Lap)^s c = rho*
// (diffusion coefficient fixed at 1; rho* is rho for Dirichlet and rho minus
// its mean for Neumann, where the plain problem is not solvable).
enum class EvolutionModel { PME, PME_SelfSimilar, KellerSegel };

// Repulsive: c = -(-Lap)^{-s} rho (PME). Attractive: c = +(-Lap)^{-s} rho*.
enum class PotentialSign { Repulsive, Attractive };

enum class DtPolicy { Fixed, Adaptive };

struct EvolutionConfig {
  EvolutionModel model = EvolutionModel::PME;
  double s = 0.5;
  double sigma = 1.0;  // regularization strength; KellerSegel ignores it
  PotentialSign potential_sign = PotentialSign::Repulsive;
  BC bc = BC::Neumann;
  DtPolicy dt_policy = DtPolicy::Adaptive;
  double dt_max = 0.01;
  double t_final = 1.0;
  double delta = 1e-7;  // blow-up threshold on the adaptive step
  int n_rational = 12;
  bool transport_lumping = false;
  double bounds_tol = 1e-5;
  FitOptions fit;
};

// Model-appropriate defaults: the potential sign and, for KellerSegel, the
// unit diffusion convention.
EvolutionConfig default_config(EvolutionModel model);

// Throws InvalidInput when sigma < 0, delta <= 0, t_final <= 0, s outside
// (0,1), n_rational out of range, or dt_max <= 0.
void validate(const EvolutionConfig& cfg);

struct State {
  FeFunction rho;
  FeFunction c;
  double t = 0.0;
  double dt_last = 0.0;
  double mass = 0.0;
  double second_moment = 0.0;
  double linf = 0.0;
  double h1_semi = 0.0;
  double min_density = 0.0;
  bool blowup_flag = false;
};

// One diagnostics row; l2_dist_ref is NaN when no reference is configured.
struct DiagnosticRecord {
  double t = 0.0;
  double dt = 0.0;
  double mass = 0.0;
  double linf = 0.0;
  double h1_semi = 0.0;
  double second_moment = 0.0;
  double l2_dist_ref = 0.0;
  double min_density = 0.0;
  bool blowup_flag = false;
};

// Per-run machinery built once: the fractional inverse (bounds, fit, shifted
// factorizations), mass/moment quadrature weights, and a single-slot cache
// of the implicit factorization M_t + dt*sigma*S keyed by dt. A workspace is
// used by one run at a time; concurrent sweep cells each own one (they may
// share the FractionalInverse, which is immutable).
class EvolutionWorkspace {
 public:
  EvolutionWorkspace(
      SystemPtr system, const EvolutionConfig& cfg,
      std::shared_ptr<const FractionalInverse> shared_inverse = nullptr);

  const FemSystem& system() const { return *system_; }
  SystemPtr system_ptr() const { return system_; }
  const EvolutionConfig& config() const { return cfg_; }
  const FractionalInverse& inverse() const { return *inverse_; }
  std::shared_ptr<const FractionalInverse> inverse_ptr() const {
    return inverse_;
  }
  double effective_sigma() const;
  const Vec& mass_weights() const { return mass_w_; }    // integral of phi_i
  const Vec& moment_weights() const { return mom_w_; }   // integral |x|^2 phi_i

  // Mass matrix paired with the time derivative: consistent, or row-sum
  // lumped when the config asks for it. Lumping keeps the column sums of M,
  // so the discrete mass balance is unchanged.
  const Eigen::SparseMatrix<double>& time_mass_matrix() const { return Mt_; }

  // Solves (M_t + dt * effective_sigma * S) x = rhs, refactorizing only when
  // dt changes.
  Vec implicit_solve(double dt, const Vec& rhs) const;

 private:
  SystemPtr system_;
  EvolutionConfig cfg_;
  std::shared_ptr<const FractionalInverse> inverse_;
  Eigen::SparseMatrix<double> Mt_;  // consistent or lumped mass
  Eigen::SparseMatrix<double> Sc_;
  Vec mass_w_, mom_w_;
  mutable double cached_dt_ = -1.0;
  mutable std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>
      implicit_;
};

// Potential c from the density: potential_sign * (-Lap_h)^{-s} rho, with the
// Neumann mean-zero projection applied inside the fractional solve.
FeFunction compute_potential(const EvolutionWorkspace& ws,
                             const FeFunction& rho);

// P1 gradient of c per element, minus the element centroid when
// `confining_drift` is set: the transport velocity grad(c) or grad(c) - x.
std::vector<std::array<double, 2>> transport_velocity(const FemSystem& system,
                                                      const FeFunction& c,
                                                      bool confining_drift);

// Galerkin convection matrix T_ij = integral (v . grad phi_j) phi_i over the
// free nodes, exact per element (v is element-constant). The step applies
// T^T, whose action tests rho against v . grad phi_i; since sum_j phi_j = 1,
// T * ones = 0 and explicit transport conserves mass exactly on Neumann
// meshes.
SpMat assemble_transport(const FemSystem& system,
                         const std::vector<std::array<double, 2>>& velocity);

// Fills diagnostics for a fresh density at t = 0 (c is zero until a step).
State initial_state(const EvolutionWorkspace& ws, FeFunction rho0);

// min(dt_max, 1 / max(linf, h1_semi)); dt_max when the density vanishes.
double adaptive_dt(const State& state, const EvolutionConfig& cfg);

// Strict inequality: dt == delta is not blow-up.
bool detect_blowup(double dt, double delta);

// One IMEX step of size dt: (M_t + dt sigma S) rho' = M_t rho + dt T^T rho
// with c and the velocity rebuilt from the current state. Throws
// NumericError on a failed solve or a non-finite result (nan-state).
State step_dt(const State& state, const EvolutionWorkspace& ws, double dt);

// step_dt with dt chosen by the config policy.
State step(const State& state, const EvolutionWorkspace& ws);

struct RunOptions {
  int stride = 1;              // record every stride-th step
  long max_steps = 1000000;
  ScalarField reference;       // optional: adds the L2 distance diagnostic
  std::shared_ptr<const FractionalInverse> shared_inverse;
};

struct RunResult {
  std::vector<DiagnosticRecord> trajectory;
  State final_state;
  long steps = 0;
  bool failed = false;   // a step threw; trajectory kept up to that point
  std::string error;
};

// Steps until t >= t_final, blow-up, max_steps, or failure. The trajectory
// always includes the initial and final states.
RunResult run(const EvolutionConfig& cfg, SystemPtr system,
              const FeFunction& rho0, const RunOptions& opts = {});

// Radial steady state psi with sigma*log(psi) + psi = -r^2/2 + c on the disc
// of the given radius, the constant c tuned by bisection until the quadrature
// mass matches `mass` to 1e-10 relative. The scalar solve is a safeguarded
// Newton iteration on log(psi), globally convergent since the residual is
// convex and increasing.
class FpSteadyState {
 public:
  FpSteadyState(double sigma, double mass, double radius);

  double psi(double r) const;
  double operator()(double x, double y) const {
    return psi(std::sqrt(x * x + y * y));
  }
  double constant() const { return c_; }
  ScalarField as_field() const;

 private:
  double sigma_ = 1.0;
  double c_ = 0.0;
};

// k * (1 - r^2)^{1-s} for r < 1, else 0, with r = |y|. unit_mass picks k so
// the d-dimensional integral is 1; otherwise k is the closed-form constant
// d Gamma(d/2) / ((d + 2(1-s)) 2^{2(1-s)} Gamma(2-s) Gamma(d/2+1-s)), kept
// selectable for comparison even though the unit-mass normalization is what
// every caller here wants.
double barenblatt_profile(double s, int d, bool unit_mass, double r);

// exp(-2 t / (C_omega * rho0_linf)): the reference envelope for
// distance-to-equilibrium decay plots.
double decay_reference(double t, double C_omega, double rho0_linf);

// Two ordered initial data on (-5,5)^2: u1 = g(x-2), u2 = g(x-2) + 2 g(x+2)
// with g(p) = amplitude * exp(-|p|^2 / width) and shifts in the first
// coordinate. Interpolated nodally, so u2 - u1 >= 0 holds exactly at t = 0.
struct ComparisonScenario {
  ScalarField u1;
  ScalarField u2;
  double amplitude = 1.0;
  double width = 1.0;
};
ComparisonScenario comparison_scenario(double amplitude = 1.0,
                                       double width = 1.0);

// L2 projection of exp(-|x - center|^2 / (2 sigma_gauss^2)) rescaled so the
// discrete mass equals `mass` exactly.
FeFunction gaussian_initial_data(SystemPtr system, double mass,
                                 double sigma_gauss, double cx = 0.0,
                                 double cy = 0.0);

}  // namespace fraclap
