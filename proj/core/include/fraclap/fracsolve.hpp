#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "fraclap/fem.hpp"
#include "fraclap/ratapprox.hpp"

namespace fraclap {

// Estimated extremal generalized eigenvalues of S v = lambda M v on the free
// nodes, plus the safety factors used to widen the interval before a rational
// fit. For Neumann systems lambda_min is the smallest nonzero eigenvalue (the
// constant mode is deflated).
struct SpectralInterval {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double safety_low = 0.9;
  double safety_high = 1.1;

  double fit_lo() const { return safety_low * lambda_min; }
  double fit_hi() const { return safety_high * lambda_max; }
};

// Per-application solver statistics, for structured logging.
struct SolveStats {
  int shift_count = 0;            // shifted systems solved (pairs count once)
  int refine_steps = 0;           // iterative refinement steps across shifts
  double factor_seconds = 0.0;    // time spent factorizing
  double solve_seconds = 0.0;     // time spent in triangular solves
  double max_rel_residual = 0.0;  // worst ||(S - t M)w - MF|| / ||MF||
};

// Power iteration for lambda_max (one mass solve per step) and inverse
// iteration for lambda_min (one stiffness solve per step), both stopped when
// the Rayleigh quotient changes by less than `tol` relatively. Throws
// NumericError after 10^4 iterations without convergence or when a
// factorization fails. The default tol accepts a bias of a few tenths of a
// percent on meshes whose top eigenvalues cluster; the safety factors exist
// to absorb exactly that.
SpectralInterval estimate_spectral_bounds(const FemSystem& system,
                                          double tol = 1e-5);

// Dense generalized eigendecomposition S V = M V diag(lambda) with columns
// M-orthonormal, for meshes with at most 2000 free nodes. Reference
// ("oracle") path: everything it produces is trusted up to dense-solver
// roundoff and used to validate the rational pipeline.
class SpectralOracle {
 public:
  explicit SpectralOracle(const FemSystem& system);

  int size() const { return static_cast<int>(eigenvalues_.size()); }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }

 private:
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;  // column k pairs with eigenvalues_[k]
};

// U = sum_k lambda_k^{-s} (v_k' b) v_k, the exact discrete solution of
// (M^{-1} S)^s U = M^{-1} b in the oracle's eigenbasis. s = 0 reproduces
// M^{-1} b. On Neumann systems eigenvalues below 1e-10 * lambda_max are
// treated as the constant mode and dropped.
Vec oracle_inverse_fractional(const SpectralOracle& oracle, double s,
                              const Vec& b);

// U = R0 F + sum_i R_i (S - t_i M)^{-1} (M F) with F = M^{-1} b, evaluated
// with one sparse direct factorization per shift. Conjugate pole pairs are
// combined so the arithmetic stays real. Throws InvalidInput when the
// system's spectral interval is not contained in [r.a, r.b]
// (interval-mismatch) and NumericError when a shifted solve fails
// (solver-failure). When `interval` is null the bounds are estimated
// internally at the default tol. The shift contributions are accumulated with a
// pairwise tree reduction in fixed index order, so the result is bitwise
// reproducible regardless of threading.
Vec apply_inverse_fractional(const FemSystem& system, const RationalApprox& r,
                             const Vec& b,
                             const SpectralInterval* interval = nullptr,
                             SolveStats* stats = nullptr);

// Reusable applicator: bounds, the rational fit, and all shifted
// factorizations are built once, then apply() is cheap and const
// (thread-safe for concurrent calls on one instance).
class FractionalInverse {
 public:
  // Fits x^{-s} with n poles on the decade-rounded widened interval of
  // `system` (rounding makes the fit cacheable across nearby meshes).
  FractionalInverse(SystemPtr system, double s, int n,
                    double bounds_tol = 1e-5, const FitOptions& fit = {});

  const SpectralInterval& interval() const { return interval_; }
  const RationalApprox& rational() const { return *rational_; }
  const FemSystem& system() const { return *system_; }
  SystemPtr system_ptr() const { return system_; }
  double s() const { return s_; }

  // Solves M F = b.
  Vec mass_solve(const Vec& b) const;
  // U = r(M^{-1} S)^{-1 as fitted} applied to b, same contract as the free
  // function but without refactorization.
  Vec apply(const Vec& b, SolveStats* stats = nullptr) const;

 private:
  struct Shifts;  // prefactored (S - t_i M)
  SystemPtr system_;
  double s_ = 0.5;
  SpectralInterval interval_;
  std::shared_ptr<const RationalApprox> rational_;
  std::shared_ptr<const Shifts> shifts_;
};

struct SolveOptions {
  double bounds_tol = 1e-5;
  FitOptions fit;
};

// Full pipeline: assemble, load vector, spectral bounds, cached rational fit
// on the decade-rounded widened interval, shifted solves. Fits are cached
// process-wide keyed by (s, rounded interval, n).
FeFunction solve_fractional_poisson(std::shared_ptr<const Mesh> mesh, BC bc,
                                    double s, const ScalarField& f, int n,
                                    const SolveOptions& opts = {});

// The fit cache used by solve_fractional_poisson and FractionalInverse:
// x^{-s} on [10^floor(log10 fit_lo), 10^ceil(log10 fit_hi)] with n poles.
std::shared_ptr<const RationalApprox> cached_inverse_fit(
    double s, const SpectralInterval& interval, int n,
    const FitOptions& fit = {});

}  // namespace fraclap
