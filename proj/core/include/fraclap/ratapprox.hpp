#pragma once

#include <complex>
#include <string>
#include <vector>

namespace fraclap {

struct FitOptions {
  int sample_count = 4000;        // fitting grid density
  int validation_count = 100000;  // sup-error grid density
  int max_lawson_sweeps = 100;
  double spread_tol = 1e-2;  // relative spread of |error| extrema at stop
};

// Type (n,n) rational approximation of x^{power_sign*s} on [a,b], kept in
// barycentric form (support points, denominator weights, values) and in
// partial-fraction form (R0, poles, residues). Pole and residue lists are
// closed under conjugation, so partial-fraction evaluation at real x is
// real. Immutable once fitted; safe to share across threads.
struct RationalApprox {
  double s = 0.5;
  double a = 1.0;
  double b = 10.0;
  int n = 0;             // number of poles
  int power_sign = -1;   // -1 fits x^{-s}, +1 fits x^{+s}

  std::vector<double> support;
  std::vector<double> weights;
  std::vector<double> values;

  double R0 = 0.0;
  std::vector<std::complex<double>> poles;
  std::vector<std::complex<double>> residues;

  double achieved_sup_error = 0.0;
  bool lawson_converged = true;

  double target(double x) const;  // x^{power_sign*s}
  double eval_barycentric(double x) const;
};

// Log-spaced grid of `count` >= 2 points with exact endpoints.
std::vector<double> sample_grid(double a, double b, int count);

// Two-phase near-minimax fit of x^{-s} on [a,b]: adaptive greedy barycentric
// interpolation picks support points at the maximum-error sample, then
// Lawson reweighting drives the error toward equioscillation. If the sweep
// budget runs out before the extrema level off, the result is still
// returned with lawson_converged = false.
RationalApprox fit_best(double s, double a, double b, int n,
                        const FitOptions& opts = {});

// Same fit for x^{+s} on [0,1] over an algebraically clustered grid
// (j/N)^3; only used to study the minimax asymptotic.
RationalApprox fit_positive_power(double s, int n, const FitOptions& opts = {});

// Partial-fraction evaluation R0 + sum R_i/(x - t_i).
double eval(const RationalApprox& r, double x);

// Max |x^{power_sign*s} - r(x)| over a grid of grid_size points; the result
// is also stored back into r.achieved_sup_error.
double sup_error(RationalApprox& r, int grid_size);

// 4^{1+s} |sin(pi s)| e^{-2 pi sqrt(s n)}: the asymptotic level of the best
// (n,n) approximation error of x^s on [0,1].
double stahl_reference(double s, int n);

// JSON object {s, a, b, n, R0, poles, residues, sup_error}; numbers
// round-trip at 17 significant digits. Barycentric data is not serialized.
std::string rational_to_json(const RationalApprox& r);
RationalApprox rational_from_json(const std::string& text);

}  // namespace fraclap
