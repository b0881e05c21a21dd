#include "fraclap/fracsolve.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fraclap/errors.hpp"

namespace fraclap {

namespace {

using SpMatC = Eigen::SparseMatrix<double>;
using SpMatX = Eigen::SparseMatrix<std::complex<double>>;
using VecX = Eigen::VectorXcd;
using Cplx = std::complex<double>;
using Ldlt = Eigen::SimplicialLDLT<SpMatC>;
using LuReal = Eigen::SparseLU<SpMatC>;
using LuCplx = Eigen::SparseLU<SpMatX>;

constexpr int kIterationCap = 10000;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Deterministic noise so the start vectors are never accidentally
// M-orthogonal to the mode being sought.
struct SplitMix {
  std::uint64_t state;
  double next01() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * (1.0 / 9007199254740992.0);
  }
};

// One shifted system S - t M. Real shifts carry an LDLT (SPD for t < 0) with
// an LU fallback; a conjugate pair carries one complex LU and contributes
// 2 Re(R w) so only the +imag member is solved.
struct ShiftGroup {
  bool pair = false;
  Cplx t;
  Cplx residue;
  SpMatC Ar;
  SpMatX Ax;
  std::unique_ptr<Ldlt> ldlt;
  std::unique_ptr<LuReal> lu_real;
  std::unique_ptr<LuCplx> lu_cplx;
};

struct ShiftSet {
  SpMatC Mc;
  SpMatC Sc;
  std::unique_ptr<Ldlt> mass;
  std::vector<ShiftGroup> groups;
  double R0 = 0.0;
  bool neumann = false;
  Vec m_ones;          // M 1, for the mean-zero projection
  double m_total = 0;  // 1' M 1
};

void build_shift_set(const FemSystem& system, const RationalApprox& r,
                     double lambda_max, ShiftSet& ss, SolveStats* stats) {
  auto t0 = std::chrono::steady_clock::now();
  ss.Mc = system.M;
  ss.Sc = system.S;
  ss.neumann = system.bc == BC::Neumann;
  ss.R0 = r.R0;
  ss.mass = std::make_unique<Ldlt>(ss.Mc);
  if (ss.mass->info() != Eigen::Success) {
    throw NumericError(
        "apply_inverse_fractional: singular-matrix (mass factorization "
        "failed)");
  }
  if (ss.neumann) {
    Vec ones = Vec::Ones(system.num_free());
    ss.m_ones = ss.Mc * ones;
    ss.m_total = ones.dot(ss.m_ones);
  }

  const std::size_t np = r.poles.size();
  std::size_t i = 0;
  while (i < np) {
    const Cplx t = r.poles[i];
    ShiftGroup g;
    g.t = t;
    g.residue = r.residues[i];
    if (t.imag() == 0.0) {
      const double tr = t.real();
      if (tr == 0.0 && ss.neumann) {
        // Deflated inverse: the constant mode is projected out of the data,
        // so a relative epsilon-shift only perturbs retained modes by
        // ~1e-12 * lambda_max / lambda_k.
        g.Ar = ss.Sc + (1e-12 * lambda_max) * ss.Mc;
      } else {
        g.Ar = ss.Sc - tr * ss.Mc;
      }
      g.ldlt = std::make_unique<Ldlt>(g.Ar);
      if (g.ldlt->info() != Eigen::Success) {
        g.ldlt.reset();
        g.lu_real = std::make_unique<LuReal>(g.Ar);
        if (g.lu_real->info() != Eigen::Success) {
          throw NumericError(
              "apply_inverse_fractional: solver-failure (factorization at "
              "shift t = " +
              std::to_string(tr) + ")");
        }
      }
      i += 1;
    } else {
      if (i + 1 >= np || r.poles[i + 1] != std::conj(t)) {
        throw NumericError(
            "apply_inverse_fractional: conjugate pole pairing is broken");
      }
      g.pair = true;
      g.Ax = SpMatX(ss.Sc.cast<Cplx>()) - t * SpMatX(ss.Mc.cast<Cplx>());
      g.lu_cplx = std::make_unique<LuCplx>(g.Ax);
      if (g.lu_cplx->info() != Eigen::Success) {
        throw NumericError(
            "apply_inverse_fractional: solver-failure (factorization at "
            "complex shift)");
      }
      i += 2;
    }
    ss.groups.push_back(std::move(g));
  }
  if (stats) stats->factor_seconds += seconds_since(t0);
}

Vec apply_shift_set(const FemSystem& system, const ShiftSet& ss, const Vec& b,
                    SolveStats* stats) {
  const int N = system.num_free();
  if (b.size() != N) {
    throw InvalidInput(
        "apply_inverse_fractional: rhs length does not match the free nodes");
  }
  SolveStats scratch;
  SolveStats& st = stats ? *stats : scratch;
  auto t0 = std::chrono::steady_clock::now();

  auto deflate = [&](Vec& v) {
    if (ss.neumann) v.array() -= ss.m_ones.dot(v) / ss.m_total;
  };

  Vec F = ss.mass->solve(b);
  {
    Vec res = b - ss.Mc * F;
    if (res.norm() > 1e-15 * b.norm()) F += ss.mass->solve(res);
  }
  deflate(F);
  Vec MF = ss.Mc * F;
  const double rhs_norm = std::max(MF.norm(), 1e-300);

  std::vector<Vec> terms;
  terms.reserve(ss.groups.size() + 1);
  terms.push_back(ss.R0 * F);

  for (const ShiftGroup& g : ss.groups) {
    double rel = 0.0;
    if (!g.pair) {
      auto solve1 = [&](const Vec& rhs) {
        return g.ldlt ? Vec(g.ldlt->solve(rhs)) : Vec(g.lu_real->solve(rhs));
      };
      Vec w = solve1(MF);
      for (int k = 0; k < 3; ++k) {
        Vec res = MF - g.Ar * w;
        rel = res.norm() / rhs_norm;
        if (rel <= 1e-14 || k == 2) break;
        w += solve1(res);
        ++st.refine_steps;
      }
      if (!(rel <= 1e-10)) {
        throw NumericError(
            "apply_inverse_fractional: solver-failure (relative residual " +
            std::to_string(rel) + " at shift t = " +
            std::to_string(g.t.real()) + ")");
      }
      terms.push_back(g.residue.real() * w);
    } else {
      VecX rhs = MF.cast<Cplx>();
      VecX w = g.lu_cplx->solve(rhs);
      for (int k = 0; k < 3; ++k) {
        VecX res = rhs - g.Ax * w;
        rel = res.norm() / rhs_norm;
        if (rel <= 1e-14 || k == 2) break;
        w += VecX(g.lu_cplx->solve(res));
        ++st.refine_steps;
      }
      if (!(rel <= 1e-10)) {
        throw NumericError(
            "apply_inverse_fractional: solver-failure (relative residual " +
            std::to_string(rel) + " at a complex shift)");
      }
      // (t, conj t) with residues (R, conj R): together 2 Re(R w).
      terms.push_back(2.0 * (g.residue.real() * w.real() -
                             g.residue.imag() * w.imag()));
    }
    st.max_rel_residual = std::max(st.max_rel_residual, rel);
    ++st.shift_count;
  }

  // Pairwise tree reduction in fixed index order: the sum is bitwise
  // reproducible however the per-shift work is scheduled.
  while (terms.size() > 1) {
    std::vector<Vec> next;
    next.reserve(terms.size() / 2 + 1);
    for (std::size_t i = 0; i + 1 < terms.size(); i += 2) {
      next.push_back(terms[i] + terms[i + 1]);
    }
    if (terms.size() % 2 == 1) next.push_back(std::move(terms.back()));
    terms.swap(next);
  }
  Vec U = std::move(terms.front());
  deflate(U);
  st.solve_seconds += seconds_since(t0);
  return U;
}

void check_rational(const RationalApprox& r) {
  if (r.power_sign != -1) {
    throw InvalidInput(
        "apply_inverse_fractional: the rational fit must approximate x^{-s}");
  }
  if (r.poles.size() != r.residues.size() ||
      static_cast<int>(r.poles.size()) != r.n) {
    throw InvalidInput("apply_inverse_fractional: malformed rational data");
  }
}

void check_contained(const SpectralInterval& iv, const RationalApprox& r) {
  if (iv.lambda_min < r.a * (1.0 - 1e-9) ||
      iv.lambda_max > r.b * (1.0 + 1e-9)) {
    throw InvalidInput(
        "apply_inverse_fractional: interval-mismatch (spectrum [" +
        std::to_string(iv.lambda_min) + ", " + std::to_string(iv.lambda_max) +
        "] not contained in the fit interval [" + std::to_string(r.a) + ", " +
        std::to_string(r.b) + "])");
  }
}

}  // namespace

SpectralInterval estimate_spectral_bounds(const FemSystem& system,
                                          double tol) {
  const int N = system.num_free();
  if (N < 1) {
    throw InvalidInput("estimate_spectral_bounds: system has no free nodes");
  }
  if (!(tol > 0.0)) {
    throw InvalidInput("estimate_spectral_bounds: tol must be positive");
  }
  SpMatC Mc = system.M;
  SpMatC Sc = system.S;
  Ldlt mass(Mc);
  if (mass.info() != Eigen::Success) {
    throw NumericError(
        "estimate_spectral_bounds: singular-matrix (mass factorization "
        "failed)");
  }
  const bool neumann = system.bc == BC::Neumann;
  const Vec ones = Vec::Ones(N);
  const Vec m1 = Mc * ones;
  const double m_total = ones.dot(m1);
  auto deflate = [&](Vec& v) {
    if (neumann) v.array() -= m1.dot(v) / m_total;
  };
  auto m_normalize = [&](Vec& v, const char* where) {
    const double nm = std::sqrt(std::max(0.0, v.dot(Mc * v)));
    if (!(nm > 0.0) || !std::isfinite(nm)) {
      throw NumericError(std::string("estimate_spectral_bounds: ") + where +
                         " iteration broke down");
    }
    v /= nm;
  };

  SplitMix rng{0x2545f4914f6cdd1dULL};

  // lambda_max: power iteration on M^{-1} S. The alternating start is rich
  // in the top modes.
  Vec v(N);
  for (int i = 0; i < N; ++i) {
    v[i] = ((i & 1) ? -1.0 : 1.0) + 0.01 * (2.0 * rng.next01() - 1.0);
  }
  m_normalize(v, "power");
  double lambda_max = 0.0;
  {
    double rq_prev = 0.0;
    bool done = false;
    for (int it = 0; it < kIterationCap; ++it) {
      const Vec w = Sc * v;
      const double rq = v.dot(w);
      if (it > 0 && std::abs(rq - rq_prev) <= tol * std::abs(rq)) {
        lambda_max = rq;
        done = true;
        break;
      }
      rq_prev = rq;
      v = mass.solve(w);
      m_normalize(v, "power");
    }
    if (!done) {
      throw NumericError(
          "estimate_spectral_bounds: no-convergence (lambda_max power "
          "iteration hit the 10^4 cap)");
    }
  }

  // lambda_min: inverse iteration. A Neumann stiffness matrix is singular,
  // so it is factorized with a relative epsilon-shift while the Rayleigh
  // quotient keeps using the true S; iterates stay mean-zero.
  SpMatC A = neumann ? SpMatC(Sc + (1e-12 * lambda_max) * Mc) : Sc;
  Ldlt stiff(A);
  if (stiff.info() != Eigen::Success) {
    throw NumericError(
        "estimate_spectral_bounds: singular-matrix (stiffness factorization "
        "failed)");
  }
  for (int i = 0; i < N; ++i) {
    const auto& p = system.mesh->nodes[system.free_nodes[i]];
    const double smooth = neumann ? (p[0] + 0.372 * p[1]) : 1.0;
    v[i] = smooth + 0.01 * (2.0 * rng.next01() - 1.0);
  }
  deflate(v);
  m_normalize(v, "inverse");
  double lambda_min = 0.0;
  {
    double rq_prev = 0.0;
    bool done = false;
    for (int it = 0; it < kIterationCap; ++it) {
      const double rq = v.dot(Sc * v);
      if (it > 0 && std::abs(rq - rq_prev) <= tol * std::abs(rq)) {
        lambda_min = rq;
        done = true;
        break;
      }
      rq_prev = rq;
      v = stiff.solve(Mc * v);
      deflate(v);
      m_normalize(v, "inverse");
    }
    if (!done) {
      throw NumericError(
          "estimate_spectral_bounds: no-convergence (lambda_min inverse "
          "iteration hit the 10^4 cap)");
    }
  }
  if (!(lambda_min > 0.0) || !(lambda_max > 0.0)) {
    throw NumericError("estimate_spectral_bounds: nonpositive bound estimate");
  }
  lambda_max = std::max(lambda_max, lambda_min);
  return SpectralInterval{lambda_min, lambda_max, 0.9, 1.1};
}

SpectralOracle::SpectralOracle(const FemSystem& system) {
  const int N = system.num_free();
  if (N < 1) throw InvalidInput("spectral oracle: system has no free nodes");
  if (N > 2000) {
    throw InvalidInput("spectral oracle: size-cap-exceeded (" +
                       std::to_string(N) + " free nodes, cap 2000)");
  }
  Eigen::MatrixXd Sd(system.S);
  Eigen::MatrixXd Md(system.M);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Sd, Md);
  if (ges.info() != Eigen::Success) {
    throw NumericError("spectral oracle: dense eigensolver failed");
  }
  eigenvalues_ = ges.eigenvalues();
  eigenvectors_ = ges.eigenvectors();
}

Vec oracle_inverse_fractional(const SpectralOracle& oracle, double s,
                              const Vec& b) {
  if (b.size() != oracle.size()) {
    throw InvalidInput("oracle_inverse_fractional: rhs length mismatch");
  }
  if (!(s >= 0.0 && s <= 1.0)) {
    throw InvalidInput("oracle_inverse_fractional: s must lie in [0, 1]");
  }
  const Eigen::VectorXd& lam = oracle.eigenvalues();
  const double cutoff = 1e-10 * lam[oracle.size() - 1];
  Vec c = oracle.eigenvectors().transpose() * b;
  for (int k = 0; k < oracle.size(); ++k) {
    c[k] = lam[k] > cutoff ? c[k] * std::pow(lam[k], -s) : 0.0;
  }
  return oracle.eigenvectors() * c;
}

Vec apply_inverse_fractional(const FemSystem& system, const RationalApprox& r,
                             const Vec& b, const SpectralInterval* interval,
                             SolveStats* stats) {
  check_rational(r);
  const SpectralInterval iv =
      interval ? *interval : estimate_spectral_bounds(system, 1e-5);
  check_contained(iv, r);
  ShiftSet ss;
  build_shift_set(system, r, iv.lambda_max, ss, stats);
  return apply_shift_set(system, ss, b, stats);
}

struct FractionalInverse::Shifts {
  ShiftSet set;
};

FractionalInverse::FractionalInverse(SystemPtr system, double s, int n,
                                     double bounds_tol, const FitOptions& fit)
    : system_(std::move(system)), s_(s) {
  if (!system_) throw InvalidInput("fractional inverse: null system");
  interval_ = estimate_spectral_bounds(*system_, bounds_tol);
  rational_ = cached_inverse_fit(s, interval_, n, fit);
  check_rational(*rational_);
  auto sh = std::make_shared<Shifts>();
  build_shift_set(*system_, *rational_, interval_.lambda_max, sh->set,
                  nullptr);
  shifts_ = std::move(sh);
}

Vec FractionalInverse::mass_solve(const Vec& b) const {
  const ShiftSet& ss = shifts_->set;
  if (b.size() != system_->num_free()) {
    throw InvalidInput("fractional inverse: rhs length mismatch");
  }
  Vec F = ss.mass->solve(b);
  Vec res = b - ss.Mc * F;
  if (res.norm() > 1e-15 * b.norm()) F += ss.mass->solve(res);
  return F;
}

Vec FractionalInverse::apply(const Vec& b, SolveStats* stats) const {
  return apply_shift_set(*system_, shifts_->set, b, stats);
}

std::shared_ptr<const RationalApprox> cached_inverse_fit(
    double s, const SpectralInterval& interval, int n,
    const FitOptions& fit) {
  const double lo = interval.fit_lo();
  const double hi = interval.fit_hi();
  if (!(lo > 0.0) || !(hi > 0.0)) {
    throw InvalidInput("cached_inverse_fit: interval must be positive");
  }
  // Decade rounding makes the key discrete and keeps every interval inside
  // the fitted one, so a cache hit is always valid.
  const int elo = static_cast<int>(std::floor(std::log10(lo)));
  int ehi = static_cast<int>(std::ceil(std::log10(hi)));
  if (ehi <= elo) ehi = elo + 1;

  using Key = std::tuple<double, int, int, int>;
  static std::map<Key, std::shared_ptr<const RationalApprox>> cache;
  static std::mutex mutex;
  const Key key{s, elo, ehi, n};
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto r = std::make_shared<const RationalApprox>(
      fit_best(s, std::pow(10.0, elo), std::pow(10.0, ehi), n, fit));
  cache.emplace(key, r);
  return r;
}

FeFunction solve_fractional_poisson(std::shared_ptr<const Mesh> mesh, BC bc,
                                    double s, const ScalarField& f, int n,
                                    const SolveOptions& opts) {
  if (!mesh) throw InvalidInput("solve_fractional_poisson: null mesh");
  SystemPtr sys = assemble_shared(std::move(mesh), bc);
  const Vec b = load_vector(*sys, f);
  const SpectralInterval iv = estimate_spectral_bounds(*sys, opts.bounds_tol);
  auto r = cached_inverse_fit(s, iv, n, opts.fit);
  Vec U = apply_inverse_fractional(*sys, *r, b, &iv, nullptr);
  return FeFunction{std::move(sys), std::move(U)};
}

}  // namespace fraclap
