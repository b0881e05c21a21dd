#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SparseLU>
#include <cmath>
#include <numbers>

#include "fraclap/errors.hpp"
#include "fraclap/fracsolve.hpp"
#include "fraclap/harness.hpp"
#include "fraclap/mesh.hpp"

using namespace fraclap;

namespace {

SystemPtr interval_system(int m, BC bc) {
  return assemble_shared(std::make_shared<Mesh>(uniform_interval(0.0, 1.0, m)),
                         bc);
}

double dirichlet_lambda(int k, double h) {
  double c = std::cos(k * std::numbers::pi * h);
  return 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
}

double m_norm(const FemSystem& sys, const Vec& v) {
  return std::sqrt(v.dot(sys.M * v));
}

}  // namespace

TEST_CASE("spectral bounds match the closed form") {
  int m = 32;
  double h = 1.0 / m;
  auto sp = interval_system(m, BC::Dirichlet);
  SpectralInterval iv = estimate_spectral_bounds(*sp);
  CHECK(iv.lambda_min ==
        doctest::Approx(dirichlet_lambda(1, h)).epsilon(0.01));
  CHECK(iv.lambda_max ==
        doctest::Approx(dirichlet_lambda(m - 1, h)).epsilon(0.01));
  CHECK(iv.fit_lo() < iv.lambda_min);
  CHECK(iv.fit_hi() > iv.lambda_max);
  CHECK_THROWS_AS(estimate_spectral_bounds(*sp, 0.0), InvalidInput);
  CHECK_THROWS_AS(estimate_spectral_bounds(*sp, -1.0), InvalidInput);
}

TEST_CASE("neumann bounds skip the constant mode") {
  auto sp = interval_system(24, BC::Neumann);
  SpectralInterval iv = estimate_spectral_bounds(*sp);
  // smallest nonzero eigenvalue of the interval is pi^2 up to O(h^2)
  CHECK(iv.lambda_min ==
        doctest::Approx(std::numbers::pi * std::numbers::pi).epsilon(0.02));
}

TEST_CASE("oracle eigenpair action") {
  auto sp = interval_system(20, BC::Dirichlet);
  SpectralOracle oracle(*sp);
  REQUIRE(oracle.size() == sp->num_free());
  for (double s : {0.0, 0.3, 1.0}) {
    int k = 4;
    Vec v = oracle.eigenvectors().col(k);
    double lambda = oracle.eigenvalues()[k];
    Vec u = oracle_inverse_fractional(oracle, s, Vec(sp->M * v));
    Vec want = std::pow(lambda, -s) * v;
    CHECK((u - want).norm() <= 1e-10 * want.norm());
  }
  CHECK_THROWS_AS(oracle_inverse_fractional(oracle, -0.1, Vec(sp->M.col(0))),
                  InvalidInput);
  CHECK_THROWS_AS(oracle_inverse_fractional(oracle, 1.1, Vec(sp->M.col(0))),
                  InvalidInput);
}

TEST_CASE("rational pipeline tracks the oracle") {
  auto sp = interval_system(40, BC::Dirichlet);
  SpectralOracle oracle(*sp);
  Vec b = load_vector(*sp, [](double x, double) { return 1.0 + x; });
  for (double s : {0.25, 0.5, 0.9}) {
    FractionalInverse inv(sp, s, 12);
    Vec gap = inv.apply(b) - oracle_inverse_fractional(oracle, s, b);
    Vec ref = oracle_inverse_fractional(oracle, s, b);
    CHECK(m_norm(*sp, gap) <=
          50.0 * inv.rational().achieved_sup_error * m_norm(*sp, ref) + 1e-14);
  }
}

TEST_CASE("pipeline error decreases with the rational degree") {
  auto sp = interval_system(40, BC::Dirichlet);
  SpectralOracle oracle(*sp);
  Vec b = load_vector(*sp, [](double x, double) { return x * (1 - x); });
  Vec ref = oracle_inverse_fractional(oracle, 0.5, b);
  double last = 1e9;
  for (int n : {4, 8, 12}) {
    FractionalInverse inv(sp, 0.5, n);
    double gap = m_norm(*sp, Vec(inv.apply(b) - ref));
    CHECK(gap < last);
    last = gap;
  }
}

TEST_CASE("s = 1 reproduces the direct solve") {
  auto sp = interval_system(64, BC::Dirichlet);
  Vec b = load_vector(*sp, [](double x, double) { return std::sin(3 * x); });
  FractionalInverse inv(sp, 1.0, 1);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(
      Eigen::SparseMatrix<double>(sp->S));
  REQUIRE(lu.info() == Eigen::Success);
  Vec direct = lu.solve(b);
  CHECK((inv.apply(b) - direct).norm() <= 1e-11 * direct.norm());
}

TEST_CASE("the fractional inverse is self-adjoint") {
  auto mesh = std::make_shared<Mesh>(uniform_rectangle(0, 0, 1, 1, 10, 10));
  auto sp = assemble_shared(mesh, BC::Dirichlet);
  FractionalInverse inv(sp, 0.5, 10);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Vec b1 = seeded_vector(seed, sp->num_free());
    Vec b2 = seeded_vector(seed + 1000, sp->num_free());
    double left = b2.dot(inv.apply(b1));
    double right = b1.dot(inv.apply(b2));
    CHECK(std::abs(left - right) <=
          1e-10 * (std::abs(left) + std::abs(right) + 1e-30));
  }
}

TEST_CASE("oracle semigroup property") {
  auto sp = interval_system(24, BC::Dirichlet);
  SpectralOracle oracle(*sp);
  Vec b = seeded_vector(7, sp->num_free());
  Vec once = oracle_inverse_fractional(oracle, 0.7, b);
  Vec twice = oracle_inverse_fractional(oracle, 0.3, Vec(sp->M * once));
  Vec whole = oracle_inverse_fractional(oracle, 1.0, b);
  CHECK((twice - whole).norm() <= 1e-10 * whole.norm());
}

TEST_CASE("neumann solves are mean-free and shift-invariant") {
  auto sp = interval_system(32, BC::Neumann);
  Vec b = load_vector(*sp, [](double x, double) { return x; });
  FractionalInverse inv(sp, 0.5, 10);
  Vec u = inv.apply(b);
  CHECK(std::abs(sp->integ_phi.dot(u)) <= 1e-10 * u.norm());
  // adding a multiple of M * ones to b lands in the deflated constant mode
  Vec ones = Vec::Ones(sp->num_free());
  Vec shifted = inv.apply(Vec(b + 3.0 * (sp->M * ones)));
  CHECK((shifted - u).norm() <= 1e-9 * (u.norm() + 1.0));
}

TEST_CASE("oracle size cap") {
  auto mesh = std::make_shared<Mesh>(uniform_rectangle(0, 0, 1, 1, 46, 46));
  auto sp = assemble_shared(mesh, BC::Neumann);
  REQUIRE(sp->num_free() > 2000);
  CHECK_THROWS_AS(SpectralOracle{*sp}, InvalidInput);
}

TEST_CASE("interval mismatch is rejected") {
  auto sp = interval_system(32, BC::Dirichlet);
  RationalApprox wrong = fit_best(0.5, 1e6, 1e8, 8);
  Vec b = load_vector(*sp, [](double, double) { return 1.0; });
  CHECK_THROWS_AS(apply_inverse_fractional(*sp, wrong, b), InvalidInput);
}

TEST_CASE("solver statistics are populated") {
  auto sp = interval_system(32, BC::Dirichlet);
  FractionalInverse inv(sp, 0.5, 8);
  Vec b = load_vector(*sp, [](double, double) { return 1.0; });
  SolveStats stats;
  inv.apply(b, &stats);
  CHECK(stats.shift_count >= 1);
  CHECK(stats.max_rel_residual <= 1e-10);
}

TEST_CASE("cached fits are shared") {
  auto sp = interval_system(32, BC::Dirichlet);
  SpectralInterval iv = estimate_spectral_bounds(*sp);
  auto r1 = cached_inverse_fit(0.5, iv, 8);
  auto r2 = cached_inverse_fit(0.5, iv, 8);
  CHECK(r1.get() == r2.get());
  auto r3 = cached_inverse_fit(0.5, iv, 10);
  CHECK(r3.get() != r1.get());
}

TEST_CASE("full pipeline solves the poisson example") {
  auto mesh = std::make_shared<Mesh>(uniform_interval(0.0, 1.0, 128));
  FeFunction u = solve_fractional_poisson(
      mesh, BC::Dirichlet, 1.0, [](double, double) { return 1.0; }, 1);
  // s = 1 with f = 1: u = x(1-x)/2
  double err = l2_error_against(
      u, [](double x, double) { return 0.5 * x * (1.0 - x); });
  CHECK(err <= 1e-5);
}
