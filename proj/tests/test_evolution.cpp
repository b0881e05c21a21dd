#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fraclap/errors.hpp"
#include "fraclap/evolution.hpp"
#include "fraclap/fracsolve.hpp"
#include "fraclap/mesh.hpp"

using namespace fraclap;

namespace {

SystemPtr square_system(int m, BC bc = BC::Neumann) {
  return assemble_shared(
      std::make_shared<Mesh>(uniform_rectangle(-1, -1, 1, 1, m, m)), bc);
}

SystemPtr line_system(int m, BC bc = BC::Neumann) {
  return assemble_shared(std::make_shared<Mesh>(uniform_interval(0, 1, m)),
                         bc);
}

}  // namespace

TEST_CASE("config validation") {
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  CHECK_NOTHROW(validate(cfg));
  cfg.sigma = 0.0;  // pure transport is allowed
  CHECK_NOTHROW(validate(cfg));

  auto bad = [](auto&& tweak) {
    EvolutionConfig c = default_config(EvolutionModel::PME);
    tweak(c);
    CHECK_THROWS_AS(validate(c), InvalidInput);
  };
  bad([](EvolutionConfig& c) { c.sigma = -1.0; });
  bad([](EvolutionConfig& c) { c.s = 0.0; });
  bad([](EvolutionConfig& c) { c.s = 1.0; });
  bad([](EvolutionConfig& c) { c.delta = 0.0; });
  bad([](EvolutionConfig& c) { c.t_final = 0.0; });
  bad([](EvolutionConfig& c) { c.dt_max = 0.0; });
  bad([](EvolutionConfig& c) { c.n_rational = 0; });
}

TEST_CASE("model defaults fix the potential sign") {
  CHECK(default_config(EvolutionModel::PME).potential_sign ==
        PotentialSign::Repulsive);
  CHECK(default_config(EvolutionModel::PME_SelfSimilar).potential_sign ==
        PotentialSign::Repulsive);
  CHECK(default_config(EvolutionModel::KellerSegel).potential_sign ==
        PotentialSign::Attractive);
}

TEST_CASE("potential is linear in the density") {
  auto sys = line_system(24, BC::Dirichlet);
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.bc = BC::Dirichlet;
  cfg.n_rational = 10;
  EvolutionWorkspace ws(sys, cfg);

  FeFunction zero = zero_function(sys);
  CHECK(l2_norm(compute_potential(ws, zero)) <= 1e-14);

  FeFunction a = interpolate(sys, [](double x, double) { return x; });
  FeFunction b =
      interpolate(sys, [](double x, double) { return std::sin(2 * x); });
  FeFunction ab{sys, Vec(2.0 * a.coeffs - 3.0 * b.coeffs)};
  Vec combined = compute_potential(ws, ab).coeffs;
  Vec separate = 2.0 * compute_potential(ws, a).coeffs -
                 3.0 * compute_potential(ws, b).coeffs;
  CHECK((combined - separate).norm() <= 1e-12 * (separate.norm() + 1.0));
}

TEST_CASE("potential acts as lambda^-s on eigenvectors") {
  auto sys = line_system(20, BC::Dirichlet);
  SpectralOracle oracle(*sys);
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.bc = BC::Dirichlet;
  cfg.s = 0.5;
  EvolutionWorkspace ws(sys, cfg);

  int k = 3;
  FeFunction rho{sys, oracle.eigenvectors().col(k)};
  Vec c = compute_potential(ws, rho).coeffs;
  // attractive sign: c = +lambda^{-s} rho
  Vec want = std::pow(oracle.eigenvalues()[k], -0.5) * rho.coeffs;
  double tol = 100.0 * ws.inverse().rational().achieved_sup_error + 1e-12;
  CHECK((c - want).norm() <= tol * want.norm());
}

TEST_CASE("transport matrix basics") {
  auto sys = line_system(10, BC::Neumann);
  std::vector<std::array<double, 2>> still(sys->mesh->num_elements(),
                                           {0.0, 0.0});
  SpMat t0 = assemble_transport(*sys, still);
  CHECK(t0.norm() <= 1e-15);

  // unit rightward velocity: interior row is (-1/2, 0, +1/2)
  std::vector<std::array<double, 2>> right(sys->mesh->num_elements(),
                                           {1.0, 0.0});
  SpMat t1 = assemble_transport(*sys, right);
  CHECK(t1.coeff(5, 4) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(t1.coeff(5, 5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(t1.coeff(5, 6) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("transport rows sum to zero") {
  auto sys = square_system(12);
  std::vector<std::array<double, 2>> v(sys->mesh->num_elements());
  for (int e = 0; e < sys->mesh->num_elements(); ++e)
    v[e] = {std::sin(0.7 * e), std::cos(0.3 * e)};
  SpMat t = assemble_transport(*sys, v);
  Vec row_sums = t * Vec::Ones(sys->num_free());
  CHECK(row_sums.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("adaptive step formula") {
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.dt_max = 0.01;
  State st;
  st.linf = 5.0;
  st.h1_semi = 2.0;
  CHECK(adaptive_dt(st, cfg) == doctest::Approx(0.01));
  st.linf = 500.0;
  CHECK(adaptive_dt(st, cfg) == doctest::Approx(1.0 / 500.0));
  st.linf = 2.0;
  st.h1_semi = 400.0;
  CHECK(adaptive_dt(st, cfg) == doctest::Approx(1.0 / 400.0));
  st.linf = 0.0;
  st.h1_semi = 0.0;
  CHECK(adaptive_dt(st, cfg) == doctest::Approx(cfg.dt_max));
}

TEST_CASE("blow-up detection is strict") {
  CHECK_FALSE(detect_blowup(1e-7, 1e-7));
  CHECK(detect_blowup(0.99e-7, 1e-7));
  CHECK_FALSE(detect_blowup(1.01e-7, 1e-7));
}

TEST_CASE("implicit solve satisfies its equation and recaches") {
  auto sys = square_system(8);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  cfg.sigma = 0.3;
  EvolutionWorkspace ws(sys, cfg);
  Vec rhs = Vec::LinSpaced(sys->num_free(), -1.0, 2.0);
  for (double dt : {0.01, 0.25, 0.01}) {
    Vec x = ws.implicit_solve(dt, rhs);
    Vec resid = ws.time_mass_matrix() * x +
                dt * ws.effective_sigma() * (sys->S * x) - rhs;
    CHECK(resid.norm() <= 1e-11 * rhs.norm());
  }
}

TEST_CASE("mass is conserved over many steps") {
  auto sys = square_system(10);
  for (auto model : {EvolutionModel::PME, EvolutionModel::KellerSegel}) {
    EvolutionConfig cfg = default_config(model);
    cfg.s = 0.5;
    cfg.dt_policy = DtPolicy::Fixed;
    cfg.dt_max = 1e-3;
    cfg.t_final = 0.2;  // 200 steps
    cfg.n_rational = 8;
    FeFunction rho0 = gaussian_initial_data(sys, 2.5, 0.4);
    RunResult res = run(cfg, sys, rho0);
    REQUIRE_FALSE(res.failed);
    CHECK(res.steps == 200);
    for (const auto& rec : res.trajectory)
      CHECK(std::abs(rec.mass - 2.5) <= 1e-10 * 2.5);
  }
}

TEST_CASE("constant neumann state is stationary for chemotaxis") {
  auto sys = square_system(8);
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.dt_policy = DtPolicy::Fixed;
  cfg.dt_max = 0.01;
  EvolutionWorkspace ws(sys, cfg);
  FeFunction flat = interpolate(sys, [](double, double) { return 0.7; });
  State st = initial_state(ws, flat);
  for (int i = 0; i < 5; ++i) st = step(st, ws);
  CHECK((st.rho.coeffs.array() - 0.7).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("zero density stays zero") {
  auto sys = square_system(6);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  EvolutionWorkspace ws(sys, cfg);
  State st = initial_state(ws, zero_function(sys));
  st = step(st, ws);
  CHECK(l2_norm(st.rho) == 0.0);
  CHECK(st.dt_last == doctest::Approx(cfg.dt_max));
}

TEST_CASE("mirror symmetry of the 1d dynamics") {
  int m = 40;
  auto sys = line_system(m);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  cfg.s = 0.5;
  cfg.sigma = 0.05;
  cfg.dt_policy = DtPolicy::Fixed;
  cfg.dt_max = 0.005;
  EvolutionWorkspace ws(sys, cfg);

  State a = initial_state(ws, gaussian_initial_data(sys, 1.0, 0.15, 0.3));
  State b = initial_state(ws, gaussian_initial_data(sys, 1.0, 0.15, 0.7));
  for (int i = 0; i < 20; ++i) {
    a = step(a, ws);
    b = step(b, ws);
  }
  for (int i = 0; i <= m; ++i) {
    CHECK(a.rho.value_at_node(i) ==
          doctest::Approx(b.rho.value_at_node(m - i)).epsilon(1e-11));
  }
}

TEST_CASE("halving the step shrinks the local gap fourfold") {
  auto sys = square_system(10);
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.s = 0.5;
  cfg.n_rational = 10;
  EvolutionWorkspace ws(sys, cfg);
  State st = initial_state(ws, gaussian_initial_data(sys, 1.0, 0.4));

  auto advance = [&](double dt, int k) {
    State cur = st;
    for (int i = 0; i < k; ++i) cur = step_dt(cur, ws, dt);
    return cur.rho.coeffs;
  };
  double e1 = (advance(0.02, 1) - advance(0.01, 2)).norm();
  double e2 = (advance(0.01, 2) - advance(0.005, 4)).norm();
  double ratio = e1 / e2;
  CHECK(ratio > 4.0 / 2.5);
  CHECK(ratio < 4.0 * 2.5);
}

TEST_CASE("run records, strides, and stops at t_final") {
  auto sys = square_system(8);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  cfg.dt_policy = DtPolicy::Fixed;
  cfg.dt_max = 0.01;
  cfg.t_final = 0.1;
  cfg.n_rational = 6;
  RunOptions ro;
  ro.stride = 4;
  RunResult res = run(cfg, sys, gaussian_initial_data(sys, 1.0, 0.5), ro);
  REQUIRE_FALSE(res.failed);
  CHECK(res.steps == 10);
  REQUIRE(res.trajectory.size() >= 2);
  CHECK(res.trajectory.front().t == 0.0);
  CHECK(res.trajectory.back().t ==
        doctest::Approx(0.1).epsilon(1e-12));
  // rows at steps 0, 4, 8 and the forced final row at 10
  CHECK(res.trajectory.size() == 4);
}

TEST_CASE("step rejects nonpositive dt and mismatched workspaces") {
  auto sys = square_system(6);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  EvolutionWorkspace ws(sys, cfg);
  State st = initial_state(ws, gaussian_initial_data(sys, 1.0, 0.5));
  CHECK_THROWS_AS(step_dt(st, ws, 0.0), InvalidInput);
  CHECK_THROWS_AS(step_dt(st, ws, -0.1), InvalidInput);

  // a shared inverse built for a different order is rejected up front
  auto other = std::make_shared<FractionalInverse>(sys, 0.25, 6);
  EvolutionConfig cfg2 = default_config(EvolutionModel::PME);
  cfg2.s = 0.5;
  CHECK_THROWS_AS(EvolutionWorkspace(sys, cfg2, other), InvalidInput);
}

TEST_CASE("golden five-step porous medium run") {
  auto sys = square_system(16);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  cfg.s = 0.5;
  cfg.sigma = 0.1;
  cfg.dt_policy = DtPolicy::Fixed;
  cfg.dt_max = 0.01;
  cfg.t_final = 0.05;
  cfg.n_rational = 10;
  RunResult res = run(cfg, sys, gaussian_initial_data(sys, 1.0, 0.4));
  REQUIRE_FALSE(res.failed);
  CHECK(res.steps == 5);
  CHECK(l2_norm(res.final_state.rho) ==
        doctest::Approx(0.67920518058017221).epsilon(1e-10));
  CHECK(res.final_state.linf ==
        doctest::Approx(0.85849972553744114).epsilon(1e-10));
  CHECK(res.final_state.second_moment ==
        doctest::Approx(0.32328982273447199).epsilon(1e-10));
}

TEST_CASE("lumped time mass matrix is diagonal and conservative") {
  auto sys = square_system(8);
  EvolutionConfig cfg = default_config(EvolutionModel::PME);
  cfg.transport_lumping = true;
  cfg.dt_policy = DtPolicy::Fixed;
  cfg.dt_max = 1e-3;
  cfg.t_final = 0.05;
  cfg.n_rational = 6;
  EvolutionWorkspace ws(sys, cfg);
  const auto& mt = ws.time_mass_matrix();
  CHECK(mt.nonZeros() == sys->num_free());
  Vec diag = mt.diagonal();
  Vec row_sums = sys->M * Vec::Ones(sys->num_free());
  CHECK((diag - row_sums).lpNorm<Eigen::Infinity>() <= 1e-14);

  RunResult res = run(cfg, sys, gaussian_initial_data(sys, 1.5, 0.4));
  REQUIRE_FALSE(res.failed);
  for (const auto& rec : res.trajectory)
    CHECK(std::abs(rec.mass - 1.5) <= 1e-10 * 1.5);
}

TEST_CASE("blow-up flags a collapsing chemotaxis run") {
  auto sys = assemble_shared(std::make_shared<Mesh>(disc_mesh(1.0, 10)),
                             BC::Neumann);
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.s = 0.75;
  cfg.dt_policy = DtPolicy::Adaptive;
  cfg.dt_max = 0.01;
  cfg.delta = 1e-7;
  cfg.t_final = 2.0;
  cfg.n_rational = 10;
  RunResult res = run(cfg, sys, gaussian_initial_data(sys, 4 * std::numbers::pi, 0.15));
  REQUIRE_FALSE(res.failed);  // detected blow-up is an outcome, not an error
  CHECK(res.final_state.blowup_flag);
  CHECK(res.final_state.t < cfg.t_final);
  CHECK(res.trajectory.back().blowup_flag);
  CHECK(res.trajectory.back().dt < cfg.delta);
}

TEST_CASE("steady profile solves its scalar equation") {
  double sigma = 0.8, mass = 3.0, radius = 6.0;
  FpSteadyState fp(sigma, mass, radius);
  double prev = fp.psi(0.0);
  CHECK(prev > 0.0);
  for (int i = 1; i <= 60; ++i) {
    double r = radius * i / 60.0;
    double cur = fp.psi(r);
    CHECK(cur > 0.0);
    CHECK(cur <= prev + 1e-14);
    // defining relation sigma log(psi) + psi = -r^2/2 + c
    double resid = sigma * std::log(cur) + cur + 0.5 * r * r - fp.constant();
    CHECK(std::abs(resid) <= 1e-9 * (1.0 + std::abs(fp.constant())));
    prev = cur;
  }
  // independent mass check: trapezoid of 2 pi r psi(r)
  int n = 40000;
  double h = radius / n, total = 0.0;
  for (int i = 0; i <= n; ++i) {
    double r = i * h;
    double w = (i == 0 || i == n) ? 0.5 : 1.0;
    total += w * 2.0 * std::numbers::pi * r * fp.psi(r) * h;
  }
  CHECK(total == doctest::Approx(mass).epsilon(1e-7));
  CHECK_THROWS_AS(FpSteadyState(0.5, -1.0, 2.0), InvalidInput);
}

TEST_CASE("self-similar profile values") {
  double s = 0.5;
  // unit-mass constant in 2d is (2-s)/pi, support is the unit ball
  CHECK(barenblatt_profile(s, 2, true, 0.0) ==
        doctest::Approx((2.0 - s) / std::numbers::pi).epsilon(1e-12));
  CHECK(barenblatt_profile(s, 2, true, 1.0) == 0.0);
  CHECK(barenblatt_profile(s, 2, true, 2.5) == 0.0);
  // 2d integral of k (1-r^2)^{1-s} is pi k / (2-s)
  double k = barenblatt_profile(s, 2, true, 0.0);
  CHECK(std::numbers::pi * k / (2.0 - s) == doctest::Approx(1.0).epsilon(1e-12));

  // 1d unit mass: Simpson after r = sin(theta), which removes the edge kink
  int n = 4096;
  double htheta = std::numbers::pi / 2 / n, total = 0.0;
  for (int i = 0; i <= n; ++i) {
    double th = i * htheta;
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    total += w * barenblatt_profile(0.3, 1, true, std::sin(th)) * std::cos(th);
  }
  total *= htheta / 3.0 * 2.0;  // both half-lines
  CHECK(total == doctest::Approx(1.0).epsilon(1e-8));

  // alternative printed normalization, frozen for s = 0.5 in 2d
  CHECK(barenblatt_profile(0.5, 2, false, 0.0) ==
        doctest::Approx(0.4244131815783876).epsilon(1e-12));

  CHECK_THROWS_AS(barenblatt_profile(0.0, 2, true, 0.5), InvalidInput);
  CHECK_THROWS_AS(barenblatt_profile(0.5, 3, true, 0.5), InvalidInput);
}

TEST_CASE("decay envelope formula") {
  CHECK(decay_reference(0.0, 2.0, 3.0) == 1.0);
  CHECK(decay_reference(1.0, 2.0, 3.0) ==
        doctest::Approx(0.7165313105737893).epsilon(1e-12));
  CHECK(decay_reference(3.0, 2.0, 3.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("ordered comparison data") {
  ComparisonScenario sc = comparison_scenario(1.0, 1.0);
  CHECK(sc.u1(2.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  for (double x : {-4.0, -2.0, 0.0, 1.5, 4.0})
    for (double y : {-3.0, 0.0, 2.0}) {
      double gap = sc.u2(x, y) - sc.u1(x, y);
      CHECK(gap >= 0.0);
    }
  CHECK(sc.u2(-2.0, 0.0) - sc.u1(-2.0, 0.0) ==
        doctest::Approx(2.0).epsilon(1e-10));

  // nodal interpolation keeps the ordering exact at t = 0
  auto sys = assemble_shared(
      std::make_shared<Mesh>(uniform_rectangle(-5, -5, 5, 5, 24, 24)),
      BC::Neumann);
  FeFunction u1 = interpolate(sys, sc.u1);
  FeFunction u2 = interpolate(sys, sc.u2);
  CHECK((u2.coeffs - u1.coeffs).minCoeff() >= 0.0);
}

TEST_CASE("gaussian data hits the requested mass exactly") {
  auto sys = square_system(12);
  for (double mass : {0.1, 1.0, 4 * std::numbers::pi}) {
    FeFunction rho = gaussian_initial_data(sys, mass, 0.35, 0.2, -0.1);
    CHECK(sys->integ_phi.dot(rho.coeffs) ==
          doctest::Approx(mass).epsilon(1e-13));
  }
  CHECK_THROWS_AS(gaussian_initial_data(sys, 0.0, 0.35), InvalidInput);
}
