#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "fraclap/errors.hpp"
#include "fraclap/harness.hpp"

using namespace fraclap;

TEST_CASE("predicted convergence rates") {
  CHECK(predicted_rate(0.25).slope == doctest::Approx(1.0));
  CHECK(predicted_rate(0.25).log_factor);
  CHECK(predicted_rate(0.5).slope == doctest::Approx(1.5));
  CHECK(predicted_rate(0.5).log_factor);
  CHECK(predicted_rate(0.75).slope == doctest::Approx(2.0));
  CHECK(predicted_rate(0.75).log_factor);
  CHECK(predicted_rate(0.9).slope == doctest::Approx(2.0));
  CHECK_FALSE(predicted_rate(0.9).log_factor);
  CHECK(predicted_rate(1.0).slope == doctest::Approx(2.0));
}

TEST_CASE("line fit recovers exact data") {
  std::vector<double> x{1.0, 2.0, 3.5, 7.0}, y;
  for (double v : x) y.push_back(3.0 * v - 2.0);
  LineFit lf = fit_line(x, y);
  CHECK(lf.slope == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(lf.intercept == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(lf.correlation == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_line({1.0}, {2.0}), InvalidInput);
  CHECK_THROWS_AS(fit_line({1.0, 1.0}, {2.0, 3.0}), InvalidInput);
}

TEST_CASE("worker count respects the environment cap") {
  unsetenv("FRACLAP_THREADS");
  CHECK(worker_count(4) == 4);
  CHECK(worker_count(0) >= 1);
  setenv("FRACLAP_THREADS", "2", 1);
  CHECK(worker_count(8) == 2);
  CHECK(worker_count(1) == 1);
  setenv("FRACLAP_THREADS", "0", 1);
  CHECK_THROWS_AS(worker_count(4), InvalidInput);
  setenv("FRACLAP_THREADS", "abc", 1);
  CHECK_THROWS_AS(worker_count(4), InvalidInput);
  setenv("FRACLAP_THREADS", "300", 1);
  CHECK_THROWS_AS(worker_count(4), InvalidInput);
  unsetenv("FRACLAP_THREADS");
}

TEST_CASE("seeded vectors are deterministic and bounded") {
  Vec a = seeded_vector(42, 200);
  Vec b = seeded_vector(42, 200);
  Vec c = seeded_vector(43, 200);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.maxCoeff() <= 1.0);
  CHECK(a.minCoeff() >= -1.0);
  CHECK(std::abs(a.mean()) < 0.2);
}

TEST_CASE("conv-h csv round-trip") {
  std::vector<ConvHRecord> rows{
      {0.25, 1.25e-3, std::nan("")},
      {0.125, 3.0e-4, 2.0588936890535687},
  };
  std::ostringstream out;
  write_conv_h_csv(out, rows);
  CHECK(out.str().rfind("h,error_l2,slope_running\n", 0) == 0);
  std::istringstream in(out.str());
  auto back = parse_conv_h_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].h == rows[0].h);
  CHECK(back[0].error_l2 == rows[0].error_l2);
  CHECK(std::isnan(back[0].slope_running));
  CHECK(back[1].slope_running == rows[1].slope_running);
}

TEST_CASE("conv-n csv round-trip") {
  std::vector<ConvNRecord> rows{{4, 1e-3, 2e-4}, {8, 1e-5, 3e-6}};
  std::ostringstream out;
  write_conv_n_csv(out, rows);
  CHECK(out.str().rfind("n,error_M,sup_error_fit\n", 0) == 0);
  std::istringstream in(out.str());
  auto back = parse_conv_n_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].n == 8);
  CHECK(back[1].error_M == rows[1].error_M);
  CHECK(back[1].sup_error_fit == rows[1].sup_error_fit);
}

TEST_CASE("sweep csv round-trip") {
  std::vector<SweepCell> rows{
      {3.14, 0.5, "no_blowup", 4.0, 400, ""},
      {12.56, 0.25, "blowup", 0.125, 87, ""},
  };
  std::ostringstream out;
  write_sweep_csv(out, rows);
  CHECK(out.str().rfind("mass,sigma_gauss,outcome,t_end,steps\n", 0) == 0);
  std::istringstream in(out.str());
  auto back = parse_sweep_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].outcome == "no_blowup");
  CHECK(back[1].outcome == "blowup");
  CHECK(back[1].t_end == rows[1].t_end);
  CHECK(back[1].steps == 87);
}

TEST_CASE("evolution csv round-trip keeps nan and flags") {
  std::vector<DiagnosticRecord> rows{
      {0.0, 0.0, 1.0, 0.7, 1.2, 0.4, std::nan(""), 0.01, false},
      {0.5, 0.01, 1.0, 0.9, 1.5, 0.3, 0.12, -1e-9, true},
  };
  std::ostringstream out;
  write_evolution_csv(out, rows);
  CHECK(out.str().rfind(
            "t,dt,mass,linf,h1_semi,second_moment,l2_dist_ref,min_density,"
            "blowup_flag\n",
            0) == 0);
  std::istringstream in(out.str());
  auto back = parse_evolution_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(std::isnan(back[0].l2_dist_ref));
  CHECK_FALSE(back[0].blowup_flag);
  CHECK(back[1].blowup_flag);
  CHECK(back[1].min_density == rows[1].min_density);
}

TEST_CASE("csv parsers reject malformed input") {
  std::istringstream wrong_header("h,error\n0.5,1e-3\n");
  CHECK_THROWS_AS(parse_conv_h_csv(wrong_header), ParseError);
  std::istringstream short_row("h,error_l2,slope_running\n0.5,1e-3\n");
  CHECK_THROWS_AS(parse_conv_h_csv(short_row), ParseError);
  std::istringstream bad_number("h,error_l2,slope_running\n0.5,oops,1.5\n");
  CHECK_THROWS_AS(parse_conv_h_csv(bad_number), ParseError);
  std::istringstream bad_flag(
      "mass,sigma_gauss,outcome,t_end,steps\n1,1,maybe,1,3\n");
  CHECK_THROWS_AS(parse_sweep_csv(bad_flag), ParseError);
}

TEST_CASE("config defaults and round-trip") {
  HarnessConfig cfg = parse_config("{}");
  CHECK(cfg.model == "poisson");
  CHECK(cfg.dim == 2);
  CHECK(cfg.s == 0.5);
  CHECK(cfg.bc == "neumann");
  CHECK(cfg.output.stride == 1);

  cfg.model = "keller-segel";
  cfg.s = 0.75;
  cfg.domain = {"disc", {2.0}};
  cfg.mesh = {"rings", {12}};
  cfg.initial.mass = 4.0;
  cfg.dt_policy = "fixed";
  HarnessConfig back = parse_config(config_to_json(cfg));
  CHECK(back.model == cfg.model);
  CHECK(back.s == cfg.s);
  CHECK(back.domain.kind == "disc");
  CHECK(back.mesh.params == cfg.mesh.params);
  CHECK(back.initial.mass == cfg.initial.mass);
  CHECK(back.dt_policy == "fixed");
  CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config("not json"), InvalidInput);
  CHECK_THROWS_AS(parse_config("[1,2]"), InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"speed\": 3}"), InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"domain\": {\"kind\": \"disc\", \"x\": 1}}"),
                  InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"dt\": {\"policy\": \"sometimes\"}}"),
                  InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"model\": \"heat\"}"), InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"dim\": 3}"), InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"s\": \"half\"}"), InvalidInput);
  CHECK_THROWS_AS(parse_config("{\"output\": {\"stride\": 0}}"), InvalidInput);
  CHECK_THROWS_AS(
      parse_config("{\"initial\": {\"center\": [1, 2, 3]}}"), InvalidInput);
}

TEST_CASE("mesh building follows the config") {
  HarnessConfig cfg;
  cfg.dim = 1;
  cfg.domain = {"interval", {0.0, 2.0}};
  cfg.mesh = {"uniform", {10}};
  auto line = build_mesh(cfg);
  CHECK(line->dim == 1);
  CHECK(line->num_nodes() == 11);

  cfg.dim = 2;
  cfg.domain = {"disc", {1.5}};
  cfg.mesh = {"rings", {4}};
  auto disc = build_mesh(cfg);
  CHECK(disc->num_nodes() == 1 + 3 * 4 * 5);

  cfg.domain = {"interval", {0.0, 1.0}};
  CHECK_THROWS_AS(build_mesh(cfg), InvalidInput);  // interval needs dim 1
  cfg.domain = {"disc", {1.0}};
  cfg.mesh = {"uniform", {8}};
  CHECK_THROWS_AS(build_mesh(cfg), InvalidInput);  // disc needs ring meshes
  cfg.mesh = {"rings", {0}};
  CHECK_THROWS_AS(build_mesh(cfg), InvalidInput);
}

TEST_CASE("evolution config mapping") {
  HarnessConfig cfg = parse_config(R"({
    "model": "pme-selfsimilar", "s": 0.6, "sigma": 0.2,
    "bc": "neumann", "dt": {"policy": "fixed", "dt_max": 0.005},
    "delta": 1e-6, "t_final": 2.5, "n_rational": 9
  })");
  EvolutionConfig ec = to_evolution_config(cfg);
  CHECK(ec.model == EvolutionModel::PME_SelfSimilar);
  CHECK(ec.potential_sign == PotentialSign::Repulsive);
  CHECK(ec.s == 0.6);
  CHECK(ec.sigma == 0.2);
  CHECK(ec.dt_policy == DtPolicy::Fixed);
  CHECK(ec.dt_max == 0.005);
  CHECK(ec.delta == 1e-6);
  CHECK(ec.t_final == 2.5);
  CHECK(ec.n_rational == 9);

  cfg.model = "keller-segel";
  CHECK(to_evolution_config(cfg).potential_sign == PotentialSign::Attractive);
  cfg.model = "poisson";
  CHECK_THROWS_AS(to_evolution_config(cfg), InvalidInput);
}

TEST_CASE("refinement study runs and validates its ladder") {
  ConvHOptions opts;
  opts.dim = 1;
  opts.s_list = {0.5};
  opts.h_list = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  opts.n_rational = 10;
  auto studies = run_convergence_h(opts);
  REQUIRE(studies.size() == 1);
  const auto& st = studies[0];
  // the finest level is the reference, so one fewer record than levels
  REQUIRE(st.records.size() == 3);
  CHECK(std::isnan(st.records[0].slope_running));
  for (size_t i = 1; i < st.records.size(); ++i) {
    CHECK(st.records[i].error_l2 < st.records[i - 1].error_l2);
    CHECK(st.records[i].slope_running > 0.5);
  }
  CHECK(st.predicted_slope == doctest::Approx(1.5));
  CHECK(st.fitted_slope == doctest::Approx(1.5).epsilon(0.3));

  ConvHOptions bad = opts;
  bad.h_list = {1.0 / 8, 1.0 / 16};
  CHECK_THROWS_AS(run_convergence_h(bad), InvalidInput);
  bad.h_list = {1.0 / 8, 1.0 / 16, 1.0 / 16};
  CHECK_THROWS_AS(run_convergence_h(bad), InvalidInput);
  bad.h_list = {0.3, 0.2, 0.1};  // not reciprocals of integers
  CHECK_THROWS_AS(run_convergence_h(bad), InvalidInput);
}

TEST_CASE("classical limit recovers the second-order slope") {
  ConvHOptions opts;
  opts.dim = 1;
  opts.s_list = {1.0};
  opts.n_rational = 4;
  for (int l = 3; l <= 9; ++l) opts.h_list.push_back(std::pow(2.0, -l));
  auto st = run_convergence_h(opts)[0];
  CHECK(st.predicted_slope == doctest::Approx(2.0));
  CHECK_FALSE(st.log_factor);
  CHECK(st.fitted_slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("refinement study output is deterministic") {
  ConvHOptions opts;
  opts.dim = 1;
  opts.s_list = {0.5};
  opts.h_list = {1.0 / 4, 1.0 / 8, 1.0 / 16};
  opts.n_rational = 8;
  auto csv = [&] {
    std::ostringstream out;
    write_conv_h_csv(out, run_convergence_h(opts)[0].records);
    return out.str();
  };
  CHECK(csv() == csv());
}

TEST_CASE("degree study on a small mesh") {
  ConvNOptions opts;
  opts.dim = 1;
  opts.s = 0.5;
  opts.cells_per_side = 64;
  opts.n_list = {3, 5, 7};
  auto st = run_convergence_n(opts);
  REQUIRE(st.records.size() == 3);
  CHECK(st.reference == "oracle");
  CHECK(st.prefix >= 2);
  for (const auto& r : st.records) {
    CHECK(r.error_M > 0.0);
    CHECK(r.sup_error_fit > 0.0);
  }
  CHECK(st.records[1].error_M < st.records[0].error_M);
  CHECK(st.fitted_slope < 0.0);
}

TEST_CASE("asymptotic check wires ratio fields consistently") {
  auto recs = run_stahl_check({0.5}, {6, 8});
  REQUIRE(recs.size() == 2);
  for (const auto& r : recs) {
    CHECK(r.ratio ==
          doctest::Approx(r.sup_error / r.reference).epsilon(1e-12));
    CHECK(r.ratio > 0.1);
    CHECK(r.ratio < 10.0);
  }
  CHECK(recs[0].n == 6);
  CHECK(recs[1].n == 8);
  CHECK(recs[1].sup_error < recs[0].sup_error);
}

TEST_CASE("tiny blow-up sweep keeps the lattice order") {
  SweepOptions opts;
  opts.masses = {1.0, 4.0};
  opts.sigmas = {0.5, 0.3};
  opts.mesh = std::make_shared<Mesh>(disc_mesh(1.0, 4));
  opts.t_final = 0.03;
  opts.n_rational = 6;
  auto cells = run_blowup_sweep(opts);
  REQUIRE(cells.size() == 4);
  // row-major: mass varies slowest
  CHECK(cells[0].mass == 1.0);
  CHECK(cells[0].sigma_gauss == 0.5);
  CHECK(cells[1].mass == 1.0);
  CHECK(cells[1].sigma_gauss == 0.3);
  CHECK(cells[2].mass == 4.0);
  for (const auto& cell : cells) {
    CHECK((cell.outcome == "blowup" || cell.outcome == "no_blowup"));
    CHECK(cell.steps >= 1);
    CHECK(cell.t_end > 0.0);
  }
}
