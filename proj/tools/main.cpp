#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fraclap/errors.hpp"
#include "fraclap/evolution.hpp"
#include "fraclap/fracsolve.hpp"
#include "fraclap/harness.hpp"
#include "fraclap/mesh.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fraclap;

namespace {

// Options shared by every subcommand. Flags override the config file.
struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<double> s, sigma, dt_max, delta, t_final, mass, sigma_gauss;
  std::optional<int> n_rational, dim, stride;
  std::optional<std::string> bc, dt_policy;
  std::vector<double> center;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "JSON config file");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--s", c.s, "fractional order");
  cmd->add_option("--sigma", c.sigma, "diffusion strength");
  cmd->add_option("--n", c.n_rational, "rational degree");
  cmd->add_option("--dim", c.dim, "space dimension (1 or 2)");
  cmd->add_option("--bc", c.bc, "dirichlet or neumann");
  cmd->add_option("--dt-max", c.dt_max, "largest time step");
  cmd->add_option("--dt-policy", c.dt_policy, "fixed or adaptive");
  cmd->add_option("--delta", c.delta, "blow-up threshold on dt");
  cmd->add_option("--t-final", c.t_final, "end time");
  cmd->add_option("--stride", c.stride, "record every k-th step");
  cmd->add_option("--mass", c.mass, "initial mass");
  cmd->add_option("--sigma-gauss", c.sigma_gauss, "initial gaussian width");
  cmd->add_option("--center", c.center, "initial gaussian center")
      ->expected(2)->delimiter(',');
}

HarnessConfig resolve(const CommonOpts& c, const std::string& model) {
  HarnessConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  cfg.model = model;
  // steady problems default to homogeneous Dirichlet walls
  if (model == "poisson" && c.config_path.empty() && !c.bc)
    cfg.bc = "dirichlet";
  if (c.s) cfg.s = *c.s;
  if (c.sigma) cfg.sigma = *c.sigma;
  if (c.n_rational) cfg.n_rational = *c.n_rational;
  if (c.dim) cfg.dim = *c.dim;
  if (c.bc) cfg.bc = *c.bc;
  if (c.dt_max) cfg.dt_max = *c.dt_max;
  if (c.dt_policy) cfg.dt_policy = *c.dt_policy;
  if (c.delta) cfg.delta = *c.delta;
  if (c.t_final) cfg.t_final = *c.t_final;
  if (c.stride) {
    if (*c.stride < 1) throw InvalidInput("config: stride must be >= 1");
    cfg.output.stride = *c.stride;
  }
  if (c.mass) cfg.initial.mass = *c.mass;
  if (c.sigma_gauss) cfg.initial.sigma_gauss = *c.sigma_gauss;
  if (c.center.size() == 2) {
    cfg.initial.center[0] = c.center[0];
    cfg.initial.center[1] = c.center[1];
  }
  if (!c.out_dir.empty()) cfg.output.dir = c.out_dir;
  return cfg;
}

fs::path ensure_out(const HarnessConfig& cfg) {
  fs::path dir = cfg.output.dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir))
    throw InvalidInput("cannot create output directory '" + dir.string() +
                       "'");
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw InvalidInput("cannot write '" + p.string() + "'");
  out << text;
}

json config_echo(const HarnessConfig& cfg) {
  return json::parse(config_to_json(cfg));
}

std::vector<double> parse_levels(const std::string& range) {
  int a = 0, b = 0;
  if (std::sscanf(range.c_str(), "%d:%d", &a, &b) != 2 || a < 1 || b < a ||
      b > 24)
    throw InvalidInput("levels must look like 5:9");
  std::vector<double> h;
  for (int l = a; l <= b; ++l) h.push_back(std::pow(2.0, -l));
  return h;
}

int cmd_poisson(const CommonOpts& c) {
  HarnessConfig cfg = resolve(c, "poisson");
  if (c.config_path.empty() && cfg.dim == 1) {
    cfg.domain = {"interval", {0.0, 1.0}};
    cfg.mesh = {"uniform", {64}};
  }
  auto mesh = build_mesh(cfg);
  BC bc = parse_bc(cfg.bc);
  auto system = assemble_shared(mesh, bc);
  Vec b = load_vector(*system, [](double, double) { return 1.0; });

  FractionalInverse inv(system, cfg.s, cfg.n_rational);
  SolveStats stats;
  Vec u = inv.apply(b, &stats);
  FeFunction uh{system, u};

  fs::path dir = ensure_out(cfg);
  {
    std::ofstream out(dir / "solution.csv");
    out << "x,y,u\n";
    char buf[128];
    for (int k = 0; k < mesh->num_nodes(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", mesh->nodes[k][0],
                    mesh->nodes[k][1], uh.value_at_node(k));
      out << buf;
    }
  }
  write_text(dir / "rational.json", rational_to_json(inv.rational()) + "\n");
  json summary;
  summary["command"] = "poisson";
  summary["config"] = config_echo(cfg);
  summary["spectral_interval"] = {inv.interval().lambda_min,
                                  inv.interval().lambda_max};
  summary["sup_error_fit"] = inv.rational().achieved_sup_error;
  summary["l2_norm"] = l2_norm(uh);
  summary["max_rel_residual"] = stats.max_rel_residual;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::printf("poisson: %d free nodes, s = %g, n = %d, |u|_L2 = %.12g\n",
              system->num_free(), cfg.s, cfg.n_rational, l2_norm(uh));
  return 0;
}

int cmd_conv_h(const CommonOpts& c, const std::string& levels,
               std::vector<double> s_list, int threads) {
  HarnessConfig cfg = resolve(c, "poisson");
  ConvHOptions opts;
  opts.dim = cfg.dim == 2 ? 2 : 1;
  opts.s_list = s_list.empty() ? std::vector<double>{cfg.s} : s_list;
  opts.h_list = parse_levels(levels);
  opts.n_rational = cfg.n_rational;
  opts.bc = parse_bc(cfg.bc);
  opts.threads = threads;
  auto studies = run_convergence_h(opts);

  fs::path dir = ensure_out(cfg);
  json summary;
  summary["command"] = "conv-h";
  summary["levels"] = levels;
  summary["dim"] = opts.dim;
  json per_s = json::array();
  for (const auto& st : studies) {
    char name[64];
    std::snprintf(name, sizeof name, "conv_h_s%g.csv", st.s);
    std::ofstream out(dir / name);
    write_conv_h_csv(out, st.records);
    per_s.push_back({{"s", st.s},
                     {"fitted_slope", st.fitted_slope},
                     {"predicted_slope", st.predicted_slope},
                     {"log_factor", st.log_factor},
                     {"correlation", st.correlation},
                     {"csv", name}});
    std::printf("conv-h: s = %-5g slope %.4f (predicted %.2f%s)\n", st.s,
                st.fitted_slope, st.predicted_slope,
                st.log_factor ? ", log factor" : "");
  }
  summary["studies"] = per_s;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_conv_n(const CommonOpts& c, std::vector<int> n_list, int cells,
               int threads) {
  HarnessConfig cfg = resolve(c, "poisson");
  ConvNOptions opts;
  opts.dim = cfg.dim == 2 ? 2 : 1;
  opts.s = cfg.s;
  opts.cells_per_side = cells;
  if (!n_list.empty()) opts.n_list = std::move(n_list);
  opts.bc = parse_bc(cfg.bc);
  opts.threads = threads;
  ConvNStudy st = run_convergence_n(opts);

  fs::path dir = ensure_out(cfg);
  {
    std::ofstream out(dir / "conv_n.csv");
    write_conv_n_csv(out, st.records);
  }
  json summary;
  summary["command"] = "conv-n";
  summary["s"] = opts.s;
  summary["cells_per_side"] = opts.cells_per_side;
  summary["reference"] = st.reference;
  summary["fitted_slope"] = st.fitted_slope;
  summary["correlation"] = st.correlation;
  summary["decreasing_prefix"] = st.prefix;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::printf("conv-n: %zu degrees, reference %s, log-linear slope %.4f\n",
              st.records.size(), st.reference.c_str(), st.fitted_slope);
  return 0;
}

int cmd_stahl(const CommonOpts& c, std::vector<double> s_list,
              std::vector<int> n_list) {
  HarnessConfig cfg = resolve(c, "poisson");
  if (s_list.empty()) s_list = {cfg.s};
  if (n_list.empty()) n_list = {6, 8, 10, 12};
  auto recs = run_stahl_check(s_list, n_list);
  fs::path dir = ensure_out(cfg);
  {
    std::ofstream out(dir / "stahl.csv");
    write_stahl_csv(out, recs);
  }
  for (const auto& r : recs)
    std::printf("stahl: s = %-4g n = %-3d ratio %.4f\n", r.s, r.n, r.ratio);
  return 0;
}

// Shared driver for the three evolution subcommands.
int run_evolution(const HarnessConfig& cfg, const std::string& ref_kind) {
  EvolutionConfig ec = to_evolution_config(cfg);
  auto mesh = build_mesh(cfg);
  auto system = assemble_shared(mesh, ec.bc);
  FeFunction rho0 = gaussian_initial_data(
      system, cfg.initial.mass, cfg.initial.sigma_gauss, cfg.initial.center[0],
      cfg.initial.center[1]);

  RunOptions ro;
  ro.stride = cfg.output.stride;
  fs::path dir = ensure_out(cfg);

  if (ref_kind == "fp") {
    if (cfg.domain.kind != "disc")
      throw InvalidInput("pme-fp expects a disc domain");
    double radius = cfg.domain.params.empty() ? 1.0 : cfg.domain.params[0];
    FpSteadyState fp(cfg.sigma, cfg.initial.mass, radius);
    ro.reference = fp.as_field();
    std::ofstream out(dir / "steady_state.csv");
    out << "r,psi\n";
    char buf[80];
    for (int i = 0; i <= 512; ++i) {
      double r = radius * i / 512.0;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r, fp.psi(r));
      out << buf;
    }
  } else if (ref_kind == "constant") {
    double level = cfg.initial.mass / system->integ_phi.sum();
    ro.reference = [level](double, double) { return level; };
  }

  RunResult res = run(ec, system, rho0, ro);
  {
    std::ofstream out(dir / "evolution.csv");
    write_evolution_csv(out, res.trajectory);
  }
  json summary;
  summary["command"] = cfg.model;
  summary["config"] = config_echo(cfg);
  summary["steps"] = res.steps;
  summary["t_end"] = res.final_state.t;
  summary["mass_end"] = res.final_state.mass;
  summary["blowup"] = res.final_state.blowup_flag;
  summary["failed"] = res.failed;
  if (res.failed) summary["error"] = res.error;
  if (ref_kind != "none")
    summary["l2_dist_ref_end"] = res.trajectory.back().l2_dist_ref;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::printf("%s: %ld steps to t = %.6g, mass %.12g%s%s\n", cfg.model.c_str(),
              res.steps, res.final_state.t, res.final_state.mass,
              res.final_state.blowup_flag ? ", blow-up" : "",
              res.failed ? ", FAILED" : "");
  if (res.failed) {
    std::fprintf(stderr, "numerical failure: %s\n", res.error.c_str());
    return 3;
  }
  return 0;
}

int cmd_pme(const CommonOpts& c) {
  HarnessConfig cfg = resolve(c, "pme");
  if (c.config_path.empty()) {
    cfg.domain = {"rectangle", {-5.0, -5.0, 5.0, 5.0}};
    cfg.mesh = {"uniform", {64}};
  }
  return run_evolution(cfg, "none");
}

int cmd_pme_fp(const CommonOpts& c) {
  HarnessConfig cfg = resolve(c, "pme-selfsimilar");
  if (c.config_path.empty()) {
    cfg.domain = {"disc", {10.0}};
    cfg.mesh = {"rings", {40}};
  }
  return run_evolution(cfg, "fp");
}

int cmd_keller_segel(const CommonOpts& c, const std::string& ref_kind) {
  HarnessConfig cfg = resolve(c, "keller-segel");
  if (c.config_path.empty()) {
    cfg.domain = {"rectangle", {-1.0, -1.0, 1.0, 1.0}};
    cfg.mesh = {"uniform", {64}};
  }
  return run_evolution(cfg, ref_kind);
}

int cmd_sweep(const CommonOpts& c, std::vector<double> masses,
              std::vector<double> sigmas, int rings, double radius,
              int threads) {
  HarnessConfig cfg = resolve(c, "keller-segel");
  SweepOptions opts;
  opts.s = c.s ? *c.s : 0.75;
  opts.masses = std::move(masses);
  opts.sigmas = std::move(sigmas);
  opts.mesh = std::make_shared<Mesh>(disc_mesh(radius, rings));
  opts.bc = parse_bc(cfg.bc);
  opts.delta = cfg.delta;
  opts.dt_max = cfg.dt_max;
  opts.t_final = c.t_final ? *c.t_final : 4.0;
  opts.n_rational = cfg.n_rational;
  opts.threads = threads;
  auto cells = run_blowup_sweep(opts);

  fs::path dir = ensure_out(cfg);
  {
    std::ofstream out(dir / "sweep.csv");
    write_sweep_csv(out, cells);
  }
  int errors = 0;
  for (const auto& cell : cells) {
    std::printf("sweep: M = %-8.4g sigma = %-6.4g %-9s t_end = %-8.4g %ld steps\n",
                cell.mass, cell.sigma_gauss, cell.outcome.c_str(), cell.t_end,
                cell.steps);
    if (cell.outcome == "error") {
      ++errors;
      std::fprintf(stderr, "cell (%g, %g) failed: %s\n", cell.mass,
                   cell.sigma_gauss, cell.note.c_str());
    }
  }
  json summary;
  summary["command"] = "blowup-sweep";
  summary["s"] = opts.s;
  summary["rings"] = rings;
  summary["radius"] = radius;
  summary["cells"] = cells.size();
  summary["errors"] = errors;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  // individual cell errors are data; only a fully failed sweep is a failure
  return errors == static_cast<int>(cells.size()) ? 3 : 0;
}

int cmd_mesh_gen(const CommonOpts& c, const std::string& kind,
                 std::vector<double> params, std::vector<int> cells,
                 std::string file) {
  HarnessConfig cfg = resolve(c, "poisson");
  cfg.domain.kind = kind;
  cfg.domain.params = std::move(params);
  cfg.dim = kind == "interval" ? 1 : 2;
  cfg.mesh.kind = kind == "disc" ? "rings" : "uniform";
  cfg.mesh.params.clear();
  for (int m : cells) cfg.mesh.params.push_back(m);
  auto mesh = build_mesh(cfg);

  fs::path dir = ensure_out(cfg);
  fs::path target = file.empty() ? dir / "mesh.txt" : fs::path(file);
  save_mesh(*mesh, target.string());
  std::printf("mesh-gen: %s, %d nodes, %d elements -> %s\n", kind.c_str(),
              mesh->num_nodes(), mesh->num_elements(),
              target.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectral fractional Laplacian solvers and experiment drivers"};
  app.require_subcommand(1);

  CommonOpts c;
  std::function<int()> runner;

  auto* poisson =
      app.add_subcommand("poisson", "solve (-Lap)^s u = 1 once");
  add_common(poisson, c);
  poisson->callback([&] { runner = [&] { return cmd_poisson(c); }; });

  auto* conv_h = app.add_subcommand(
      "conv-h", "mesh refinement study against the finest level");
  add_common(conv_h, c);
  std::string levels = "5:9";
  std::vector<double> s_list;
  int threads = 0;
  conv_h->add_option("--levels", levels, "mesh levels a:b, h = 2^-l");
  conv_h->add_option("--s-list", s_list, "fractional orders")->delimiter(',');
  conv_h->add_option("--threads", threads, "worker threads (0 = auto)");
  conv_h->callback(
      [&] { runner = [&] { return cmd_conv_h(c, levels, s_list, threads); }; });

  auto* conv_n = app.add_subcommand(
      "conv-n", "rational degree study on a fixed mesh");
  add_common(conv_n, c);
  std::vector<int> n_list;
  int cells = 64;
  conv_n->add_option("--n-list", n_list, "rational degrees")->delimiter(',');
  conv_n->add_option("--cells", cells, "mesh cells per side");
  conv_n->add_option("--threads", threads, "worker threads (0 = auto)");
  conv_n->callback(
      [&] { runner = [&] { return cmd_conv_n(c, n_list, cells, threads); }; });

  auto* stahl = app.add_subcommand(
      "stahl", "scalar minimax error against the asymptotic law");
  add_common(stahl, c);
  std::vector<double> stahl_s;
  std::vector<int> stahl_n;
  stahl->add_option("--s-list", stahl_s, "orders to fit")->delimiter(',');
  stahl->add_option("--n-list", stahl_n, "degrees to fit")->delimiter(',');
  stahl->callback(
      [&] { runner = [&] { return cmd_stahl(c, stahl_s, stahl_n); }; });

  auto* pme = app.add_subcommand("pme", "fractional porous-medium run");
  add_common(pme, c);
  pme->callback([&] { runner = [&] { return cmd_pme(c); }; });

  auto* pme_fp = app.add_subcommand(
      "pme-fp", "self-similar porous-medium run against the steady state");
  add_common(pme_fp, c);
  pme_fp->callback([&] { runner = [&] { return cmd_pme_fp(c); }; });

  auto* ks = app.add_subcommand("keller-segel", "fractional chemotaxis run");
  add_common(ks, c);
  std::string ref_kind = "none";
  ks->add_option("--ref", ref_kind, "distance reference: none or constant")
      ->check(CLI::IsMember({"none", "constant"}));
  ks->callback([&] { runner = [&] { return cmd_keller_segel(c, ref_kind); }; });

  auto* sweep = app.add_subcommand(
      "blowup-sweep", "grid of chemotaxis runs over mass and width");
  add_common(sweep, c);
  std::vector<double> masses, sigmas;
  int rings = 25;
  double radius = 1.0;
  sweep->add_option("--masses", masses, "initial masses")->delimiter(',');
  sweep->add_option("--sigmas", sigmas, "gaussian widths")->delimiter(',');
  sweep->add_option("--rings", rings, "disc mesh rings");
  sweep->add_option("--radius", radius, "disc radius");
  sweep->add_option("--threads", threads, "worker threads (0 = auto)");
  sweep->callback([&] {
    runner = [&] {
      return cmd_sweep(c, masses, sigmas, rings, radius, threads);
    };
  });

  auto* mesh_gen = app.add_subcommand("mesh-gen", "write a mesh file");
  add_common(mesh_gen, c);
  std::string kind = "rectangle", file;
  std::vector<double> params;
  std::vector<int> mesh_cells;
  mesh_gen->add_option("--kind", kind, "interval, rectangle, or disc")
      ->check(CLI::IsMember({"interval", "rectangle", "disc"}));
  mesh_gen->add_option("--params", params, "domain parameters")->delimiter(',');
  mesh_gen->add_option("--cells", mesh_cells, "mesh resolution parameters")->delimiter(',');
  mesh_gen->add_option("--file", file, "target path (default <out>/mesh.txt)");
  mesh_gen->callback([&] {
    runner = [&] { return cmd_mesh_gen(c, kind, params, mesh_cells, file); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    return runner();
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 3;
  }
}
