#include "fraclap/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "fraclap/errors.hpp"

namespace fraclap {

namespace {

// Local P1 geometry of one element: shape-function gradients, measure, and
// centroid. Gradients use the signed edge length / doubled area, so node
// ordering does not matter.
struct ElemGeom {
  int nv = 0;
  std::array<int, 3> nodes{{-1, -1, -1}};
  double gx[3] = {0.0, 0.0, 0.0};
  double gy[3] = {0.0, 0.0, 0.0};
  double measure = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

ElemGeom element_geometry(const Mesh& mesh, int e) {
  ElemGeom g;
  const auto& el = mesh.elements[e];
  if (mesh.dim == 1) {
    g.nv = 2;
    g.nodes = {{el[0], el[1], -1}};
    double x0 = mesh.nodes[el[0]][0];
    double x1 = mesh.nodes[el[1]][0];
    double h = x1 - x0;
    g.gx[0] = -1.0 / h;
    g.gx[1] = 1.0 / h;
    g.measure = std::abs(h);
    g.cx = 0.5 * (x0 + x1);
  } else {
    g.nv = 3;
    g.nodes = el;
    double x0 = mesh.nodes[el[0]][0], y0 = mesh.nodes[el[0]][1];
    double x1 = mesh.nodes[el[1]][0], y1 = mesh.nodes[el[1]][1];
    double x2 = mesh.nodes[el[2]][0], y2 = mesh.nodes[el[2]][1];
    double two_a = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    g.gx[0] = (y1 - y2) / two_a;
    g.gy[0] = (x2 - x1) / two_a;
    g.gx[1] = (y2 - y0) / two_a;
    g.gy[1] = (x0 - x2) / two_a;
    g.gx[2] = (y0 - y1) / two_a;
    g.gy[2] = (x1 - x0) / two_a;
    g.measure = 0.5 * std::abs(two_a);
    g.cx = (x0 + x1 + x2) / 3.0;
    g.cy = (y0 + y1 + y2) / 3.0;
  }
  return g;
}

void fill_diagnostics(const EvolutionWorkspace& ws, State& st) {
  const Vec& r = st.rho.coeffs;
  st.mass = ws.mass_weights().dot(r);
  st.second_moment = ws.moment_weights().dot(r);
  st.linf = linf_norm(st.rho);
  st.h1_semi = h1_seminorm(st.rho);
  double mn = r.size() > 0 ? r.minCoeff() : 0.0;
  // Eliminated Dirichlet nodes hold the value zero.
  if (ws.system().bc == BC::Dirichlet) mn = std::min(mn, 0.0);
  st.min_density = mn;
}

}  // namespace

EvolutionConfig default_config(EvolutionModel model) {
  EvolutionConfig cfg;
  cfg.model = model;
  cfg.potential_sign = model == EvolutionModel::KellerSegel
                           ? PotentialSign::Attractive
                           : PotentialSign::Repulsive;
  return cfg;
}

void validate(const EvolutionConfig& cfg) {
  if (!(cfg.s > 0.0) || !(cfg.s < 1.0))
    throw InvalidInput("evolution config: s must lie in (0, 1)");
  if (!(cfg.sigma >= 0.0))
    throw InvalidInput("evolution config: sigma must be nonnegative");
  if (!(cfg.dt_max > 0.0))
    throw InvalidInput("evolution config: dt_max must be positive");
  if (!(cfg.t_final > 0.0))
    throw InvalidInput("evolution config: t_final must be positive");
  if (!(cfg.delta > 0.0))
    throw InvalidInput("evolution config: delta must be positive");
  if (cfg.n_rational < 1 || cfg.n_rational > 64)
    throw InvalidInput("evolution config: n_rational out of range");
}

EvolutionWorkspace::EvolutionWorkspace(
    SystemPtr system, const EvolutionConfig& cfg,
    std::shared_ptr<const FractionalInverse> shared_inverse)
    : system_(std::move(system)), cfg_(cfg) {
  validate(cfg_);
  if (!system_) throw InvalidInput("evolution: null system");
  if (system_->bc != cfg_.bc)
    throw InvalidInput(
        "evolution: system boundary condition disagrees with the config");
  if (shared_inverse) {
    if (shared_inverse->system_ptr().get() != system_.get())
      throw InvalidInput(
          "evolution: shared fractional inverse was built on another system");
    if (shared_inverse->s() != cfg_.s)
      throw InvalidInput(
          "evolution: shared fractional inverse has a different order s");
    inverse_ = std::move(shared_inverse);
  } else {
    inverse_ = std::make_shared<FractionalInverse>(
        system_, cfg_.s, cfg_.n_rational, cfg_.bounds_tol, cfg_.fit);
  }

  const FemSystem& sys = *system_;
  Sc_ = sys.S;
  if (cfg_.transport_lumping) {
    Vec ml = sys.M * Vec::Ones(sys.num_free());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(sys.num_free());
    for (int i = 0; i < sys.num_free(); ++i) trip.emplace_back(i, i, ml[i]);
    Mt_.resize(sys.num_free(), sys.num_free());
    Mt_.setFromTriplets(trip.begin(), trip.end());
  } else {
    Mt_ = sys.M;
  }

  mass_w_.resize(sys.num_free());
  for (int i = 0; i < sys.num_free(); ++i)
    mass_w_[i] = sys.integ_phi[sys.free_nodes[i]];
  mom_w_ = load_vector_deg4(
      sys, [](double x, double y) { return x * x + y * y; });
}

double EvolutionWorkspace::effective_sigma() const {
  return cfg_.model == EvolutionModel::KellerSegel ? 1.0 : cfg_.sigma;
}

Vec EvolutionWorkspace::implicit_solve(double dt, const Vec& rhs) const {
  if (!implicit_ || cached_dt_ != dt) {
    Eigen::SparseMatrix<double> A = Mt_ + (dt * effective_sigma()) * Sc_;
    auto fac = std::make_unique<
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    fac->compute(A);
    if (fac->info() != Eigen::Success)
      throw NumericError(
          "evolution: singular-matrix in the implicit factorization");
    implicit_ = std::move(fac);
    cached_dt_ = dt;
  }
  Vec x = implicit_->solve(rhs);
  if (implicit_->info() != Eigen::Success)
    throw NumericError("evolution: implicit solve failed");
  return x;
}

FeFunction compute_potential(const EvolutionWorkspace& ws,
                             const FeFunction& rho) {
  if (rho.system.get() != &ws.system())
    throw InvalidInput("compute_potential: density lives on another system");
  Vec b = ws.system().M * rho.coeffs;
  Vec c = ws.inverse().apply(b);
  if (ws.config().potential_sign == PotentialSign::Repulsive) c = -c;
  return FeFunction{ws.system_ptr(), std::move(c)};
}

std::vector<std::array<double, 2>> transport_velocity(const FemSystem& system,
                                                      const FeFunction& c,
                                                      bool confining_drift) {
  if (c.system.get() != &system)
    throw InvalidInput("transport_velocity: potential lives on another system");
  const Mesh& mesh = *system.mesh;
  std::vector<double> cv(mesh.num_nodes());
  for (int k = 0; k < mesh.num_nodes(); ++k) cv[k] = c.value_at_node(k);

  std::vector<std::array<double, 2>> v(mesh.num_elements());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    ElemGeom g = element_geometry(mesh, e);
    double vx = 0.0, vy = 0.0;
    for (int k = 0; k < g.nv; ++k) {
      vx += cv[g.nodes[k]] * g.gx[k];
      vy += cv[g.nodes[k]] * g.gy[k];
    }
    if (confining_drift) {
      vx -= g.cx;
      vy -= g.cy;
    }
    v[e] = {{vx, vy}};
  }
  return v;
}

SpMat assemble_transport(const FemSystem& system,
                         const std::vector<std::array<double, 2>>& velocity) {
  const Mesh& mesh = *system.mesh;
  if (static_cast<int>(velocity.size()) != mesh.num_elements())
    throw InvalidInput("assemble_transport: one velocity per element required");

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(mesh.num_elements()) * 9);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    ElemGeom g = element_geometry(mesh, e);
    double w = g.measure / g.nv;  // ∫_K φ_i for every vertex i of K
    for (int j = 0; j < g.nv; ++j) {
      int fj = system.node_to_free[g.nodes[j]];
      if (fj < 0) continue;
      double val =
          (velocity[e][0] * g.gx[j] + velocity[e][1] * g.gy[j]) * w;
      for (int i = 0; i < g.nv; ++i) {
        int fi = system.node_to_free[g.nodes[i]];
        if (fi < 0) continue;
        trip.emplace_back(fi, fj, val);
      }
    }
  }
  SpMat T(system.num_free(), system.num_free());
  T.setFromTriplets(trip.begin(), trip.end());
  return T;
}

State initial_state(const EvolutionWorkspace& ws, FeFunction rho0) {
  if (rho0.system.get() != &ws.system())
    throw InvalidInput("initial_state: density lives on another system");
  if (!rho0.coeffs.allFinite())
    throw NumericError("evolution: non-finite initial data");
  State st;
  st.rho = std::move(rho0);
  st.c = zero_function(ws.system_ptr());
  fill_diagnostics(ws, st);
  return st;
}

double adaptive_dt(const State& state, const EvolutionConfig& cfg) {
  double denom = std::max(state.linf, state.h1_semi);
  if (!(denom > 0.0)) return cfg.dt_max;
  return std::min(cfg.dt_max, 1.0 / denom);
}

bool detect_blowup(double dt, double delta) { return dt < delta; }

State step_dt(const State& state, const EvolutionWorkspace& ws, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("step: dt must be positive");
  FeFunction c = compute_potential(ws, state.rho);
  auto velocity =
      transport_velocity(ws.system(), c,
                         ws.config().model == EvolutionModel::PME_SelfSimilar);
  SpMat T = assemble_transport(ws.system(), velocity);

  const Vec& r = state.rho.coeffs;
  Vec rhs = ws.time_mass_matrix() * r + dt * (T.transpose() * r);
  Vec rnew = ws.implicit_solve(dt, rhs);
  if (!rnew.allFinite())
    throw NumericError("evolution: nan-state at t = " +
                       std::to_string(state.t + dt));

  State out;
  out.rho = FeFunction{ws.system_ptr(), std::move(rnew)};
  out.c = std::move(c);
  out.t = state.t + dt;
  out.dt_last = dt;
  fill_diagnostics(ws, out);
  return out;
}

State step(const State& state, const EvolutionWorkspace& ws) {
  double dt = ws.config().dt_policy == DtPolicy::Fixed
                  ? ws.config().dt_max
                  : adaptive_dt(state, ws.config());
  return step_dt(state, ws, dt);
}

RunResult run(const EvolutionConfig& cfg, SystemPtr system,
              const FeFunction& rho0, const RunOptions& opts) {
  validate(cfg);
  if (opts.stride < 1) throw InvalidInput("run: stride must be >= 1");
  if (opts.max_steps < 0) throw InvalidInput("run: max_steps must be >= 0");

  EvolutionWorkspace ws(std::move(system), cfg, opts.shared_inverse);
  RunResult res;
  State st = initial_state(ws, rho0);

  auto dist = [&](const State& s) {
    return opts.reference ? l2_error_against(s.rho, opts.reference)
                          : std::numeric_limits<double>::quiet_NaN();
  };
  auto record = [&](const State& s, double dt_row) {
    res.trajectory.push_back({s.t, dt_row, s.mass, s.linf, s.h1_semi,
                              s.second_moment, dist(s), s.min_density,
                              s.blowup_flag});
  };
  record(st, 0.0);
  long recorded_at = 0;

  // Accumulated time misses t_final by an ulp or two; without the tolerance
  // the loop would take one spurious extra step past the end.
  const double t_eps = 1e-9 * cfg.t_final;
  while (st.t < cfg.t_final - t_eps && res.steps < opts.max_steps) {
    double dt = cfg.dt_policy == DtPolicy::Fixed ? cfg.dt_max
                                                 : adaptive_dt(st, cfg);
    if (detect_blowup(dt, cfg.delta)) {
      st.blowup_flag = true;
      st.dt_last = dt;
      record(st, dt);
      recorded_at = res.steps;
      break;
    }
    // Clamp only the final step; the blow-up check above must see the policy
    // step size, not the end-of-interval remainder.
    dt = std::min(dt, cfg.t_final - st.t);
    try {
      st = step_dt(st, ws, dt);
    } catch (const NumericError& err) {
      res.failed = true;
      res.error = err.what();
      break;
    }
    ++res.steps;
    if (res.steps % opts.stride == 0) {
      record(st, st.dt_last);
      recorded_at = res.steps;
    }
  }
  if (recorded_at != res.steps) record(st, st.dt_last);
  res.final_state = std::move(st);
  return res;
}

namespace {

// Root of sigma * phi + exp(phi) = q, returned as psi = exp(phi). The
// residual is increasing and convex in phi, and both starting guesses sit at
// or above the root, so Newton descends monotonically and exp never
// overflows.
double psi_from_q(double sigma, double q) {
  double phi =
      q <= 0.0 ? q / sigma : std::min(q / sigma, std::log(q) + 1.0);
  for (int it = 0; it < 200; ++it) {
    double ep = std::exp(phi);
    double dphi = (sigma * phi + ep - q) / (sigma + ep);
    phi -= dphi;
    if (std::abs(dphi) <= 1e-15 * (1.0 + std::abs(phi))) break;
  }
  return std::exp(phi);
}

// 2 pi * int_0^R psi(r) r dr by composite Simpson; psi is smooth, so the
// rule converges at fourth order.
double disc_mass(double sigma, double c, double radius, int panels) {
  double h = radius / panels;
  double acc = 0.0;
  for (int i = 0; i <= panels; ++i) {
    double r = i * h;
    double w = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * psi_from_q(sigma, c - 0.5 * r * r) * r;
  }
  return 2.0 * std::numbers::pi * acc * h / 3.0;
}

}  // namespace

FpSteadyState::FpSteadyState(double sigma, double mass, double radius)
    : sigma_(sigma) {
  if (!(sigma > 0.0))
    throw InvalidInput("steady state: sigma must be positive");
  if (!(mass > 0.0) || !(radius > 0.0))
    throw InvalidInput("steady state: mass and radius must be positive");

  const int panels = 4096;
  // The quadrature mass grows monotonically with the constant c; expand a
  // bracket, then bisect.
  double lo = 0.0, hi = 0.0;
  while (disc_mass(sigma, hi, radius, panels) < mass) {
    lo = hi;
    hi = hi > 0.0 ? hi * 2.0 : 1.0;
    if (hi > 1e8)
      throw NumericError("steady state: upper bracket expansion failed");
  }
  while (disc_mass(sigma, lo, radius, panels) > mass) {
    hi = lo;
    lo = lo < 0.0 ? lo * 2.0 : -1.0;
    if (lo < -1e8)
      throw NumericError("steady state: lower bracket expansion failed");
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double m = disc_mass(sigma, mid, radius, panels);
    if (std::abs(m - mass) <= 1e-10 * mass) {
      c_ = mid;
      return;
    }
    (m < mass ? lo : hi) = mid;
  }
  throw NumericError("steady state: mass bisection did not converge");
}

double FpSteadyState::psi(double r) const {
  return psi_from_q(sigma_, c_ - 0.5 * r * r);
}

ScalarField FpSteadyState::as_field() const {
  FpSteadyState copy = *this;
  return [copy](double x, double y) { return copy(x, y); };
}

double barenblatt_profile(double s, int d, bool unit_mass, double r) {
  if (!(s > 0.0) || !(s < 1.0))
    throw InvalidInput("barenblatt: s must lie in (0, 1)");
  if (d != 1 && d != 2)
    throw InvalidInput("barenblatt: dimension must be 1 or 2");
  double ar = std::abs(r);
  if (ar >= 1.0) return 0.0;
  double k;
  if (unit_mass) {
    k = std::tgamma(0.5 * d + 2.0 - s) /
        (std::pow(std::numbers::pi, 0.5 * d) * std::tgamma(2.0 - s));
  } else {
    k = d * std::tgamma(0.5 * d) /
        ((d + 2.0 * (1.0 - s)) * std::pow(2.0, 2.0 * (1.0 - s)) *
         std::tgamma(2.0 - s) * std::tgamma(0.5 * d + 1.0 - s));
  }
  return k * std::pow(1.0 - ar * ar, 1.0 - s);
}

double decay_reference(double t, double C_omega, double rho0_linf) {
  if (!(C_omega > 0.0) || !(rho0_linf > 0.0))
    throw InvalidInput("decay reference: constants must be positive");
  return std::exp(-2.0 * t / (C_omega * rho0_linf));
}

ComparisonScenario comparison_scenario(double amplitude, double width) {
  if (!(amplitude > 0.0) || !(width > 0.0))
    throw InvalidInput(
        "comparison scenario: amplitude and width must be positive");
  auto bump = [amplitude, width](double px, double py) {
    return amplitude * std::exp(-(px * px + py * py) / width);
  };
  ComparisonScenario sc;
  sc.amplitude = amplitude;
  sc.width = width;
  sc.u1 = [bump](double x, double y) { return bump(x - 2.0, y); };
  sc.u2 = [bump](double x, double y) {
    return bump(x - 2.0, y) + 2.0 * bump(x + 2.0, y);
  };
  return sc;
}

FeFunction gaussian_initial_data(SystemPtr system, double mass,
                                 double sigma_gauss, double cx, double cy) {
  if (!system) throw InvalidInput("gaussian: null system");
  if (!(mass > 0.0) || !(sigma_gauss > 0.0))
    throw InvalidInput("gaussian: mass and sigma_gauss must be positive");
  double inv = 1.0 / (2.0 * sigma_gauss * sigma_gauss);
  ScalarField g = [=](double x, double y) {
    double dx = x - cx;
    double dy = y - cy;
    return std::exp(-(dx * dx + dy * dy) * inv);
  };
  FeFunction rho = project_l2(system, g);
  double current = 0.0;
  for (int i = 0; i < system->num_free(); ++i)
    current += system->integ_phi[system->free_nodes[i]] * rho.coeffs[i];
  if (!(current > 0.0))
    throw InvalidInput(
        "gaussian: profile carries no resolvable mass on this mesh");
  rho.coeffs *= mass / current;
  return rho;
}

}  // namespace fraclap
