#include "fraclap/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fraclap/errors.hpp"
#include "fraclap/fracsolve.hpp"

namespace fraclap {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Runs fn(0..count-1) on up to `workers` threads. Exceptions are collected
// per item and the first one (in item order) is rethrown after the join, so
// results stay deterministic.
void parallel_items(int count, int workers,
                    const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errs(count);
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            errs[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

double m_norm(const SpMat& M, const Vec& d) { return std::sqrt(d.dot(M * d)); }

}  // namespace

RatePrediction predicted_rate(double s) {
  if (s <= 0.75) return {2.0 * (s + 0.25), true};
  return {2.0, false};
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidInput("fit_line: need at least 2 points");
  size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw InvalidInput("fit_line: abscissae are constant");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.correlation = syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  return f;
}

int worker_count(int requested) {
  int limit = 256;
  if (const char* env = std::getenv("FRACLAP_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 256)
      throw InvalidInput("FRACLAP_THREADS must be an integer in [1, 256]");
    limit = static_cast<int>(v);
  }
  int base;
  if (requested > 0) {
    base = requested;
  } else {
    unsigned hc = std::thread::hardware_concurrency();
    base = hc ? static_cast<int>(hc) : 1;
  }
  return std::clamp(std::min(base, limit), 1, 256);
}

Vec seeded_vector(std::uint64_t seed, int size) {
  if (size < 0) throw InvalidInput("seeded_vector: negative size");
  Vec v(size);
  std::uint64_t x = seed;
  for (int i = 0; i < size; ++i) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    v[i] = 2.0 * static_cast<double>(z >> 11) * 0x1p-53 - 1.0;
  }
  return v;
}

// ---- mesh refinement study -------------------------------------------------

std::vector<ConvHStudy> run_convergence_h(const ConvHOptions& opts) {
  if (opts.dim != 1 && opts.dim != 2)
    throw InvalidInput("conv-h: dim must be 1 or 2");
  if (opts.s_list.empty()) throw InvalidInput("conv-h: empty s list");
  for (double s : opts.s_list)
    if (!(s > 0.0) || !(s <= 1.0))
      throw InvalidInput("conv-h: s must lie in (0, 1]");
  if (opts.h_list.size() < 3)
    throw InvalidInput("conv-h: at least 3 mesh sizes required");
  for (size_t i = 0; i + 1 < opts.h_list.size(); ++i)
    if (!(opts.h_list[i] > opts.h_list[i + 1]))
      throw InvalidInput("conv-h: h list must be strictly decreasing");

  const int L = static_cast<int>(opts.h_list.size());
  const int S = static_cast<int>(opts.s_list.size());
  ScalarField f = opts.f ? opts.f : [](double, double) { return 1.0; };

  std::vector<std::shared_ptr<const Mesh>> meshes(L);
  for (int l = 0; l < L; ++l) {
    double h = opts.h_list[l];
    long m = std::lround(1.0 / h);
    if (m < 2 || std::abs(1.0 / h - static_cast<double>(m)) > 1e-9 * m)
      throw InvalidInput("conv-h: each h must be the reciprocal of an integer");
    meshes[l] = std::make_shared<Mesh>(
        opts.dim == 1
            ? uniform_interval(0.0, 1.0, static_cast<int>(m))
            : uniform_rectangle(0.0, 0.0, 1.0, 1.0, static_cast<int>(m),
                                static_cast<int>(m)));
  }

  std::vector<FeFunction> sol(static_cast<size_t>(S) * L);
  parallel_items(S * L, worker_count(opts.threads), [&](int idx) {
    int si = idx / L, l = idx % L;
    sol[idx] = solve_fractional_poisson(meshes[l], opts.bc, opts.s_list[si], f,
                                        opts.n_rational);
  });

  std::vector<std::unique_ptr<MeshLocator>> locators(L - 1);
  for (int l = 0; l < L - 1; ++l)
    locators[l] = std::make_unique<MeshLocator>(*meshes[l]);

  std::vector<ConvHStudy> studies(S);
  for (int si = 0; si < S; ++si) {
    ConvHStudy& st = studies[si];
    st.s = opts.s_list[si];
    const FeFunction& ref = sol[static_cast<size_t>(si) * L + (L - 1)];
    const FemSystem& fine = *ref.system;

    std::vector<double> lx, ly;
    for (int l = 0; l < L - 1; ++l) {
      const FeFunction& u = sol[static_cast<size_t>(si) * L + l];
      // Nodal lift onto the finest mesh; exact for nested refinements, so
      // the M-norm below is the true L2 distance.
      Vec d(fine.num_free());
      for (int i = 0; i < fine.num_free(); ++i) {
        const auto& p = fine.mesh->nodes[fine.free_nodes[i]];
        d[i] = eval_at(u, *locators[l], p[0], p[1]);
      }
      d -= ref.coeffs;
      double err = m_norm(fine.M, d);
      ConvHRecord rec;
      rec.h = opts.h_list[l];
      rec.error_l2 = err;
      rec.slope_running =
          l == 0 ? std::numeric_limits<double>::quiet_NaN()
                 : std::log(st.records.back().error_l2 / err) /
                       std::log(opts.h_list[l - 1] / opts.h_list[l]);
      st.records.push_back(rec);
      lx.push_back(std::log(rec.h));
      ly.push_back(std::log(err));
    }
    LineFit fit = fit_line(lx, ly);
    st.fitted_slope = fit.slope;
    st.correlation = fit.correlation;
    RatePrediction pr = predicted_rate(st.s);
    st.predicted_slope = pr.slope;
    st.log_factor = pr.log_factor;
  }
  return studies;
}

// ---- rational degree study -------------------------------------------------

ConvNStudy run_convergence_n(const ConvNOptions& opts) {
  if (opts.dim != 1 && opts.dim != 2)
    throw InvalidInput("conv-n: dim must be 1 or 2");
  if (!(opts.s > 0.0) || !(opts.s <= 1.0))
    throw InvalidInput("conv-n: s must lie in (0, 1]");
  if (opts.n_list.empty()) throw InvalidInput("conv-n: empty n list");
  for (size_t i = 0; i < opts.n_list.size(); ++i) {
    if (opts.n_list[i] < 1 || opts.n_list[i] > 60)
      throw InvalidInput("conv-n: n out of range");
    if (i > 0 && opts.n_list[i] <= opts.n_list[i - 1])
      throw InvalidInput("conv-n: n list must be strictly increasing");
  }
  if (opts.cells_per_side < 2)
    throw InvalidInput("conv-n: mesh must have at least 2 cells per side");

  ScalarField f = opts.f;
  if (!f) {
    f = opts.dim == 1
            ? ScalarField([](double x, double) {
                return std::sin(std::numbers::pi * x);
              })
            : ScalarField([](double x, double y) {
                return std::sin(std::numbers::pi * x) *
                       std::sin(std::numbers::pi * y);
              });
  }
  auto mesh = std::make_shared<Mesh>(
      opts.dim == 1 ? uniform_interval(0.0, 1.0, opts.cells_per_side)
                    : uniform_rectangle(0.0, 0.0, 1.0, 1.0,
                                        opts.cells_per_side,
                                        opts.cells_per_side));
  auto system = assemble_shared(mesh, opts.bc);
  Vec b = load_vector(*system, f);

  ConvNStudy st;
  Vec ref;
  if (system->num_free() <= 2000) {
    SpectralOracle oracle(*system);
    ref = oracle_inverse_fractional(oracle, opts.s, b);
    st.reference = "oracle";
  } else {
    FractionalInverse inv(system, opts.s, opts.n_list.back() + 4);
    ref = inv.apply(b);
    st.reference = "rational n_max+4";
  }

  const int N = static_cast<int>(opts.n_list.size());
  std::vector<ConvNRecord> recs(N);
  parallel_items(N, worker_count(opts.threads), [&](int i) {
    FractionalInverse inv(system, opts.s, opts.n_list[i]);
    Vec u = inv.apply(b);
    recs[i].n = opts.n_list[i];
    recs[i].error_M = m_norm(system->M, Vec(u - ref));
    recs[i].sup_error_fit = inv.rational().achieved_sup_error;
  });
  st.records = std::move(recs);

  int prefix = 1;
  while (prefix < N &&
         st.records[prefix].error_M < st.records[prefix - 1].error_M)
    ++prefix;
  st.prefix = prefix;
  if (prefix >= 2) {
    std::vector<double> x, y;
    for (int i = 0; i < prefix; ++i) {
      x.push_back(st.records[i].n);
      y.push_back(std::log(st.records[i].error_M));
    }
    LineFit fit = fit_line(x, y);
    st.fitted_slope = fit.slope;
    st.correlation = fit.correlation;
  }
  return st;
}

// ---- scalar minimax asymptotic ----------------------------------------------

std::vector<StahlRecord> run_stahl_check(const std::vector<double>& s_list,
                                         const std::vector<int>& n_list,
                                         const FitOptions& fit) {
  if (s_list.empty() || n_list.empty())
    throw InvalidInput("stahl: empty parameter list");
  std::vector<StahlRecord> out;
  for (double s : s_list) {
    if (!(s > 0.0) || !(s < 1.0))
      throw InvalidInput("stahl: s must lie in (0, 1)");
    for (int n : n_list) {
      RationalApprox r = fit_positive_power(s, n, fit);
      StahlRecord rec;
      rec.s = s;
      rec.n = n;
      rec.sup_error = r.achieved_sup_error;
      rec.reference = stahl_reference(s, n);
      rec.ratio = rec.sup_error / rec.reference;
      out.push_back(rec);
    }
  }
  return out;
}

// ---- blow-up sweep -----------------------------------------------------------

std::vector<SweepCell> run_blowup_sweep(const SweepOptions& opts) {
  if (!(opts.s > 0.0) || !(opts.s < 1.0))
    throw InvalidInput("sweep: s must lie in (0, 1)");
  if (!(opts.delta > 0.0) || !(opts.dt_max > 0.0) || !(opts.t_final > 0.0))
    throw InvalidInput("sweep: delta, dt_max, t_final must be positive");

  std::vector<double> masses = opts.masses;
  if (masses.empty())
    masses = {0.1,
              std::numbers::pi,
              2.0 * std::numbers::pi,
              4.0 * std::numbers::pi,
              6.0 * std::numbers::pi,
              8.0 * std::numbers::pi};
  std::vector<double> sigmas = opts.sigmas;
  if (sigmas.empty()) sigmas = {1.0, 0.7, 0.5, 0.35, 0.25, 0.18};
  for (double m : masses)
    if (!(m > 0.0)) throw InvalidInput("sweep: masses must be positive");
  for (double g : sigmas)
    if (!(g > 0.0)) throw InvalidInput("sweep: widths must be positive");

  std::shared_ptr<const Mesh> mesh = opts.mesh;
  if (!mesh) mesh = std::make_shared<Mesh>(disc_mesh(1.0, 25));
  auto system = assemble_shared(mesh, opts.bc);

  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.s = opts.s;
  cfg.bc = opts.bc;
  cfg.dt_policy = DtPolicy::Adaptive;
  cfg.dt_max = opts.dt_max;
  cfg.delta = opts.delta;
  cfg.t_final = opts.t_final;
  cfg.n_rational = opts.n_rational;

  const int NM = static_cast<int>(masses.size());
  const int NS = static_cast<int>(sigmas.size());
  const int count = NM * NS;
  std::vector<SweepCell> cells(count);
  for (int i = 0; i < count; ++i) {
    cells[i].mass = masses[i / NS];
    cells[i].sigma_gauss = sigmas[i % NS];
  }

  int workers = std::min(worker_count(opts.threads), count);
  std::atomic<int> next{0};
  auto body = [&] {
    // One fractional inverse per worker; cells only read it.
    std::shared_ptr<const FractionalInverse> inv;
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      SweepCell& cell = cells[i];
      try {
        if (!inv)
          inv = std::make_shared<FractionalInverse>(system, cfg.s,
                                                    cfg.n_rational);
        FeFunction rho0 =
            gaussian_initial_data(system, cell.mass, cell.sigma_gauss);
        RunOptions ro;
        ro.stride = 1 << 30;  // only the endpoints matter here
        ro.shared_inverse = inv;
        RunResult res = run(cfg, system, rho0, ro);
        cell.t_end = res.final_state.t;
        cell.steps = res.steps;
        if (res.failed) {
          cell.outcome = "error";
          cell.note = res.error;
        } else {
          cell.outcome = res.final_state.blowup_flag ? "blowup" : "no_blowup";
        }
      } catch (const std::exception& e) {
        cell.outcome = "error";
        cell.note = e.what();
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  return cells;
}

// ---- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, int line_no) {
  const char* p = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(p, &end);
  if (end == p || *end != '\0')
    throw ParseError("csv line " + std::to_string(line_no) +
                     ": bad number '" + tok + "'");
  return v;
}

long parse_long(const std::string& tok, int line_no) {
  const char* p = tok.c_str();
  char* end = nullptr;
  long v = std::strtol(p, &end, 10);
  if (end == p || *end != '\0')
    throw ParseError("csv line " + std::to_string(line_no) +
                     ": bad integer '" + tok + "'");
  return v;
}

// Rows of exactly `width` fields, header checked verbatim.
std::vector<std::vector<std::string>> read_rows(std::istream& in,
                                                const std::string& header,
                                                size_t width) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw ParseError("csv line 1: expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto toks = split_csv_line(line);
    if (toks.size() != width)
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " fields");
    rows.push_back(std::move(toks));
  }
  return rows;
}

}  // namespace

void write_conv_h_csv(std::ostream& out, const std::vector<ConvHRecord>& rows) {
  out << "h,error_l2,slope_running\n";
  for (const auto& r : rows)
    out << fmt(r.h) << ',' << fmt(r.error_l2) << ',' << fmt(r.slope_running)
        << '\n';
}

void write_conv_n_csv(std::ostream& out, const std::vector<ConvNRecord>& rows) {
  out << "n,error_M,sup_error_fit\n";
  for (const auto& r : rows)
    out << r.n << ',' << fmt(r.error_M) << ',' << fmt(r.sup_error_fit) << '\n';
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& rows) {
  out << "mass,sigma_gauss,outcome,t_end,steps\n";
  for (const auto& r : rows)
    out << fmt(r.mass) << ',' << fmt(r.sigma_gauss) << ',' << r.outcome << ','
        << fmt(r.t_end) << ',' << r.steps << '\n';
}

void write_evolution_csv(std::ostream& out,
                         const std::vector<DiagnosticRecord>& rows) {
  out << "t,dt,mass,linf,h1_semi,second_moment,l2_dist_ref,min_density,"
         "blowup_flag\n";
  for (const auto& r : rows)
    out << fmt(r.t) << ',' << fmt(r.dt) << ',' << fmt(r.mass) << ','
        << fmt(r.linf) << ',' << fmt(r.h1_semi) << ',' << fmt(r.second_moment)
        << ',' << fmt(r.l2_dist_ref) << ',' << fmt(r.min_density) << ','
        << (r.blowup_flag ? 1 : 0) << '\n';
}

void write_stahl_csv(std::ostream& out, const std::vector<StahlRecord>& rows) {
  out << "s,n,sup_error,reference,ratio\n";
  for (const auto& r : rows)
    out << fmt(r.s) << ',' << r.n << ',' << fmt(r.sup_error) << ','
        << fmt(r.reference) << ',' << fmt(r.ratio) << '\n';
}

std::vector<ConvHRecord> parse_conv_h_csv(std::istream& in) {
  auto rows = read_rows(in, "h,error_l2,slope_running", 3);
  std::vector<ConvHRecord> out;
  int ln = 1;
  for (const auto& t : rows) {
    ++ln;
    out.push_back({parse_double(t[0], ln), parse_double(t[1], ln),
                   parse_double(t[2], ln)});
  }
  return out;
}

std::vector<ConvNRecord> parse_conv_n_csv(std::istream& in) {
  auto rows = read_rows(in, "n,error_M,sup_error_fit", 3);
  std::vector<ConvNRecord> out;
  int ln = 1;
  for (const auto& t : rows) {
    ++ln;
    out.push_back({static_cast<int>(parse_long(t[0], ln)),
                   parse_double(t[1], ln), parse_double(t[2], ln)});
  }
  return out;
}

std::vector<SweepCell> parse_sweep_csv(std::istream& in) {
  auto rows = read_rows(in, "mass,sigma_gauss,outcome,t_end,steps", 5);
  std::vector<SweepCell> out;
  int ln = 1;
  for (const auto& t : rows) {
    ++ln;
    if (t[2] != "blowup" && t[2] != "no_blowup" && t[2] != "error")
      throw ParseError("csv line " + std::to_string(ln) + ": bad outcome '" +
                       t[2] + "'");
    SweepCell c;
    c.mass = parse_double(t[0], ln);
    c.sigma_gauss = parse_double(t[1], ln);
    c.outcome = t[2];
    c.t_end = parse_double(t[3], ln);
    c.steps = parse_long(t[4], ln);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<DiagnosticRecord> parse_evolution_csv(std::istream& in) {
  auto rows = read_rows(
      in,
      "t,dt,mass,linf,h1_semi,second_moment,l2_dist_ref,min_density,"
      "blowup_flag",
      9);
  std::vector<DiagnosticRecord> out;
  int ln = 1;
  for (const auto& t : rows) {
    ++ln;
    DiagnosticRecord r;
    r.t = parse_double(t[0], ln);
    r.dt = parse_double(t[1], ln);
    r.mass = parse_double(t[2], ln);
    r.linf = parse_double(t[3], ln);
    r.h1_semi = parse_double(t[4], ln);
    r.second_moment = parse_double(t[5], ln);
    r.l2_dist_ref = parse_double(t[6], ln);
    r.min_density = parse_double(t[7], ln);
    long flag = parse_long(t[8], ln);
    if (flag != 0 && flag != 1)
      throw ParseError("csv line " + std::to_string(ln) +
                       ": blowup_flag must be 0 or 1");
    r.blowup_flag = flag == 1;
    out.push_back(r);
  }
  return out;
}

// ---- config ------------------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& msg) {
  throw InvalidInput("config: " + msg);
}

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& known) {
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      bad("unknown key '" + item.key() + "' in " + where);
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) bad(std::string(key) + " must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) bad(std::string(key) + " must be an integer");
  return j[key].get<int>();
}

std::string get_str(const json& j, const char* key,
                    const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) bad(std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

std::vector<double> get_num_array(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j[key].is_array()) bad(std::string(key) + " must be an array");
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) bad(std::string(key) + " must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

HarnessConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  if (!j.is_object()) bad("top level must be an object");
  check_keys(j, "config",
             {"model", "dim", "domain", "mesh", "bc", "s", "sigma",
              "n_rational", "dt", "delta", "t_final", "initial", "output"});

  HarnessConfig cfg;
  cfg.model = get_str(j, "model", cfg.model);
  if (cfg.model != "poisson" && cfg.model != "pme" &&
      cfg.model != "pme-selfsimilar" && cfg.model != "keller-segel")
    bad("model must be poisson, pme, pme-selfsimilar, or keller-segel");
  cfg.dim = get_int(j, "dim", cfg.dim);
  if (cfg.dim != 1 && cfg.dim != 2) bad("dim must be 1 or 2");

  if (j.contains("domain")) {
    if (!j["domain"].is_object()) bad("domain must be an object");
    check_keys(j["domain"], "domain", {"kind", "params"});
    cfg.domain.kind = get_str(j["domain"], "kind", cfg.domain.kind);
    cfg.domain.params = get_num_array(j["domain"], "params");
  }
  if (cfg.domain.kind != "interval" && cfg.domain.kind != "rectangle" &&
      cfg.domain.kind != "disc")
    bad("domain.kind must be interval, rectangle, or disc");

  if (j.contains("mesh")) {
    if (!j["mesh"].is_object()) bad("mesh must be an object");
    check_keys(j["mesh"], "mesh", {"kind", "params"});
    cfg.mesh.kind = get_str(j["mesh"], "kind", cfg.mesh.kind);
    cfg.mesh.params = get_num_array(j["mesh"], "params");
  }
  if (cfg.mesh.kind != "uniform" && cfg.mesh.kind != "rings")
    bad("mesh.kind must be uniform or rings");

  cfg.bc = get_str(j, "bc", cfg.bc);
  if (cfg.bc != "dirichlet" && cfg.bc != "neumann")
    bad("bc must be dirichlet or neumann");
  cfg.s = get_num(j, "s", cfg.s);
  cfg.sigma = get_num(j, "sigma", cfg.sigma);
  cfg.n_rational = get_int(j, "n_rational", cfg.n_rational);

  if (j.contains("dt")) {
    if (!j["dt"].is_object()) bad("dt must be an object");
    check_keys(j["dt"], "dt", {"policy", "dt_max"});
    cfg.dt_policy = get_str(j["dt"], "policy", cfg.dt_policy);
    cfg.dt_max = get_num(j["dt"], "dt_max", cfg.dt_max);
  }
  if (cfg.dt_policy != "fixed" && cfg.dt_policy != "adaptive")
    bad("dt.policy must be fixed or adaptive");

  cfg.delta = get_num(j, "delta", cfg.delta);
  cfg.t_final = get_num(j, "t_final", cfg.t_final);

  if (j.contains("initial")) {
    if (!j["initial"].is_object()) bad("initial must be an object");
    check_keys(j["initial"], "initial",
               {"kind", "mass", "sigma_gauss", "center"});
    cfg.initial.kind = get_str(j["initial"], "kind", cfg.initial.kind);
    if (cfg.initial.kind != "gaussian") bad("initial.kind must be gaussian");
    cfg.initial.mass = get_num(j["initial"], "mass", cfg.initial.mass);
    cfg.initial.sigma_gauss =
        get_num(j["initial"], "sigma_gauss", cfg.initial.sigma_gauss);
    auto c = get_num_array(j["initial"], "center");
    if (!c.empty()) {
      if (c.size() > 2) bad("initial.center takes at most 2 coordinates");
      cfg.initial.center[0] = c[0];
      cfg.initial.center[1] = c.size() > 1 ? c[1] : 0.0;
    }
  }

  if (j.contains("output")) {
    if (!j["output"].is_object()) bad("output must be an object");
    check_keys(j["output"], "output", {"dir", "stride"});
    cfg.output.dir = get_str(j["output"], "dir", cfg.output.dir);
    cfg.output.stride = get_int(j["output"], "stride", cfg.output.stride);
    if (cfg.output.stride < 1) bad("output.stride must be >= 1");
  }
  return cfg;
}

HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const HarnessConfig& cfg) {
  json j;
  j["model"] = cfg.model;
  j["dim"] = cfg.dim;
  j["domain"] = {{"kind", cfg.domain.kind}, {"params", cfg.domain.params}};
  j["mesh"] = {{"kind", cfg.mesh.kind}, {"params", cfg.mesh.params}};
  j["bc"] = cfg.bc;
  j["s"] = cfg.s;
  j["sigma"] = cfg.sigma;
  j["n_rational"] = cfg.n_rational;
  j["dt"] = {{"policy", cfg.dt_policy}, {"dt_max", cfg.dt_max}};
  j["delta"] = cfg.delta;
  j["t_final"] = cfg.t_final;
  j["initial"] = {{"kind", cfg.initial.kind},
                  {"mass", cfg.initial.mass},
                  {"sigma_gauss", cfg.initial.sigma_gauss},
                  {"center", cfg.initial.center}};
  j["output"] = {{"dir", cfg.output.dir}, {"stride", cfg.output.stride}};
  return j.dump(2) + "\n";
}

BC parse_bc(const std::string& name) {
  if (name == "dirichlet") return BC::Dirichlet;
  if (name == "neumann") return BC::Neumann;
  throw InvalidInput("config: bc must be dirichlet or neumann");
}

std::shared_ptr<const Mesh> build_mesh(const HarnessConfig& cfg) {
  const auto& dp = cfg.domain.params;
  const auto& mp = cfg.mesh.params;
  auto mesh_int = [&](size_t i, int fallback) {
    if (mp.size() <= i) return fallback;
    double v = mp[i];
    int m = static_cast<int>(std::lround(v));
    if (m < 1 || std::abs(v - m) > 1e-9)
      throw InvalidInput("config: mesh.params must hold positive integers");
    return m;
  };

  if (cfg.domain.kind == "interval") {
    if (cfg.dim != 1) throw InvalidInput("config: interval domain needs dim 1");
    if (cfg.mesh.kind != "uniform")
      throw InvalidInput("config: interval domain needs a uniform mesh");
    double a = dp.size() > 0 ? dp[0] : 0.0;
    double b = dp.size() > 1 ? dp[1] : 1.0;
    if (dp.size() > 2) throw InvalidInput("config: interval takes [a, b]");
    return std::make_shared<Mesh>(uniform_interval(a, b, mesh_int(0, 64)));
  }
  if (cfg.domain.kind == "rectangle") {
    if (cfg.dim != 2)
      throw InvalidInput("config: rectangle domain needs dim 2");
    if (cfg.mesh.kind != "uniform")
      throw InvalidInput("config: rectangle domain needs a uniform mesh");
    double ax = 0.0, ay = 0.0, bx = 1.0, by = 1.0;
    if (dp.size() == 4) {
      ax = dp[0];
      ay = dp[1];
      bx = dp[2];
      by = dp[3];
    } else if (!dp.empty()) {
      throw InvalidInput("config: rectangle takes [ax, ay, bx, by]");
    }
    int mx = mesh_int(0, 64);
    int my = mesh_int(1, mx);
    return std::make_shared<Mesh>(uniform_rectangle(ax, ay, bx, by, mx, my));
  }
  // disc
  if (cfg.dim != 2) throw InvalidInput("config: disc domain needs dim 2");
  if (cfg.mesh.kind != "rings")
    throw InvalidInput("config: disc domain needs a rings mesh");
  double radius = dp.size() > 0 ? dp[0] : 1.0;
  if (dp.size() > 1) throw InvalidInput("config: disc takes [radius]");
  int rings = mesh_int(0, 25);
  double grading = mp.size() > 1 ? mp[1] : 1.0;
  return std::make_shared<Mesh>(disc_mesh(radius, rings, grading));
}

EvolutionConfig to_evolution_config(const HarnessConfig& cfg) {
  EvolutionModel model;
  if (cfg.model == "pme") {
    model = EvolutionModel::PME;
  } else if (cfg.model == "pme-selfsimilar") {
    model = EvolutionModel::PME_SelfSimilar;
  } else if (cfg.model == "keller-segel") {
    model = EvolutionModel::KellerSegel;
  } else {
    throw InvalidInput("config: model '" + cfg.model +
                       "' is not an evolution model");
  }
  EvolutionConfig ec = default_config(model);
  ec.s = cfg.s;
  ec.sigma = cfg.sigma;
  ec.bc = parse_bc(cfg.bc);
  ec.dt_policy = cfg.dt_policy == "fixed" ? DtPolicy::Fixed : DtPolicy::Adaptive;
  ec.dt_max = cfg.dt_max;
  ec.delta = cfg.delta;
  ec.t_final = cfg.t_final;
  ec.n_rational = cfg.n_rational;
  validate(ec);
  return ec;
}

}  // namespace fraclap
