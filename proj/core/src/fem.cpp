#include "fraclap/fem.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "fraclap/errors.hpp"

namespace fraclap {

namespace {

// Reference-element quadrature in barycentric coordinates. Weights sum to 1
// and multiply the element measure.
struct QuadPoint {
  double b[3];
  double w;
};

// Segment rules: Simpson (exact to degree 3) and 3-point Gauss (degree 5).
constexpr QuadPoint kSimpson[3] = {
    {{1.0, 0.0, 0.0}, 1.0 / 6.0},
    {{0.5, 0.5, 0.0}, 4.0 / 6.0},
    {{0.0, 1.0, 0.0}, 1.0 / 6.0},
};
const QuadPoint kGauss3[3] = {
    {{0.5 + std::sqrt(0.15), 0.5 - std::sqrt(0.15), 0.0}, 5.0 / 18.0},
    {{0.5, 0.5, 0.0}, 8.0 / 18.0},
    {{0.5 - std::sqrt(0.15), 0.5 + std::sqrt(0.15), 0.0}, 5.0 / 18.0},
};

// Triangle rules: edge midpoints (exact to degree 2) and the 6-point
// degree-4 rule.
constexpr QuadPoint kMidpoint3[3] = {
    {{0.5, 0.5, 0.0}, 1.0 / 3.0},
    {{0.0, 0.5, 0.5}, 1.0 / 3.0},
    {{0.5, 0.0, 0.5}, 1.0 / 3.0},
};
constexpr double kTriA = 0.445948490915965;
constexpr double kTriB = 0.091576213509771;
constexpr double kTriWA = 0.223381589678011;
constexpr double kTriWB = 0.109951743655322;
constexpr QuadPoint kTri6[6] = {
    {{1 - 2 * kTriA, kTriA, kTriA}, kTriWA},
    {{kTriA, 1 - 2 * kTriA, kTriA}, kTriWA},
    {{kTriA, kTriA, 1 - 2 * kTriA}, kTriWA},
    {{1 - 2 * kTriB, kTriB, kTriB}, kTriWB},
    {{kTriB, 1 - 2 * kTriB, kTriB}, kTriWB},
    {{kTriB, kTriB, 1 - 2 * kTriB}, kTriWB},
};

struct ElementGeometry {
  int nv;
  const int* v;
  double meas;
  double gx[3], gy[3];  // barycentric gradients, zero-padded in 1D
  double px[3], py[3];  // vertex coordinates
};

ElementGeometry element_geometry(const Mesh& mesh, int e) {
  ElementGeometry g;
  const auto& el = mesh.elements[e];
  g.nv = mesh.nodes_per_element();
  g.v = el.data();
  for (int i = 0; i < g.nv; ++i) {
    g.px[i] = mesh.nodes[el[i]][0];
    g.py[i] = mesh.nodes[el[i]][1];
  }
  if (mesh.dim == 1) {
    double h = g.px[1] - g.px[0];
    g.meas = std::abs(h);
    g.gx[0] = -1.0 / h;
    g.gx[1] = 1.0 / h;
    g.gx[2] = 0;
    g.gy[0] = g.gy[1] = g.gy[2] = 0;
  } else {
    double det = (g.px[1] - g.px[0]) * (g.py[2] - g.py[0]) -
                 (g.py[1] - g.py[0]) * (g.px[2] - g.px[0]);
    g.meas = 0.5 * det;
    for (int i = 0; i < 3; ++i) {
      int j = (i + 1) % 3, k = (i + 2) % 3;
      g.gx[i] = (g.py[j] - g.py[k]) / det;
      g.gy[i] = (g.px[k] - g.px[j]) / det;
    }
  }
  if (!(g.meas > 0) || !std::isfinite(g.meas)) {
    throw NumericError("assemble: degenerate element " + std::to_string(e));
  }
  return g;
}

const QuadPoint* quad_rule(int dim, int degree4, int& count) {
  if (dim == 1) {
    count = 3;
    return degree4 ? kGauss3 : kSimpson;
  }
  count = degree4 ? 6 : 3;
  return degree4 ? kTri6 : kMidpoint3;
}

double sample_field(const ScalarField& f, double x, double y) {
  double v = f(x, y);
  if (!std::isfinite(v)) {
    throw InvalidInput("field returned a non-finite value");
  }
  return v;
}

Vec assemble_functional(const FemSystem& sys, const ScalarField& f,
                        bool degree4) {
  const Mesh& mesh = *sys.mesh;
  int nq = 0;
  const QuadPoint* rule = quad_rule(mesh.dim, degree4, nq);
  Vec b = Vec::Zero(sys.num_free());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    ElementGeometry g = element_geometry(mesh, e);
    for (int q = 0; q < nq; ++q) {
      double x = 0, y = 0;
      for (int i = 0; i < g.nv; ++i) {
        x += rule[q].b[i] * g.px[i];
        y += rule[q].b[i] * g.py[i];
      }
      double fw = sample_field(f, x, y) * rule[q].w * g.meas;
      for (int i = 0; i < g.nv; ++i) {
        int fi = sys.node_to_free[g.v[i]];
        if (fi >= 0) b[fi] += fw * rule[q].b[i];
      }
    }
  }
  return b;
}

}  // namespace

FemSystem assemble(std::shared_ptr<const Mesh> mesh, BC bc) {
  const Mesh& m = *mesh;
  check_mesh(m);

  FemSystem sys;
  sys.mesh = std::move(mesh);
  sys.bc = bc;
  sys.node_to_free.assign(m.num_nodes(), -1);
  if (bc == BC::Dirichlet) {
    std::vector<char> fixed(m.num_nodes(), 0);
    for (int bnode : m.boundary) fixed[bnode] = 1;
    for (int i = 0; i < m.num_nodes(); ++i) {
      if (!fixed[i]) {
        sys.node_to_free[i] = static_cast<int>(sys.free_nodes.size());
        sys.free_nodes.push_back(i);
      }
    }
  } else {
    sys.free_nodes.resize(m.num_nodes());
    for (int i = 0; i < m.num_nodes(); ++i) {
      sys.free_nodes[i] = i;
      sys.node_to_free[i] = i;
    }
  }
  const int nf = sys.num_free();
  if (nf == 0) throw InvalidInput("assemble: no free nodes");

  std::vector<Eigen::Triplet<double>> tm, ts;
  tm.reserve(9 * m.num_elements());
  ts.reserve(9 * m.num_elements());
  sys.integ_phi = Vec::Zero(m.num_nodes());

  for (int e = 0; e < m.num_elements(); ++e) {
    ElementGeometry g = element_geometry(m, e);
    const int nv = g.nv;
    // Exact P1 element integrals: mass (measure/12)*(1+δij) scaled per
    // dimension, stiffness measure * ∇λ_i · ∇λ_j.
    double mass_off = g.meas / (nv == 2 ? 6.0 : 12.0);
    double mass_diag = 2.0 * mass_off;
    for (int i = 0; i < nv; ++i) {
      sys.integ_phi[g.v[i]] += g.meas / nv;
      int fi = sys.node_to_free[g.v[i]];
      if (fi < 0) continue;
      for (int j = 0; j < nv; ++j) {
        int fj = sys.node_to_free[g.v[j]];
        if (fj < 0) continue;
        tm.emplace_back(fi, fj, i == j ? mass_diag : mass_off);
        ts.emplace_back(fi, fj,
                        g.meas * (g.gx[i] * g.gx[j] + g.gy[i] * g.gy[j]));
      }
    }
  }
  sys.M.resize(nf, nf);
  sys.S.resize(nf, nf);
  sys.M.setFromTriplets(tm.begin(), tm.end());
  sys.S.setFromTriplets(ts.begin(), ts.end());
  sys.M.makeCompressed();
  sys.S.makeCompressed();
  return sys;
}

FemSystem assemble(const Mesh& mesh, BC bc) {
  return assemble(std::make_shared<const Mesh>(mesh), bc);
}

std::shared_ptr<const FemSystem> assemble_shared(
    std::shared_ptr<const Mesh> mesh, BC bc) {
  return std::make_shared<const FemSystem>(assemble(std::move(mesh), bc));
}

FeFunction zero_function(SystemPtr system) {
  Vec z = Vec::Zero(system->num_free());
  return FeFunction{std::move(system), std::move(z)};
}

FeFunction interpolate(SystemPtr system, const ScalarField& f) {
  Vec v(system->num_free());
  for (int i = 0; i < system->num_free(); ++i) {
    const auto& p = system->mesh->nodes[system->free_nodes[i]];
    v[i] = sample_field(f, p[0], p[1]);
  }
  return FeFunction{std::move(system), std::move(v)};
}

FeFunction project_l2(SystemPtr system, const ScalarField& f) {
  Vec b = load_vector(*system, f);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(
      Eigen::SparseMatrix<double>(system->M));
  if (solver.info() != Eigen::Success) {
    throw NumericError("project_l2: mass factorization failed");
  }
  Vec v = solver.solve(b);
  return FeFunction{std::move(system), std::move(v)};
}

Vec load_vector(const FemSystem& system, const ScalarField& f) {
  return assemble_functional(system, f, false);
}

Vec load_vector_deg4(const FemSystem& system, const ScalarField& f) {
  return assemble_functional(system, f, true);
}

double l2_norm(const FeFunction& u) {
  return std::sqrt(std::max(0.0, u.coeffs.dot(u.system->M * u.coeffs)));
}

double h1_seminorm(const FeFunction& u) {
  return std::sqrt(std::max(0.0, u.coeffs.dot(u.system->S * u.coeffs)));
}

double linf_norm(const FeFunction& u) {
  double m = 0;
  for (int i = 0; i < u.coeffs.size(); ++i) {
    m = std::max(m, std::abs(u.coeffs[i]));
  }
  // Eliminated Dirichlet nodes hold the value 0 and cannot raise the max.
  return m;
}

double integral(const FeFunction& u) {
  double s = 0;
  const FemSystem& sys = *u.system;
  for (int i = 0; i < sys.num_free(); ++i) {
    s += u.coeffs[i] * sys.integ_phi[sys.free_nodes[i]];
  }
  return s;
}

double l2_error_against(const FeFunction& u, const ScalarField& ref) {
  const FemSystem& sys = *u.system;
  const Mesh& mesh = *sys.mesh;
  int nq = 0;
  const QuadPoint* rule = quad_rule(mesh.dim, true, nq);
  double acc = 0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    ElementGeometry g = element_geometry(mesh, e);
    double uv[3] = {0, 0, 0};
    for (int i = 0; i < g.nv; ++i) uv[i] = u.value_at_node(g.v[i]);
    for (int q = 0; q < nq; ++q) {
      double x = 0, y = 0, uh = 0;
      for (int i = 0; i < g.nv; ++i) {
        x += rule[q].b[i] * g.px[i];
        y += rule[q].b[i] * g.py[i];
        uh += rule[q].b[i] * uv[i];
      }
      double d = uh - sample_field(ref, x, y);
      acc += rule[q].w * g.meas * d * d;
    }
  }
  return std::sqrt(std::max(0.0, acc));
}

MeshLocator::MeshLocator(const Mesh& mesh) : mesh_(&mesh) {
  double hi[2] = {std::numeric_limits<double>::lowest(),
                  std::numeric_limits<double>::lowest()};
  lo_[0] = lo_[1] = std::numeric_limits<double>::max();
  for (const auto& p : mesh.nodes) {
    for (int d = 0; d < 2; ++d) {
      lo_[d] = std::min(lo_[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }
  int target = std::max(1, static_cast<int>(std::sqrt(
                               static_cast<double>(mesh.num_elements()))));
  nx_ = target;
  ny_ = mesh.dim == 1 ? 1 : target;
  for (int d = 0; d < 2; ++d) {
    double span = hi[d] - lo_[d];
    cell_[d] = (span > 0 ? span : 1.0) / (d == 0 ? nx_ : ny_);
  }
  bins_.resize(static_cast<size_t>(nx_) * ny_);
  auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
  for (int e = 0; e < mesh.num_elements(); ++e) {
    double exlo = std::numeric_limits<double>::max(), exhi = -exlo;
    double eylo = exlo, eyhi = -exlo;
    for (int i = 0; i < mesh.nodes_per_element(); ++i) {
      const auto& p = mesh.nodes[mesh.elements[e][i]];
      exlo = std::min(exlo, p[0]);
      exhi = std::max(exhi, p[0]);
      eylo = std::min(eylo, p[1]);
      eyhi = std::max(eyhi, p[1]);
    }
    int i0 = clampi(static_cast<int>((exlo - lo_[0]) / cell_[0]), nx_);
    int i1 = clampi(static_cast<int>((exhi - lo_[0]) / cell_[0]), nx_);
    int j0 = clampi(static_cast<int>((eylo - lo_[1]) / cell_[1]), ny_);
    int j1 = clampi(static_cast<int>((eyhi - lo_[1]) / cell_[1]), ny_);
    if (mesh.dim == 1) j0 = j1 = 0;
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        bins_[static_cast<size_t>(j) * nx_ + i].push_back(e);
      }
    }
  }
}

int MeshLocator::locate(double x, double y, std::array<double, 3>& bary) const {
  const Mesh& mesh = *mesh_;
  auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
  int bi = clampi(static_cast<int>((x - lo_[0]) / cell_[0]), nx_);
  int bj = mesh.dim == 1
               ? 0
               : clampi(static_cast<int>((y - lo_[1]) / cell_[1]), ny_);
  const double tol = 1e-9;
  // The straddling of bin edges by query points is absorbed by scanning the
  // 3x3 bin neighbourhood.
  for (int dj = 0; dj <= 2; ++dj) {
    for (int di = 0; di <= 2; ++di) {
      int i = bi + di - 1, j = bj + dj - 1;
      if (i < 0 || i >= nx_ || j < 0 || j >= ny_) continue;
      for (int e : bins_[static_cast<size_t>(j) * nx_ + i]) {
        const auto& el = mesh.elements[e];
        if (mesh.dim == 1) {
          double x0 = mesh.nodes[el[0]][0], x1 = mesh.nodes[el[1]][0];
          double h = x1 - x0;
          double t = (x - x0) / h;
          if (t >= -tol && t <= 1 + tol) {
            bary = {1 - t, t, 0};
            return e;
          }
        } else {
          const auto& a = mesh.nodes[el[0]];
          const auto& b = mesh.nodes[el[1]];
          const auto& c = mesh.nodes[el[2]];
          double det = (b[0] - a[0]) * (c[1] - a[1]) -
                       (b[1] - a[1]) * (c[0] - a[0]);
          double l1 = ((x - a[0]) * (c[1] - a[1]) -
                       (y - a[1]) * (c[0] - a[0])) /
                      det;
          double l2 = ((b[0] - a[0]) * (y - a[1]) -
                       (b[1] - a[1]) * (x - a[0])) /
                      det;
          double l0 = 1 - l1 - l2;
          if (l0 >= -tol && l1 >= -tol && l2 >= -tol) {
            bary = {l0, l1, l2};
            return e;
          }
        }
      }
    }
  }
  return -1;
}

double eval_at(const FeFunction& u, const MeshLocator& locator, double x,
               double y) {
  std::array<double, 3> bary;
  int e = locator.locate(x, y, bary);
  if (e < 0) {
    throw InvalidInput("eval_at: point outside the mesh");
  }
  const Mesh& mesh = *u.system->mesh;
  double v = 0;
  for (int i = 0; i < mesh.nodes_per_element(); ++i) {
    v += bary[i] * u.value_at_node(mesh.elements[e][i]);
  }
  return v;
}

void export_matrix(const SpMat& A, std::ostream& out) {
  char buf[64];
  for (int r = 0; r < A.outerSize(); ++r) {
    for (SpMat::InnerIterator it(A, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", static_cast<int>(it.row()),
                    static_cast<int>(it.col()), it.value());
      out << buf;
    }
  }
}

}  // namespace fraclap
