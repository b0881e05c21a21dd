#pragma once

#include <Eigen/SparseCore>
#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "fraclap/mesh.hpp"

namespace fraclap {

// Row-major so the stored layout is compressed-row (row offsets, sorted
// column indices, values), matching the on-disk debug format.
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Scalar field sampled at coordinates; the second argument is 0 on 1D meshes.
using ScalarField = std::function<double(double, double)>;

enum class BC { Dirichlet, Neumann };

// P1 system on a mesh. M and S are reduced to the free nodes: all nodes for
// Neumann, interior nodes for Dirichlet (boundary rows and columns
// eliminated, which keeps both matrices symmetric and M positive definite).
struct FemSystem {
  std::shared_ptr<const Mesh> mesh;
  BC bc = BC::Neumann;
  SpMat M;
  SpMat S;
  std::vector<int> free_nodes;    // reduced index -> mesh node
  std::vector<int> node_to_free;  // mesh node -> reduced index, -1 if fixed
  Vec integ_phi;                  // per mesh node, ∫ φ_i over the domain

  int num_free() const { return static_cast<int>(free_nodes.size()); }
};

FemSystem assemble(std::shared_ptr<const Mesh> mesh, BC bc);
FemSystem assemble(const Mesh& mesh, BC bc);  // copies the mesh
std::shared_ptr<const FemSystem> assemble_shared(
    std::shared_ptr<const Mesh> mesh, BC bc);

using SystemPtr = std::shared_ptr<const FemSystem>;

// Coefficients over the free nodes of `system`; u_h = Σ V_i φ_i with V = 0
// at eliminated Dirichlet nodes. Shares ownership of the system, so the
// function stays valid after the assembling scope exits.
struct FeFunction {
  SystemPtr system;
  Vec coeffs;

  double value_at_node(int mesh_node) const {
    int f = system->node_to_free[mesh_node];
    return f < 0 ? 0.0 : coeffs[f];
  }
};

FeFunction zero_function(SystemPtr system);
FeFunction interpolate(SystemPtr system, const ScalarField& f);
// L2 projection: solves M V = load_vector(f).
FeFunction project_l2(SystemPtr system, const ScalarField& f);

// b_i = ∫ f φ_i over free nodes, with a quadrature exact for quadratic f
// (Simpson on segments, the three-midpoint rule on triangles).
Vec load_vector(const FemSystem& system, const ScalarField& f);

// Same functional with a degree-4-exact rule, for smooth weights such as
// |x|^2 in moment diagnostics.
Vec load_vector_deg4(const FemSystem& system, const ScalarField& f);

double l2_norm(const FeFunction& u);       // sqrt(V' M V)
double h1_seminorm(const FeFunction& u);   // sqrt(V' S V)
double linf_norm(const FeFunction& u);     // max |V_i| over all mesh nodes

// ∫ u_h over the domain (exact: linear integrand).
double integral(const FeFunction& u);

// sqrt(∫ (u_h - ref)^2) with an element quadrature exact for quartics.
double l2_error_against(const FeFunction& u, const ScalarField& ref);

// Point location by uniform binning of element bounding boxes. Returns the
// containing element and barycentric coordinates, or -1 when the point lies
// outside every element (up to a relative tolerance at facets).
class MeshLocator {
 public:
  explicit MeshLocator(const Mesh& mesh);
  int locate(double x, double y, std::array<double, 3>& bary) const;

 private:
  const Mesh* mesh_;
  double lo_[2], cell_[2];
  int nx_, ny_;
  std::vector<std::vector<int>> bins_;
};

// u_h(x, y) via a locator built on u's own mesh. Throws InvalidInput when
// the point lies outside the mesh.
double eval_at(const FeFunction& u, const MeshLocator& locator, double x,
               double y);

// Debug export, one "row col value" line per stored entry.
void export_matrix(const SpMat& A, std::ostream& out);

}  // namespace fraclap
