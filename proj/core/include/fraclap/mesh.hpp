#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace fraclap {

// Conforming simplicial mesh in one or two dimensions. Elements are index
// pairs (segments) in 1D and positively oriented index triples (triangles)
// in 2D; the unused third slot of a segment is -1. Meshes are immutable
// after construction and safe to share across threads.
struct Mesh {
  int dim = 1;
  std::vector<std::array<double, 2>> nodes;  // y is 0 in 1D
  std::vector<std::array<int, 3>> elements;
  std::vector<int> boundary;  // sorted, unique node indices

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int nodes_per_element() const { return dim + 1; }

  // Segment length or twice-signed-area/2 of a triangle. Positive on any
  // mesh that passes check_mesh.
  double element_measure(int e) const;

  double domain_diameter() const;
};

// m+1 equispaced nodes on [a, b], m segments, boundary {0, m}.
Mesh uniform_interval(double a, double b, int m);

// Tensor grid of (mx+1)*(my+1) nodes on [ax,bx] x [ay,by]; every cell is
// split along its lower-left-to-upper-right diagonal, giving 2*mx*my
// triangles.
Mesh uniform_rectangle(double ax, double ay, double bx, double by, int mx,
                       int my);

// Polygonal disc of concentric rings: ring i sits at radius
// radius*(i/n_rings)^grading and carries 6*i nodes, so grading > 1
// concentrates nodes near the centre. 1 + 3*n_rings*(n_rings+1) nodes,
// 6*n_rings^2 triangles; boundary is the outermost ring.
Mesh disc_mesh(double radius, int n_rings, double grading = 1.0);

// Line-oriented ASCII format "meshfmt 1" with 0-based indices; import
// rejects malformed input with a ParseError naming the offending line.
void export_mesh(const Mesh& m, std::ostream& out);
Mesh import_mesh(std::istream& in);
void save_mesh(const Mesh& m, const std::string& path);
Mesh load_mesh(const std::string& path);

// Verifies the structural invariants: index ranges, distinct vertices,
// positive measures, sorted boundary list, pairwise node separation of at
// least 1e-12 times the domain diameter. Throws InvalidInput.
void check_mesh(const Mesh& m);

}  // namespace fraclap
