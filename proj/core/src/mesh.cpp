#include "fraclap/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "fraclap/errors.hpp"

namespace fraclap {

double Mesh::element_measure(int e) const {
  const auto& el = elements[e];
  if (dim == 1) {
    return std::abs(nodes[el[1]][0] - nodes[el[0]][0]);
  }
  const auto& a = nodes[el[0]];
  const auto& b = nodes[el[1]];
  const auto& c = nodes[el[2]];
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
}

double Mesh::domain_diameter() const {
  double lo[2] = {std::numeric_limits<double>::max(),
                  std::numeric_limits<double>::max()};
  double hi[2] = {std::numeric_limits<double>::lowest(),
                  std::numeric_limits<double>::lowest()};
  for (const auto& p : nodes) {
    for (int d = 0; d < 2; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }
  return std::hypot(hi[0] - lo[0], hi[1] - lo[1]);
}

Mesh uniform_interval(double a, double b, int m) {
  if (!(a < b)) throw InvalidInput("uniform_interval: requires a < b");
  if (m < 1) throw InvalidInput("uniform_interval: requires m >= 1");
  Mesh mesh;
  mesh.dim = 1;
  mesh.nodes.resize(m + 1);
  for (int i = 0; i <= m; ++i) {
    mesh.nodes[i] = {a + (b - a) * (double(i) / m), 0.0};
  }
  mesh.nodes[m] = {b, 0.0};
  mesh.elements.resize(m);
  for (int e = 0; e < m; ++e) mesh.elements[e] = {e, e + 1, -1};
  mesh.boundary = {0, m};
  return mesh;
}

Mesh uniform_rectangle(double ax, double ay, double bx, double by, int mx,
                       int my) {
  if (!(ax < bx) || !(ay < by)) {
    throw InvalidInput("uniform_rectangle: requires ax < bx and ay < by");
  }
  if (mx < 1 || my < 1) {
    throw InvalidInput("uniform_rectangle: requires mx, my >= 1");
  }
  Mesh mesh;
  mesh.dim = 2;
  mesh.nodes.resize((mx + 1) * (my + 1));
  for (int j = 0; j <= my; ++j) {
    double y = (j == my) ? by : ay + (by - ay) * (double(j) / my);
    for (int i = 0; i <= mx; ++i) {
      double x = (i == mx) ? bx : ax + (bx - ax) * (double(i) / mx);
      mesh.nodes[j * (mx + 1) + i] = {x, y};
    }
  }
  mesh.elements.reserve(2 * mx * my);
  auto id = [mx](int i, int j) { return j * (mx + 1) + i; };
  for (int j = 0; j < my; ++j) {
    for (int i = 0; i < mx; ++i) {
      // Lower-left-to-upper-right diagonal, both triangles CCW.
      mesh.elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.elements.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  for (int j = 0; j <= my; ++j) {
    for (int i = 0; i <= mx; ++i) {
      if (i == 0 || i == mx || j == 0 || j == my) {
        mesh.boundary.push_back(id(i, j));
      }
    }
  }
  return mesh;
}

Mesh disc_mesh(double radius, int n_rings, double grading) {
  if (!(radius > 0)) throw InvalidInput("disc_mesh: invalid radius");
  if (n_rings < 1) throw InvalidInput("disc_mesh: requires n_rings >= 1");
  if (!(grading >= 1)) throw InvalidInput("disc_mesh: requires grading >= 1");

  Mesh mesh;
  mesh.dim = 2;
  const int n = n_rings;
  mesh.nodes.reserve(1 + 3 * n * (n + 1));
  mesh.nodes.push_back({0.0, 0.0});
  // ring i carries 6*i nodes and starts at node 1 + 3*i*(i-1)
  auto ring_start = [](int i) { return 1 + 3 * i * (i - 1); };
  for (int i = 1; i <= n; ++i) {
    double r = radius * std::pow(double(i) / n, grading);
    int count = 6 * i;
    for (int k = 0; k < count; ++k) {
      double theta = 2.0 * M_PI * k / count;
      mesh.nodes.push_back({r * std::cos(theta), r * std::sin(theta)});
    }
  }

  mesh.elements.reserve(6 * n * n);
  int r1 = ring_start(1);
  for (int k = 0; k < 6; ++k) {
    mesh.elements.push_back({0, r1 + k, r1 + (k + 1) % 6});
  }
  for (int i = 2; i <= n; ++i) {
    const int inner0 = ring_start(i - 1), inner_count = 6 * (i - 1);
    const int outer0 = ring_start(i), outer_count = 6 * i;
    for (int s = 0; s < 6; ++s) {
      // Sector chains share their endpoints with the neighbouring sectors.
      auto inner = [&](int t) {
        return inner0 + (s * (i - 1) + t) % inner_count;
      };
      auto outer = [&](int u) { return outer0 + (s * i + u) % outer_count; };
      auto inner_angle = [&](int t) { return double(s) + double(t) / (i - 1); };
      auto outer_angle = [&](int u) { return double(s) + double(u) / i; };
      int t = 0, u = 0;
      while (t < i - 1 || u < i) {
        bool advance_outer =
            (t == i - 1) ||
            (u < i && outer_angle(u + 1) <= inner_angle(t + 1));
        if (advance_outer) {
          mesh.elements.push_back({outer(u), outer(u + 1), inner(t)});
          ++u;
        } else {
          mesh.elements.push_back({outer(u), inner(t + 1), inner(t)});
          ++t;
        }
      }
    }
  }

  mesh.boundary.resize(6 * n);
  for (int k = 0; k < 6 * n; ++k) mesh.boundary[k] = ring_start(n) + k;
  return mesh;
}

void export_mesh(const Mesh& m, std::ostream& out) {
  out << "meshfmt 1\n";
  out << "dim " << m.dim << "\n";
  out << "nodes " << m.num_nodes() << "\n";
  char buf[80];
  for (const auto& p : m.nodes) {
    if (m.dim == 1) {
      std::snprintf(buf, sizeof buf, "%.17g\n", p[0]);
    } else {
      std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p[0], p[1]);
    }
    out << buf;
  }
  out << "elements " << m.num_elements() << "\n";
  for (const auto& el : m.elements) {
    out << el[0] << " " << el[1];
    if (m.dim == 2) out << " " << el[2];
    out << "\n";
  }
  out << "boundary " << m.boundary.size() << "\n";
  for (int b : m.boundary) out << b << "\n";
}

namespace {

struct LineReader {
  std::istream& in;
  int line_no = 0;

  std::string next(const char* what) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    throw ParseError(std::string("mesh parse error: unexpected end of input, "
                                 "expected ") +
                     what + " after line " + std::to_string(line_no));
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError("mesh parse error at line " + std::to_string(line_no) +
                     ": " + msg);
  }
};

}  // namespace

Mesh import_mesh(std::istream& in) {
  LineReader r{in};
  if (r.next("header") != "meshfmt 1") r.fail("expected header 'meshfmt 1'");

  auto read_count = [&r](const char* key) {
    std::istringstream ss(r.next(key));
    std::string k;
    long long v = -1;
    ss >> k >> v;
    if (k != key || v < 0 || !ss || !(ss >> std::ws).eof()) {
      r.fail(std::string("expected '") + key + " <count>'");
    }
    return static_cast<int>(v);
  };

  Mesh m;
  {
    std::istringstream ss(r.next("dim"));
    std::string k;
    int d = 0;
    ss >> k >> d;
    if (k != "dim" || !ss) r.fail("expected 'dim <1|2>'");
    if (d != 1 && d != 2) r.fail("unsupported dimension " + std::to_string(d));
    m.dim = d;
  }

  const int n_nodes = read_count("nodes");
  m.nodes.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    std::istringstream ss(r.next("node coordinates"));
    double x = 0, y = 0;
    ss >> x;
    if (m.dim == 2) ss >> y;
    if (!ss || !(ss >> std::ws).eof()) r.fail("bad node coordinate line");
    m.nodes[i] = {x, y};
  }

  const int n_elems = read_count("elements");
  m.elements.resize(n_elems);
  for (int e = 0; e < n_elems; ++e) {
    std::istringstream ss(r.next("element indices"));
    std::array<int, 3> el = {-1, -1, -1};
    ss >> el[0] >> el[1];
    if (m.dim == 2) ss >> el[2];
    if (!ss || !(ss >> std::ws).eof()) r.fail("bad element line");
    for (int v = 0; v < m.dim + 1; ++v) {
      if (el[v] < 0 || el[v] >= n_nodes) {
        r.fail("element node index " + std::to_string(el[v]) +
               " out of range [0, " + std::to_string(n_nodes) + ")");
      }
    }
    m.elements[e] = el;
  }

  const int n_bdry = read_count("boundary");
  m.boundary.resize(n_bdry);
  for (int i = 0; i < n_bdry; ++i) {
    std::istringstream ss(r.next("boundary index"));
    int b = -1;
    ss >> b;
    if (!ss || !(ss >> std::ws).eof()) r.fail("bad boundary line");
    if (b < 0 || b >= n_nodes) {
      r.fail("boundary node index " + std::to_string(b) + " out of range");
    }
    m.boundary[i] = b;
  }

  // A section count that undershoots the data leaves lines behind; treat any
  // leftover content as a corrupt file rather than silently dropping it.
  {
    std::string line;
    while (std::getline(in, line)) {
      ++r.line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) r.fail("trailing content after boundary section");
    }
  }

  // Orientation fix before validation: imported triangles may be CW.
  if (m.dim == 2) {
    for (int e = 0; e < m.num_elements(); ++e) {
      if (m.element_measure(e) < 0) std::swap(m.elements[e][1], m.elements[e][2]);
    }
  }
  check_mesh(m);
  return m;
}

void save_mesh(const Mesh& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open mesh file for writing: " + path);
  export_mesh(m, out);
  if (!out.flush()) throw InvalidInput("failed writing mesh file: " + path);
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open mesh file: " + path);
  return import_mesh(in);
}

void check_mesh(const Mesh& m) {
  if (m.dim != 1 && m.dim != 2) throw InvalidInput("mesh: dim must be 1 or 2");
  if (m.nodes.empty()) throw InvalidInput("mesh: no nodes");
  const int n = m.num_nodes();
  const int k = m.nodes_per_element();
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto& el = m.elements[e];
    for (int v = 0; v < k; ++v) {
      if (el[v] < 0 || el[v] >= n) {
        throw InvalidInput("mesh: element " + std::to_string(e) +
                           " node index out of range");
      }
      for (int w = v + 1; w < k; ++w) {
        if (el[v] == el[w]) {
          throw InvalidInput("mesh: element " + std::to_string(e) +
                             " repeats a node");
        }
      }
    }
    if (!(m.element_measure(e) > 0)) {
      throw InvalidInput("mesh: element " + std::to_string(e) +
                         " has non-positive measure");
    }
  }
  for (size_t i = 0; i < m.boundary.size(); ++i) {
    if (m.boundary[i] < 0 || m.boundary[i] >= n) {
      throw InvalidInput("mesh: boundary index out of range");
    }
    if (i > 0 && m.boundary[i] <= m.boundary[i - 1]) {
      throw InvalidInput("mesh: boundary list must be sorted and unique");
    }
  }

  // Pairwise separation >= 1e-12 * diameter, via a quantized spatial hash so
  // only near-coincident nodes ever share a probe neighbourhood.
  const double min_sep = 1e-12 * m.domain_diameter();
  if (min_sep > 0) {
    auto key = [](std::int64_t qx, std::int64_t qy) {
      return (static_cast<std::uint64_t>(qx) * 0x9e3779b97f4a7c15ULL) ^
             static_cast<std::uint64_t>(qy);
    };
    std::unordered_map<std::uint64_t, std::vector<int>> cells;
    cells.reserve(m.nodes.size() * 2);
    for (int i = 0; i < n; ++i) {
      const auto& p = m.nodes[i];
      auto qx = static_cast<std::int64_t>(std::floor(p[0] / min_sep));
      auto qy = static_cast<std::int64_t>(std::floor(p[1] / min_sep));
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          auto it = cells.find(key(qx + dx, qy + dy));
          if (it == cells.end()) continue;
          for (int j : it->second) {
            if (std::hypot(p[0] - m.nodes[j][0], p[1] - m.nodes[j][1]) <
                min_sep) {
              throw InvalidInput("mesh: nodes " + std::to_string(j) + " and " +
                                 std::to_string(i) + " nearly coincide");
            }
          }
        }
      }
      cells[key(qx, qy)].push_back(i);
    }
  }
}

}  // namespace fraclap
