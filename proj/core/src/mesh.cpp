#include "fsilab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "fsilab/errors.hpp"

namespace fsilab {

const char* tag_name(BoundaryTag tag) { return tag == BoundaryTag::Body ? "BODY" : "OUTER"; }

double Mesh::signed_area(int t) const {
  const auto& tri = triangles[t];
  const Vec2 e1 = vertices[tri[1]] - vertices[tri[0]];
  const Vec2 e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

double Mesh::exact_area() const {
  return std::numbers::pi * (r_outer * r_outer - r_inner * r_inner);
}

Mesh generate_annulus(double r_inner, double r_outer, int n_radial, int n_angular) {
  if (!(r_inner > 0.0) || !(r_outer > 0.0)) {
    throw GeometryError("annulus radii must be positive");
  }
  if (!(r_inner < r_outer)) {
    throw GeometryError("annulus requires r_inner < r_outer (got r_inner=" + std::to_string(r_inner) +
                        ", r_outer=" + std::to_string(r_outer) + ")");
  }
  if (n_radial < 2) throw GeometryError("n_radial must be at least 2");
  if (n_angular < 8) throw GeometryError("n_angular must be at least 8");

  Mesh m;
  m.r_inner = r_inner;
  m.r_outer = r_outer;
  m.alpha = r_outer - r_inner;
  m.n_radial = n_radial;
  m.n_angular = n_angular;

  const double ratio = r_outer / r_inner;
  m.vertices.reserve(static_cast<std::size_t>((n_radial + 1) * n_angular));
  for (int k = 0; k <= n_radial; ++k) {
    double r = r_inner * std::pow(ratio, static_cast<double>(k) / n_radial);
    if (k == n_radial) r = r_outer;
    for (int j = 0; j < n_angular; ++j) {
      const double th = 2.0 * std::numbers::pi * j / n_angular;
      m.vertices.emplace_back(r * std::cos(th), r * std::sin(th));
    }
  }
  auto vid = [n_angular](int k, int j) { return k * n_angular + ((j % n_angular) + n_angular) % n_angular; };

  m.triangles.reserve(static_cast<std::size_t>(2 * n_radial * n_angular));
  for (int k = 0; k < n_radial; ++k) {
    for (int j = 0; j < n_angular; ++j) {
      const int v00 = vid(k, j), v10 = vid(k + 1, j), v11 = vid(k + 1, j + 1), v01 = vid(k, j + 1);
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }
  }
  for (int j = 0; j < n_angular; ++j) {
    m.boundary_edges.push_back({vid(0, j + 1), vid(0, j), BoundaryTag::Body});
  }
  for (int j = 0; j < n_angular; ++j) {
    m.boundary_edges.push_back({vid(n_radial, j), vid(n_radial, j + 1), BoundaryTag::Outer});
  }

  double h = 0.0;
  for (const auto& t : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      h = std::max(h, (m.vertices[t[e]] - m.vertices[t[(e + 1) % 3]]).norm());
    }
  }
  m.h_max = h;
  return m;
}

namespace {

using EdgeKey = std::pair<int, int>;
EdgeKey key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

double loop_length(const Mesh& mesh, BoundaryTag tag) {
  double len = 0.0;
  for (const auto& e : mesh.boundary_edges) {
    if (e.tag == tag) len += (mesh.vertices[e.b] - mesh.vertices[e.a]).norm();
  }
  return len;
}

// Number of closed loops formed by the edges of one tag, or -1 if they do not form loops.
int count_loops(const Mesh& mesh, BoundaryTag tag) {
  std::map<int, int> next;
  std::map<int, int> indeg;
  for (const auto& e : mesh.boundary_edges) {
    if (e.tag != tag) continue;
    if (next.count(e.a)) return -1;
    next[e.a] = e.b;
    indeg[e.b]++;
  }
  if (next.empty()) return 0;
  for (const auto& [v, d] : indeg) {
    if (d != 1 || !next.count(v)) return -1;
  }
  std::set<int> seen;
  int loops = 0;
  for (const auto& [start, _] : next) {
    if (seen.count(start)) continue;
    int v = start;
    do {
      seen.insert(v);
      v = next[v];
    } while (v != start && !seen.count(v));
    if (v != start) return -1;
    ++loops;
  }
  return loops;
}

}  // namespace

std::vector<std::string> check_mesh(const Mesh& mesh) {
  std::vector<std::string> out;
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int v : mesh.triangles[t]) {
      if (v < 0 || v >= nv) {
        out.push_back("triangle " + std::to_string(t) + " references missing vertex " + std::to_string(v));
        return out;
      }
    }
    const double a = mesh.signed_area(static_cast<int>(t));
    if (!(a > 0.0)) {
      std::ostringstream ss;
      ss << "triangle " << t << " has non-positive signed area " << a;
      out.push_back(ss.str());
    }
  }

  std::map<EdgeKey, int> edge_count;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) edge_count[key(t[e], t[(e + 1) % 3])]++;
  }
  std::set<EdgeKey> boundary;
  for (const auto& e : mesh.boundary_edges) boundary.insert(key(e.a, e.b));
  for (const auto& [k, c] : edge_count) {
    if (c > 2) {
      out.push_back("edge (" + std::to_string(k.first) + "," + std::to_string(k.second) + ") shared by " +
                    std::to_string(c) + " triangles");
    } else if (c == 1 && !boundary.count(k)) {
      out.push_back("edge (" + std::to_string(k.first) + "," + std::to_string(k.second) +
                    ") lies on one triangle but is not tagged as boundary");
    }
  }
  for (const auto& k : boundary) {
    auto it = edge_count.find(k);
    if (it == edge_count.end() || it->second != 1) {
      out.push_back("boundary edge (" + std::to_string(k.first) + "," + std::to_string(k.second) +
                    ") is not a free triangle edge");
    }
  }

  for (BoundaryTag tag : {BoundaryTag::Outer, BoundaryTag::Body}) {
    const int loops = count_loops(mesh, tag);
    if (loops != 1) {
      out.push_back(std::string(tag_name(tag)) + " edges form " +
                    (loops < 0 ? std::string("no closed loop") : std::to_string(loops) + " loops"));
    }
  }

  const double tol = mesh.h_max * mesh.h_max;
  for (int v = 0; v < nv; ++v) {
    const double r = mesh.vertices[v].norm();
    if (r < mesh.r_inner - tol || r > mesh.r_outer + tol) {
      std::ostringstream ss;
      ss << "vertex " << v << " at radius " << r << " lies outside the annulus";
      out.push_back(ss.str());
    }
  }
  return out;
}

QualityReport mesh_quality(const Mesh& mesh) {
  QualityReport q;
  q.violations = check_mesh(mesh);
  q.min_angle_deg = 180.0;
  double h = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    q.area += mesh.signed_area(static_cast<int>(t));
    for (int i = 0; i < 3; ++i) {
      const Vec2& p = mesh.vertices[tri[i]];
      const Vec2 u = mesh.vertices[tri[(i + 1) % 3]] - p;
      const Vec2 w = mesh.vertices[tri[(i + 2) % 3]] - p;
      h = std::max(h, u.norm());
      const double c = std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0);
      q.min_angle_deg = std::min(q.min_angle_deg, std::acos(c) * 180.0 / std::numbers::pi);
    }
  }
  q.h_max = h;
  q.exact_area = mesh.exact_area();
  q.area_defect = std::abs(q.exact_area - q.area);
  q.outer_length = loop_length(mesh, BoundaryTag::Outer);
  q.body_length = loop_length(mesh, BoundaryTag::Body);
  return q;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os.precision(17);
  os << "# annulus " << mesh.r_inner << ' ' << mesh.r_outer << ' ' << mesh.n_radial << ' ' << mesh.n_angular
     << '\n';
  os << "# vertices " << mesh.vertices.size() << '\n';
  for (const auto& v : mesh.vertices) os << v.x() << ' ' << v.y() << '\n';
  os << "# triangles " << mesh.triangles.size() << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "# boundary " << mesh.boundary_edges.size() << '\n';
  for (const auto& e : mesh.boundary_edges) os << e.a << ' ' << e.b << ' ' << tag_name(e.tag) << '\n';
}

Mesh read_mesh(std::istream& is) {
  Mesh m;
  std::string line;
  enum { None, Vertices, Triangles, Boundary } section = None;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string hash, name;
      ss >> hash >> name;
      if (name == "annulus") {
        ss >> m.r_inner >> m.r_outer >> m.n_radial >> m.n_angular;
        m.alpha = m.r_outer - m.r_inner;
      } else if (name == "vertices") {
        section = Vertices;
      } else if (name == "triangles") {
        section = Triangles;
      } else if (name == "boundary") {
        section = Boundary;
      } else {
        throw GeometryError("unknown mesh section '" + name + "'");
      }
      continue;
    }
    switch (section) {
      case Vertices: {
        double x, y;
        if (!(ss >> x >> y)) throw GeometryError("bad vertex row: " + line);
        m.vertices.emplace_back(x, y);
        break;
      }
      case Triangles: {
        std::array<int, 3> t{};
        if (!(ss >> t[0] >> t[1] >> t[2])) throw GeometryError("bad triangle row: " + line);
        m.triangles.push_back(t);
        break;
      }
      case Boundary: {
        BoundaryEdge e;
        std::string tag;
        if (!(ss >> e.a >> e.b >> tag)) throw GeometryError("bad boundary row: " + line);
        if (tag == "OUTER") {
          e.tag = BoundaryTag::Outer;
        } else if (tag == "BODY") {
          e.tag = BoundaryTag::Body;
        } else {
          throw GeometryError("unknown boundary tag '" + tag + "'");
        }
        m.boundary_edges.push_back(e);
        break;
      }
      case None:
        throw GeometryError("data row before any section header");
    }
  }
  double h = 0.0;
  for (const auto& t : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      if (a >= 0 && b >= 0 && a < static_cast<int>(m.vertices.size()) && b < static_cast<int>(m.vertices.size())) {
        h = std::max(h, (m.vertices[a] - m.vertices[b]).norm());
      }
    }
  }
  m.h_max = h;
  return m;
}

}  // namespace fsilab
