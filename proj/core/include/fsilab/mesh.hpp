#pragma once

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace fsilab {

using Vec2 = Eigen::Vector2d;

enum class BoundaryTag { Outer = 1, Body = 2 };

const char* tag_name(BoundaryTag tag);

// Boundary edge oriented so the fluid lies on its left; outward normal is (t_y, -t_x).
struct BoundaryEdge {
  int a = 0;
  int b = 0;
  BoundaryTag tag = BoundaryTag::Outer;
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<BoundaryEdge> boundary_edges;
  double h_max = 0.0;
  double r_inner = 0.0;
  double r_outer = 0.0;
  double alpha = 0.0;  // r_outer - r_inner for the concentric default
  int n_radial = 0;
  int n_angular = 0;

  double signed_area(int t) const;
  double exact_area() const;
};

// Structured polar triangulation, geometric radial spacing so cells stay close to square.
Mesh generate_annulus(double r_inner, double r_outer, int n_radial, int n_angular);

struct QualityReport {
  double min_angle_deg = 0.0;
  double h_max = 0.0;
  double area = 0.0;
  double exact_area = 0.0;
  double area_defect = 0.0;
  double outer_length = 0.0;
  double body_length = 0.0;
  std::vector<std::string> violations;
  bool valid() const { return violations.empty(); }
};

QualityReport mesh_quality(const Mesh& mesh);

// Every invariant violation found, empty if the mesh is valid.
std::vector<std::string> check_mesh(const Mesh& mesh);

// Sections "# vertices", "# triangles", "# boundary"; rows are whitespace separated:
//   vertices:  x y
//   triangles: i j k
//   boundary:  a b tag   (tag is OUTER or BODY)
// A leading "# annulus r_inner r_outer n_radial n_angular" line records the generator input.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

}  // namespace fsilab
