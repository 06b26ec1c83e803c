#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fsilab/errors.hpp"
#include "fsilab/mesh.hpp"

using namespace fsilab;

TEST(Mesh, AnnulusIsValid) {
  const Mesh m = generate_annulus(1.0, 2.0, 8, 48);
  const auto q = mesh_quality(m);
  EXPECT_TRUE(q.valid()) << (q.violations.empty() ? "" : q.violations.front());
  EXPECT_GT(q.min_angle_deg, 20.0);
  EXPECT_EQ(m.vertices.size(), 9u * 48u);
  EXPECT_EQ(m.triangles.size(), 2u * 8u * 48u);
}

TEST(Mesh, AreaConvergesQuadratically) {
  double prev = 0.0, prev_h = 0.0;
  for (int k : {1, 2, 4}) {
    const Mesh m = generate_annulus(1.0, 2.0, 4 * k, 24 * k);
    const auto q = mesh_quality(m);
    EXPECT_LT(q.area_defect, 2.0 * m.h_max * m.h_max);
    if (prev > 0.0) {
      const double rate = std::log(prev / q.area_defect) / std::log(prev_h / m.h_max);
      EXPECT_GT(rate, 1.8);
    }
    prev = q.area_defect;
    prev_h = m.h_max;
  }
}

TEST(Mesh, BoundaryLengthsApproachCircumference) {
  const Mesh m = generate_annulus(0.5, 3.0, 16, 96);
  const auto q = mesh_quality(m);
  EXPECT_NEAR(q.outer_length, 2 * std::numbers::pi * 3.0, 0.01);
  EXPECT_NEAR(q.body_length, 2 * std::numbers::pi * 0.5, 0.002);
}

TEST(Mesh, RejectsBadRadii) {
  EXPECT_THROW(generate_annulus(2.0, 1.0, 4, 16), GeometryError);
  EXPECT_THROW(generate_annulus(1.0, 1.0, 4, 16), GeometryError);
  EXPECT_THROW(generate_annulus(-1.0, 1.0, 4, 16), GeometryError);
}

TEST(Mesh, RoundTrip) {
  const Mesh m = generate_annulus(1.0, 2.0, 3, 12);
  std::stringstream ss;
  write_mesh(ss, m);
  const Mesh r = read_mesh(ss);
  ASSERT_EQ(r.vertices.size(), m.vertices.size());
  ASSERT_EQ(r.triangles, m.triangles);
  ASSERT_EQ(r.boundary_edges.size(), m.boundary_edges.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(r.vertices[i], m.vertices[i]);
  EXPECT_TRUE(check_mesh(r).empty());
  EXPECT_DOUBLE_EQ(r.r_inner, 1.0);
}

TEST(Mesh, DetectsInvertedTriangle) {
  Mesh m = generate_annulus(1.0, 2.0, 3, 12);
  std::swap(m.triangles[5][1], m.triangles[5][2]);
  EXPECT_FALSE(check_mesh(m).empty());
}

TEST(Mesh, DetectsUntaggedBoundary) {
  Mesh m = generate_annulus(1.0, 2.0, 3, 12);
  m.boundary_edges.pop_back();
  const auto v = check_mesh(m);
  EXPECT_FALSE(v.empty());
}
