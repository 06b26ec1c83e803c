#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fsilab/errors.hpp"
#include "fsilab/fem.hpp"

using namespace fsilab;

namespace {

std::shared_ptr<const FormSet> forms_for(double ri, double ro, int nr, int na, double nu = 1.0) {
  auto mesh = std::make_shared<Mesh>(generate_annulus(ri, ro, nr, na));
  return assemble_forms(build_spaces(mesh), nu);
}

double mesh_area(const SpacePair& s) { return s.total_area(); }

}  // namespace

TEST(Quadrature, IntegratesQuarticsExactly) {
  // int over reference triangle of l0^a l1^b l2^c = 2 a! b! c! / (a+b+c+2)! times area 1/2
  const auto& p = TriangleRule::points();
  const auto& w = TriangleRule::weights();
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < TriangleRule::n; ++k) {
    s += w[k] * std::pow(p[k][0], 2) * std::pow(p[k][1], 2);
    s2 += w[k] * std::pow(p[k][0], 4);
  }
  EXPECT_NEAR(s, 2.0 * 2 * 2 / 720.0, 1e-12);
  EXPECT_NEAR(s2, 2.0 * 24 / 720.0, 1e-12);
}

TEST(Spaces, DofCounts) {
  auto mesh = std::make_shared<Mesh>(generate_annulus(1.0, 2.0, 4, 16));
  auto s = build_spaces(mesh);
  const int nv = 5 * 16, ne = 3 * 4 * 16 + 16;  // vertices, and edges = V + T for an annulus
  EXPECT_EQ(s->n_vertices, nv);
  EXPECT_EQ(s->n_edges, ne);
  EXPECT_EQ(s->n_vel, 2 * (nv + ne));
  EXPECT_EQ(s->body_nodes.size(), 32u);
  EXPECT_EQ(s->outer_nodes.size(), 32u);
  for (const auto& seg : s->boundary) {
    const Vec2 mid = s->node_coords[seg.nm];
    const double radial = seg.normal.dot(mid.normalized());
    EXPECT_NEAR(std::abs(radial), 1.0, 1e-12);
    if (seg.tag == BoundaryTag::Outer) {
      EXPECT_GT(radial, 0.0);
    } else {
      EXPECT_LT(radial, 0.0);
    }
  }
}

TEST(Spaces, RejectsMeshWithoutInteriorNodes) {
  auto mesh = std::make_shared<Mesh>();
  mesh->vertices = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  mesh->triangles = {{0, 1, 2}};
  mesh->boundary_edges = {{0, 1, BoundaryTag::Outer}, {1, 2, BoundaryTag::Outer}, {2, 0, BoundaryTag::Outer}};
  EXPECT_THROW(build_spaces(mesh), GeometryError);
}

TEST(Forms, MassIntegratesConstants) {
  auto f = forms_for(0.5, 2.0, 4, 24);
  const auto& s = *f->space;
  const VecX one = interpolate_vector(s, [](const Vec2&) { return Vec2(1.0, 0.0); });
  EXPECT_NEAR(one.dot(f->mass_vel * one), mesh_area(s), 1e-12);
  EXPECT_NEAR(f->pres_mean.sum(), mesh_area(s), 1e-12);
  EXPECT_NEAR(f->scalar_mean.sum(), mesh_area(s), 1e-12);
}

TEST(Forms, StiffnessVanishesOnRigidMotions) {
  auto f = forms_for(0.5, 2.0, 4, 24, 0.7);
  const auto& s = *f->space;
  for (const auto& [l, w] : {std::pair{Vec2(1, 0), 0.0}, {Vec2(0, 1), 0.0}, {Vec2(0, 0), 1.0}}) {
    const VecX u = rigid_field(s, l, w);
    EXPECT_LT((f->stiff_vel * u).lpNorm<Eigen::Infinity>(), 1e-11);
  }
}

TEST(Forms, StrainEnergyOfPureStrain) {
  const double nu = 0.3;
  auto f = forms_for(0.5, 2.0, 4, 24, nu);
  const auto& s = *f->space;
  const VecX u = interpolate_vector(s, [](const Vec2& x) { return Vec2(x.x(), -x.y()); });
  // 2 nu eps:eps = 4 nu for eps = diag(1, -1)
  EXPECT_NEAR(u.dot(f->stiff_vel * u), 4 * nu * mesh_area(s), 1e-10);
  EXPECT_LT((f->div * u).norm(), 1e-12);
}

TEST(Forms, DivergenceOfDilation) {
  auto f = forms_for(0.5, 2.0, 4, 24);
  const auto& s = *f->space;
  const VecX u = interpolate_vector(s, [](const Vec2& x) { return x; });
  EXPECT_LT((f->div * u - 2.0 * f->pres_mean).norm(), 1e-12);
}

TEST(Forms, WeakGradientMatchesDivergenceByParts) {
  // (v, grad q) = -(q, div v) + <q, v.n>; for interior v the boundary term vanishes.
  auto f = forms_for(0.5, 2.0, 3, 16);
  const auto& s = *f->space;
  const auto map = dirichlet_map(s);
  const SpMat lhs = map.P.transpose() * f->weak_grad;
  const SpMat rhs = -(f->div * map.P).transpose();
  EXPECT_LT(SpMat(lhs - rhs).norm(), 1e-12);
}

TEST(Norms, LqOfConstantsAndGradients) {
  auto f = forms_for(1.0, 2.0, 4, 24);
  const auto& s = *f->space;
  const double area = mesh_area(s);
  const VecX u = interpolate_vector(s, [](const Vec2&) { return Vec2(3.0, 4.0); });
  EXPECT_NEAR(velocity_lq_norm(s, u, 3.0, 0), 5.0 * std::cbrt(area), 1e-10);
  EXPECT_NEAR(velocity_lq_norm(s, u, 3.0, 1), 0.0, 1e-12);
  const VecX w = interpolate_vector(s, [](const Vec2& x) { return Vec2(x.x() * x.x(), 0.0); });
  // Hessian of x^2 e1 has Frobenius norm 2.
  EXPECT_NEAR(velocity_lq_norm(s, w, 2.0, 2), 2.0 * std::sqrt(area), 1e-10);
  const VecX p = interpolate_pressure(s, [](const Vec2& x) { return 2 * x.x(); });
  EXPECT_NEAR(pressure_lq_norm(s, p, 4.0, 1), 2.0 * std::pow(area, 0.25), 1e-10);
}

TEST(Stokes, CouetteFlowConverges) {
  // Rotating inner cylinder, fixed outer: u_theta = A r + B / r, pressure constant.
  const double ri = 1.0, ro = 2.0, om = 1.0;
  const double A = -om * ri * ri / (ro * ro - ri * ri), B = -A * ro * ro;
  auto exact = [&](const Vec2& x) {
    const double r = x.norm();
    const double ut = A * r + B / r;
    return Vec2(-ut * x.y() / r, ut * x.x() / r);
  };
  double prev = 0.0;
  for (int k : {1, 2}) {
    auto f = forms_for(ri, ro, 4 * k, 24 * k);
    const auto& s = *f->space;
    const Field sol = solve_dirichlet_stokes(*f, {Vec2::Zero(), om}, VecX());
    EXPECT_LT((f->div * sol.u).norm(), 1e-10);
    const VecX err = sol.u - interpolate_vector(s, exact);
    const double e = velocity_lq_norm(s, err, 2.0, 0);
    // straight-sided elements: the boundary chord error limits the rate to two
    EXPECT_LT(e, 0.05 / (k * k));
    EXPECT_LT(pressure_lq_norm(s, sol.p, 2.0, 0), 0.05);
    if (prev > 0.0) EXPECT_GT(std::log2(prev / e), 1.8);
    prev = e;
  }
}

TEST(Stokes, UnfixedGaugeIsSingular) {
  auto f = forms_for(1.0, 2.0, 3, 16);
  StokesOptions opt;
  opt.fix_pressure_gauge = false;
  EXPECT_THROW(solve_dirichlet_stokes(*f, {Vec2(1, 0), 0.0}, VecX(), opt), SolverError);
}

TEST(Neumann, DipoleOracle) {
  // phi = (A r + B / r) cos(theta) with d_r phi = cos(theta) on r_in and 0 on r_out.
  const double ri = 0.5, ro = 2.0;
  const double A = ri * ri / (ri * ri - ro * ro), B = A * ro * ro;
  auto exact = [&](const Vec2& x) {
    const double r = x.norm();
    return (A * r + B / r) * x.x() / r;
  };
  auto f = forms_for(ri, ro, 8, 48);
  const auto& s = *f->space;
  // flux is d_n phi with n the outward normal of the fluid, which points into the body.
  const VecX flux = boundary_functional(s, [](const Vec2& x, const Vec2&, BoundaryTag tag) {
    return tag == BoundaryTag::Body ? -x.x() / x.norm() : 0.0;
  });
  const VecX phi = solve_neumann_laplace(f, flux);
  VecX ex = interpolate_scalar(s, exact);
  ex.array() -= f->scalar_mean.dot(ex) / f->scalar_mean.sum();
  const double err = scalar_lq_norm(s, phi - ex, 2.0, 0);
  EXPECT_LT(err, 2e-3 * scalar_lq_norm(s, ex, 2.0, 0));
  EXPECT_NEAR(f->scalar_mean.dot(phi), 0.0, 1e-12);
}

TEST(Neumann, IncompatibleDataRejected) {
  auto f = forms_for(0.5, 2.0, 3, 16);
  const auto& s = *f->space;
  const VecX flux = boundary_functional(s, [](const Vec2&, const Vec2&, BoundaryTag) { return 1.0; });
  try {
    solve_neumann_laplace(f, flux);
    FAIL() << "expected CompatibilityError";
  } catch (const CompatibilityError& e) {
    EXPECT_GT(std::abs(e.residual()), 1.0);
  }
}
