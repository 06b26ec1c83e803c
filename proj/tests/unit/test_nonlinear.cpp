#include <gtest/gtest.h>

#include <cmath>

#include "fsilab/errors.hpp"
#include "fsilab/nonlinear.hpp"

using namespace fsilab;

namespace {

struct Setup {
  std::shared_ptr<const FormSet> forms;
  LiftingBasis basis;
  NonlinearProblem prob;
};

const Setup& small() {
  static const Setup s = [] {
    Setup s;
    auto mesh = std::make_shared<Mesh>(generate_annulus(0.5, 2.0, 4, 24));
    s.forms = assemble_forms(build_spaces(mesh), 1.0);
    s.basis = lifting_basis(*s.forms);
    s.prob = NonlinearProblem::create(s.forms, BodyParams::disk(1.0, 0.5));
    return s;
  }();
  return s;
}

const SpacePair& space() { return *small().forms->space; }

TimeSeries linear_run(const Vec3& xi, double scale, TimeGrid grid) {
  const auto& s = small();
  LinearInputs in;
  in.grid = grid;
  in.u0 = s.basis.velocity(scale * xi);
  in.ell0 = scale * xi.head<2>();
  in.omega0 = scale * xi[2];
  StepperOptions opt;
  opt.diagnostics = false;
  return simulate_linear(s.prob.pencil, in, opt);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(y[i]);
  }
  return log_linear_slope(lx, ly);
}

}  // namespace

TEST(Jet, PolynomialDerivatives) {
  const Jet3 x = Jet3::variable(0.7, 0), y = Jet3::variable(-0.4, 1);
  const Jet3 f = x * x * y + 3.0 * y * y * y - x;
  EXPECT_NEAR(f.value(), 0.49 * -0.4 + 3.0 * -0.064 - 0.7, 1e-14);
  EXPECT_NEAR(f.derivative(1, 0), 2 * 0.7 * -0.4 - 1.0, 1e-14);
  EXPECT_NEAR(f.derivative(2, 1), 2.0, 1e-14);
  EXPECT_NEAR(f.derivative(0, 3), 18.0, 1e-14);
  EXPECT_NEAR(f.derivative(1, 1), 1.4, 1e-14);
}

TEST(Jet, ComposeMatchesChainRule) {
  const double x0 = 0.3, y0 = 0.8;
  const Jet3 g = Jet3::variable(x0, 0) * Jet3::variable(y0, 1);
  const double v = x0 * y0;
  const Jet3 e = g.compose(std::exp(v), std::exp(v), std::exp(v), std::exp(v));
  // d^3/dx^2dy exp(xy) = exp(xy) (x y^2 ... ) : check against the closed form
  const double ex = std::exp(v);
  EXPECT_NEAR(e.derivative(1, 0), y0 * ex, 1e-13);
  EXPECT_NEAR(e.derivative(1, 1), (1.0 + v) * ex, 1e-13);
  EXPECT_NEAR(e.derivative(2, 1), (2.0 * y0 + x0 * y0 * y0) * ex, 1e-13);
  EXPECT_NEAR(e.derivative(0, 3), x0 * x0 * x0 * ex, 1e-13);
}

TEST(Cutoff, ValuesAtReferenceDistances) {
  const Cutoff& psi = small().prob.psi;
  const double a = psi.alpha;
  auto at = [&](double dist) { return psi.value(Vec2(psi.r_outer - dist, 0.0)); };
  EXPECT_EQ(at(a / 2.0), 1.0);
  EXPECT_EQ(at(a / 4.0), 1.0);
  EXPECT_EQ(at(a / 16.0), 0.0);
  EXPECT_NEAR(at(3.0 * a / 16.0), 0.5, 1e-14);
  const VecX nodal = cutoff_nodal(space(), psi);
  for (int n = 0; n < space().n_nodes; ++n) {
    if (space().node_tag[n] == 1) EXPECT_EQ(nodal[n], 0.0);
    if (space().node_tag[n] == 2) EXPECT_EQ(nodal[n], 1.0);
  }
}

TEST(Cutoff, JetMatchesFiniteDifferences) {
  const Cutoff& psi = small().prob.psi;
  const Vec2 x(1.2, 1.2);  // inside the transition layer
  const Jet3 j = psi.jet(x);
  EXPECT_GT(j.value(), 0.0);
  EXPECT_LT(j.value(), 1.0);
  const double h = 1e-5;
  auto v = [&](double dx, double dy) { return psi.value(x + Vec2(dx, dy)); };
  EXPECT_NEAR(j.derivative(1, 0), (v(h, 0) - v(-h, 0)) / (2 * h), 1e-7);
  EXPECT_NEAR(j.derivative(0, 1), (v(0, h) - v(0, -h)) / (2 * h), 1e-7);
  const double hh = 1e-4;
  auto jx = [&](double dy) { return psi.jet(x + Vec2(0, dy)).derivative(2, 0); };
  const double fd = (jx(hh) - jx(-hh)) / (2 * hh);
  EXPECT_NEAR(j.derivative(2, 1), fd, 1e-6 * std::abs(fd));
}

TEST(Lambda, ZeroForRestingBody) {
  const LambdaField lam(small().prob.psi, Vec2::Zero(), Vec2::Zero(), 0.0);
  for (const Vec2& x : space().node_coords) {
    const auto e = lam.evaluate(x);
    EXPECT_EQ(e.value.norm(), 0.0);
    EXPECT_EQ(e.grad.norm(), 0.0);
  }
}

TEST(Lambda, RigidNearBodyVanishingAtWallDivergenceFree) {
  const auto& s = small();
  const Vec2 a(0.05, -0.02), adot(0.3, -0.7);
  const double om = 1.3;
  const LambdaField lam = build_lambda(s.prob.psi, a, adot, om, s.prob.body.r_body);
  for (int n = 0; n < space().n_nodes; ++n) {
    const Vec2& x = space().node_coords[n];
    const auto e = lam.evaluate(x);
    EXPECT_NEAR(e.grad.trace(), 0.0, 1e-12);
    if (space().node_tag[n] == 2) {
      const Vec2 r = x - a;
      EXPECT_LT((e.value - (adot + om * Vec2(-r.y(), r.x()))).norm(), 1e-12);
    }
    if (space().node_tag[n] == 1) EXPECT_EQ(e.value.norm(), 0.0);
  }
  EXPECT_LE(lambda_element_divergence(space(), lam), 1e-10);
}

TEST(Lambda, TranslationInRigidRegion) {
  const LambdaField lam = build_lambda(small().prob.psi, Vec2::Zero(), Vec2(1.0, 0.0), 0.0, 0.5);
  const auto e = lam.evaluate(Vec2(0.6, 0.3));
  EXPECT_EQ(e.value, Vec2(1.0, 0.0));
  EXPECT_EQ(e.grad.norm(), 0.0);
}

TEST(Lambda, DerivativesMatchFiniteDifferences) {
  const LambdaField lam(small().prob.psi, Vec2(0.1, 0.0), Vec2(0.4, 0.2), -0.8);
  const Vec2 x(-1.2, 1.2);
  const auto e = lam.evaluate(x);
  const double h = 1e-5;
  for (int l = 0; l < 2; ++l) {
    Vec2 d = Vec2::Zero();
    d[l] = h;
    const auto ep = lam.evaluate(x + d), em = lam.evaluate(x - d);
    const Vec2 dv = (ep.value - em.value) / (2 * h);
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(e.grad(i, l), dv[i], 1e-7 * std::max(1.0, std::abs(dv[i])));
      const Vec2 dg = (ep.grad.row(i) - em.grad.row(i)).transpose() / (2 * h);
      EXPECT_NEAR(e.hess[i](0, l), dg[0], 1e-7 * std::max(1.0, std::abs(dg[0])));
      EXPECT_NEAR(e.hess[i](1, l), dg[1], 1e-7 * std::max(1.0, std::abs(dg[1])));
    }
  }
}

TEST(Lambda, ClearanceViolationThrows) {
  const auto& s = small();
  EXPECT_THROW(build_lambda(s.prob.psi, Vec2(0.9, 0.0), Vec2::Zero(), 0.0, s.prob.body.r_body), ClearanceError);
  EXPECT_NO_THROW(build_lambda(s.prob.psi, Vec2(0.2, 0.0), Vec2::Zero(), 0.0, s.prob.body.r_body));
}

TEST(Rotation, SeriesFromOmega) {
  const double dt = 0.01;
  std::vector<double> om(201, 2.0);
  const auto r = rotation_from_omega(om, dt);
  for (std::size_t n = 0; n < om.size(); ++n) {
    EXPECT_NEAR(r.theta[n], 2.0 * dt * n, 1e-12);
    EXPECT_LT((r.Q[n].transpose() * r.Q[n] - Mat2::Identity()).norm(), 1e-14);
    EXPECT_NEAR(r.Q[n].determinant(), 1.0, 1e-14);
  }
  EXPECT_LT((rotation(0.4) * rotation(0.9) - rotation(1.3)).norm(), 1e-14);
}

TEST(Rotation, ConcatenationAndGrowthBound) {
  const double dt = 0.05;
  std::vector<double> om;
  for (int n = 0; n <= 40; ++n) om.push_back(std::sin(0.3 * n) - 0.2);
  const auto whole = rotation_from_omega(om, dt);
  const std::vector<double> head(om.begin(), om.begin() + 21), tail(om.begin() + 20, om.end());
  const auto a = rotation_from_omega(head, dt);
  const auto b = rotation_from_omega(tail, dt);
  for (std::size_t n = 0; n < tail.size(); ++n) {
    EXPECT_LT((whole.Q[20 + n] - b.Q[n] * a.Q.back()).norm(), 1e-13);
  }
  double integral = 0.0;
  for (std::size_t n = 1; n < om.size(); ++n) {
    integral += 0.5 * dt * (std::abs(om[n - 1]) + std::abs(om[n]));
    const Mat2 d = whole.Q[n] - Mat2::Identity();
    EXPECT_LE(Eigen::JacobiSVD<Mat2>(d).singularValues()[0], integral + 1e-14);
  }
  EXPECT_EQ((rotation_from_omega(std::vector<double>(5, 0.0), dt).Q[4] - Mat2::Identity()).norm(), 0.0);
}

TEST(Rotation, PathIntegratesLinearData) {
  const TimeGrid grid{0.1, 20};
  std::vector<Vec2> ell(21);
  std::vector<double> om(21);
  for (int n = 0; n <= 20; ++n) {
    ell[n] = Vec2(1.0, 0.0);
    om[n] = 0.5 * grid.time(n);
  }
  const RigidPath path(grid, ell, om);
  const double t = 1.37;
  EXPECT_NEAR(path.omega(t), 0.5 * t, 1e-14);
  EXPECT_NEAR(path.theta(t), 0.25 * t * t, 1e-14);
  // a(t) = int_0^t (cos(s^2/4), sin(s^2/4)) ds, compare against a fine midpoint rule
  Vec2 ref = Vec2::Zero();
  const int m = 20000;
  for (int k = 0; k < m; ++k) {
    const double s = (k + 0.5) * t / m;
    ref += Vec2(std::cos(0.25 * s * s), std::sin(0.25 * s * s)) * (t / m);
  }
  EXPECT_LT((path.a(t) - ref).norm(), 1e-6);
}

TEST(FlowMap, IdentityForRestingBody) {
  const auto& s = small();
  const TimeGrid grid{0.1, 5};
  const RigidPath path(grid, std::vector<Vec2>(6, Vec2::Zero()), std::vector<double>(6, 0.0));
  FlowMap fm(space(), s.prob.psi, path, s.prob.body.r_body);
  const MapFrame id = MapFrame::identity(space());
  for (int n = 0; n < 5; ++n) fm.advance();
  const auto& f = fm.frame();
  for (std::size_t i = 0; i < f.X.size(); ++i) {
    EXPECT_EQ((f.X[i] - id.X[i]).norm(), 0.0);
    EXPECT_EQ((f.F[i] - Mat2::Identity()).norm(), 0.0);
  }
}

TEST(FlowMap, RigidRotationOfTheBody) {
  const auto& s = small();
  const TimeGrid grid{0.02, 100};
  const RigidPath path(grid, std::vector<Vec2>(101, Vec2::Zero()), std::vector<double>(101, 0.3));
  FlowMap fm(space(), s.prob.psi, path, s.prob.body.r_body);
  for (int n = 0; n < 100; ++n) {
    fm.advance();
    EXPECT_LE(fm.body_rigidity_error(), 1e-8);
    EXPECT_LE(fm.max_det_drift(), 1e-4);
  }
  const auto& f = fm.frame();
  EXPECT_NEAR(path.theta(f.t), 0.6, 1e-12);
  for (int nd : space().body_nodes) EXPECT_LT((f.F[f.n_quad + nd] - f.Q).norm(), 1e-7);
  EXPECT_NEAR(fm.clearance(), 2.0 - 0.5, 1e-14);
}

TEST(FlowMap, DeterminantDriftOverUnitTime) {
  const auto& s = small();
  const TimeGrid grid{0.05, 20};
  const RigidPath path(grid, std::vector<Vec2>(21, Vec2(0.05, 0.0)), std::vector<double>(21, 0.1));
  FlowMap fm(space(), s.prob.psi, path, s.prob.body.r_body);
  double drift = 0.0;
  for (int n = 0; n < 20; ++n) {
    fm.advance();
    drift = std::max(drift, fm.max_det_drift());
  }
  EXPECT_LE(drift, 1e-4);
}

TEST(FlowMap, VariationsAreConsistent) {
  const auto& s = small();
  const TimeGrid grid{0.05, 20};
  std::vector<Vec2> ell(21);
  std::vector<double> om(21);
  for (int n = 0; n <= 20; ++n) {
    ell[n] = Vec2(0.02 * std::cos(n * 0.1), 0.01);
    om[n] = 0.05 - 0.003 * n;
  }
  const RigidPath path(grid, ell, om);
  FlowMap fm(space(), s.prob.psi, path, s.prob.body.r_body);
  for (int n = 0; n < 20; ++n) fm.advance();
  const auto& f = fm.frame();
  // central differences over a rigidly shifted copy of the tracked points
  const double h = 1e-5;
  double err_f = 0.0, err_g = 0.0;
  for (int l = 0; l < 2; ++l) {
    std::array<MapFrame, 2> sh;
    for (int sgn = 0; sgn < 2; ++sgn) {
      SpacePair moved = space();
      Vec2 d = Vec2::Zero();
      d[l] = sgn == 0 ? h : -h;
      for (auto& x : moved.node_coords) x += d;
      for (auto& g : moved.geom) {
        for (auto& x : g.x) x += d;
      }
      FlowMap m(moved, s.prob.psi, path, s.prob.body.r_body);
      for (int n = 0; n < 20; ++n) m.advance();
      sh[sgn] = m.frame();
    }
    for (std::size_t i = 0; i < f.X.size(); ++i) {
      const Vec2 dx = (sh[0].X[i] - sh[1].X[i]) / (2 * h);
      const Mat2 dfd = (sh[0].F[i] - sh[1].F[i]) / (2 * h);
      err_f = std::max(err_f, (dx - f.F[i].col(l)).norm() / f.F[i].norm());
      err_g = std::max(err_g, (dfd - f.dF[i][l]).norm() / std::max(1.0, f.dF[i][l].norm()));
    }
  }
  EXPECT_LT(err_f, 1e-6);
  EXPECT_LT(err_g, 1e-4);
  // the tracked second derivative is symmetric in its two spatial indices
  for (std::size_t i = 0; i < f.dF.size(); ++i) {
    const double sc = std::max(1.0, f.dF[i][0].norm() + f.dF[i][1].norm());
    EXPECT_LT(std::abs(f.dF[i][0](0, 1) - f.dF[i][1](0, 0)), 1e-12 * sc);
    EXPECT_LT(std::abs(f.dF[i][0](1, 1) - f.dF[i][1](1, 0)), 1e-12 * sc);
  }
}

TEST(NonlinearTerms, IdentityMapsLeaveOnlyConvection) {
  const auto& s = small();
  StateSample st;
  st.u = interpolate_vector(space(), [](const Vec2& x) { return Vec2(-x.y() * x.x(), 0.5 * x.y() * x.y()); });
  st.dudt = st.u;
  st.p = VecX::Constant(space().mesh->vertices.size(), 1.0);
  const MapFrame id = MapFrame::identity(space());
  const auto nt = nonlinear_terms(*s.forms, s.prob.body, st, id);
  const QuadField uq = velocity_at_quad(space(), st.u);
  const auto& qp = TriangleRule::points();
  double worst = 0.0;
  for (int t = 0; t < space().n_triangles(); ++t) {
    for (int k = 0; k < TriangleRule::n; ++k) {
      const int i = t * TriangleRule::n + k;
      const auto dN = P2Basis::gradients(space().geom[t], qp[k]);
      Mat2 Du = Mat2::Zero();
      for (int a = 0; a < 6; ++a) {
        const int nd = space().tri_nodes[t][a];
        Du += Vec2(st.u[space().vel(nd, 0)], st.u[space().vel(nd, 1)]) * dN[a].transpose();
      }
      const Vec2 conv = -Du * uq.col(i);
      worst = std::max(worst, (nt.F.col(i) - conv).norm());
    }
  }
  EXPECT_LT(worst, 1e-12);
  EXPECT_EQ(nt.H.norm(), 0.0);
  EXPECT_EQ(nt.G1.norm(), 0.0);
}

TEST(NonlinearTerms, ZeroStateGivesZero) {
  const auto ts = linear_run(Vec3::Zero(), 1.0, {0.05, 10});
  const auto d = evaluate_nonlinear(small().prob, ts);
  for (int n = 0; n <= 10; ++n) {
    EXPECT_EQ(d.F[n].norm(), 0.0);
    EXPECT_EQ(d.H[n].norm(), 0.0);
    EXPECT_EQ(d.G[n].norm(), 0.0);
  }
  EXPECT_EQ(d.geometry.max_det_drift(), 0.0);
}

TEST(NonlinearTerms, QuadraticInAmplitude) {
  const auto& s = small();
  const TimeGrid grid{0.05, 40};
  const auto base = linear_run(Vec3(0.6, -0.3, 1.0), 1.0, grid);
  std::vector<double> amp, nf, nh, ng;
  for (double a : {1e-3, 1e-2, 1e-1}) {
    const auto d = evaluate_nonlinear(s.prob, scale_series(base, a));
    double f = 0, h = 0, g = 0;
    for (int n = 0; n <= grid.steps; ++n) {
      f = std::max(f, quad_lq_norm(space(), d.F[n], 2.0));
      h = std::max(h, velocity_wkq_norm(space(), d.H[n], 2.0, 2));
      g = std::max(g, d.G[n].norm());
    }
    amp.push_back(a);
    nf.push_back(f);
    nh.push_back(h);
    ng.push_back(g);
    EXPECT_LE(d.geometry.max_det_drift(), 1e-4);
  }
  EXPECT_NEAR(slope(amp, nf), 2.0, 0.1);
  EXPECT_NEAR(slope(amp, nh), 2.0, 0.1);
  EXPECT_NEAR(slope(amp, ng), 2.0, 1e-6);
}

TEST(Picard, ZeroDataConvergesImmediately) {
  const auto& s = small();
  NonlinearOptions opt;
  opt.grid = {0.05, 20};
  const auto r = picard_solve(s.prob, VecX::Zero(space().n_vel), Vec2::Zero(), 0.0, opt);
  EXPECT_TRUE(r.diag.converged);
  ASSERT_EQ(r.diag.iterates.size(), 1u);
  EXPECT_EQ(r.diag.iterates[0].s_norm, 0.0);
}

TEST(Picard, SmallDataContractsToAFixedPoint) {
  const auto& s = small();
  NonlinearOptions opt;
  opt.grid = {0.05, 100};
  // scale the data so the linear solution sits at gamma/4
  const Vec3 dir(2.0, -1.0, 3.0);
  const double lin = s_norm(s.prob.pencil, linear_run(dir, 1.0, opt.grid), 2.0, 2.0, 1.0);
  const Vec3 xi = (0.25 * opt.gamma / lin) * dir;
  const auto r = picard_solve(s.prob, s.basis.velocity(xi), xi.head<2>(), xi[2], opt);
  ASSERT_TRUE(r.diag.converged);
  EXPECT_TRUE(r.diag.small_data_gate);
  EXPECT_TRUE(r.diag.all_in_ball);
  EXPECT_LE(r.diag.max_factor, 0.5);
  EXPECT_GT(r.diag.C_N, 0.0);
  EXPECT_GE(r.diag.iterates.size(), 2u);

  // the fixed point reproduces itself through one linear solve with its own nonlinear data
  auto data = std::make_shared<NonlinearData>(evaluate_nonlinear(s.prob, r.solution));
  LinearInputs in;
  in.grid = opt.grid;
  in.u0 = s.basis.velocity(xi);
  in.ell0 = xi.head<2>();
  in.omega0 = xi[2];
  in.f = [data](int n) { return data->F[n]; };
  in.h = [data](int n) { return data->H[n]; };
  in.g = [data](int n) { return data->G[n]; };
  StepperOptions so;
  so.diagnostics = false;
  const auto again = simulate_linear(s.prob.pencil, in, so);
  const double sn = s_norm(s.prob.pencil, r.solution, 2.0, 2.0, 1.0);
  EXPECT_LE(s_norm_difference(s.prob.pencil, again, r.solution, 2.0, 2.0, 1.0), 2.0 * opt.tol);
  EXPECT_GT(sn, 0.0);

  const auto phys = back_transform(s.prob, r.solution, 2.0);
  EXPECT_TRUE(phys.clearance_ok);
  EXPECT_LE(phys.decay_slope, -0.8 * opt.eta);
  EXPECT_LE(phys.max_det_drift, 1e-4);
}

TEST(Picard, FactorShrinksWithAmplitude) {
  const auto& s = small();
  NonlinearOptions opt;
  opt.grid = {0.05, 60};
  opt.gamma = 1.0;
  auto factor = [&](double a) {
    const Vec3 xi = a * Vec3(1.0, 0.5, 2.0);
    const auto r = picard_solve(s.prob, s.basis.velocity(xi), xi.head<2>(), xi[2], opt);
    return r.diag.iterates.size() > 2 ? r.diag.iterates[2].factor : 0.0;
  };
  const double f1 = factor(2e-2), f2 = factor(1e-2);
  EXPECT_GT(f1, 0.0);
  EXPECT_NEAR(f2 / f1, 0.5, 0.1);
}

TEST(Picard, HalvingDataHalvesSolution) {
  const auto& s = small();
  NonlinearOptions opt;
  opt.grid = {0.05, 60};
  const Vec3 dir(1e-3, 5e-4, 2e-3);
  std::vector<double> amp, norm;
  for (double a : {1.0, 0.5, 0.25}) {
    const Vec3 xi = a * dir;
    const auto r = picard_solve(s.prob, s.basis.velocity(xi), xi.head<2>(), xi[2], opt);
    ASSERT_TRUE(r.diag.converged);
    amp.push_back(a);
    norm.push_back(s_norm(s.prob.pencil, r.solution, 2.0, 2.0, 1.0));
  }
  EXPECT_NEAR(slope(amp, norm), 1.0, 0.1);
}

TEST(BackTransform, RestingAndRotatingBody) {
  const auto& s = small();
  const TimeGrid grid{0.05, 20};
  const auto rest = back_transform(s.prob, linear_run(Vec3::Zero(), 1.0, grid), 2.0);
  for (std::size_t n = 0; n < rest.t.size(); ++n) {
    EXPECT_EQ(rest.a[n].norm(), 0.0);
    EXPECT_EQ(rest.decay[n], 0.0);
  }
  const auto spin = back_transform(s.prob, linear_run(Vec3(0.0, 0.0, 1.0), 1.0, grid), 2.0);
  for (std::size_t n = 0; n < spin.t.size(); ++n) {
    EXPECT_LT(spin.a[n].norm(), 1e-3);
    EXPECT_NEAR(spin.clearance[n], 1.5, 1e-3);
  }
  EXPECT_GT(spin.theta.back(), 0.0);
  EXPECT_LE(spin.max_q_orth, 1e-14);
}
