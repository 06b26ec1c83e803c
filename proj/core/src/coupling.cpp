#include "fsilab/coupling.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>

#include "fsilab/errors.hpp"

namespace fsilab {

BodyParams BodyParams::disk(double rho_s, double r_body) {
  if (!(rho_s > 0.0) || !(r_body > 0.0)) throw Error("body density and radius must be positive");
  BodyParams b;
  b.rho_s = rho_s;
  b.r_body = r_body;
  b.m = rho_s * std::numbers::pi * r_body * r_body;
  b.J = rho_s * std::numbers::pi * std::pow(r_body, 4) / 2.0;
  return b;
}

SymmetryReport analyse_symmetric(const Mat3& a) {
  SymmetryReport r;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  r.asymmetry = (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
  Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (a + a.transpose()));
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  r.max_eigenvalue = es.eigenvalues().maxCoeff();
  const double amin = es.eigenvalues().cwiseAbs().minCoeff();
  r.condition = amin > 0 ? es.eigenvalues().cwiseAbs().maxCoeff() / amin : std::numeric_limits<double>::infinity();
  return r;
}

Mat3 matrix_B(const FormSet& forms, const LiftingBasis& basis) {
  Mat3 b;
  for (int i = 0; i < 3; ++i) {
    const VecX kw = forms.stiff_vel * basis.W[i].u;
    for (int j = 0; j < 3; ++j) b(i, j) = kw.dot(basis.W[j].u);
  }
  return b;
}

Mat3 added_mass_M(const ProjectionContext& ctx) {
  std::array<VecX, 3> pot;
  for (int j = 0; j < 3; ++j) {
    const Vec3 e = rigid_mode(j);
    pot[j] = ctx.neumann_NS(e.head<2>(), e[2]);
  }
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    const VecX lp = ctx.forms().lap_scalar * pot[i];
    for (int j = 0; j < 3; ++j) m(i, j) = lp.dot(pot[j]);
  }
  return m;
}

KMatrix matrix_K(const BodyParams& body, const Mat3& added_mass) {
  KMatrix k;
  k.K = body.inertia() + added_mass;
  Eigen::FullPivLU<Mat3> lu(k.K);
  if (!lu.isInvertible()) throw SolverError("internal error: K is singular");
  k.K_inv = lu.inverse();
  Eigen::JacobiSVD<Mat3> svd(k.K);
  k.condition = svd.singularValues()[0] / svd.singularValues()[2];
  return k;
}

CouplingMatrices assemble_AFS(const ProjectionContext& ctx, const LiftingBasis& basis, const BodyParams& body) {
  const FormSet& f = ctx.forms();
  const ConstraintMap& in = ctx.interior();
  CouplingMatrices cm;
  cm.body = body;
  cm.B = matrix_B(f, basis);
  cm.M = added_mass_M(ctx);
  cm.K = matrix_K(body, cm.M);

  const int nv = f.space->n_vel;
  std::array<VecX, 3> kt;
  for (int j = 0; j < 3; ++j) {
    cm.T[j] = basis.W[j].u - ctx.project_div_free_interior(basis.W[j].u);
    cm.PW[j] = ctx.leray_project(basis.W[j].u);
    kt[j] = f.stiff_vel * cm.T[j];
  }
  for (int i = 0; i < 3; ++i) {
    const VecX mt = f.mass_vel * cm.T[i];
    for (int j = 0; j < 3; ++j) cm.M_consistent(i, j) = mt.dot(cm.T[j]);
  }
  cm.M_consistent = 0.5 * (cm.M_consistent + cm.M_consistent.transpose()).eval();
  cm.K_consistent = matrix_K(body, cm.M_consistent);

  cm.C1.resize(3, nv);
  for (int j = 0; j < 3; ++j) cm.C1.row(j) = -kt[j].transpose();
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) cm.C2(j, k) = -kt[j].dot(basis.W[k].u - cm.PW[k]);
  }

  AFSPencil& p = cm.pencil;
  p.M00 = in.P.transpose() * f.mass_vel * in.P;
  p.K00 = in.P.transpose() * f.stiff_vel * in.P;
  p.B0 = f.div * in.P;
  p.MW.resize(in.n_free, 3);
  for (int j = 0; j < 3; ++j) p.MW.col(j) = in.P.transpose() * (f.mass_vel * cm.PW[j]);
  p.C1 = cm.C1 * in.P;
  p.K = cm.K_consistent.K;
  p.B = cm.B;
  p.pres_mean = f.pres_mean;
  return cm;
}

std::pair<VecX, Vec3> apply_AFS(const ProjectionContext& ctx, const CouplingMatrices& cm, const VecX& v,
                                const Vec3& xi) {
  VecX pw = VecX::Zero(v.size());
  for (int j = 0; j < 3; ++j) pw += xi[j] * cm.PW[j];
  const VecX fluid = ctx.apply_A0(v - pw);
  const Vec3 rig = cm.K_consistent.K_inv * (cm.C1 * v + cm.C2 * xi);
  return {fluid, rig};
}

namespace {

MonolithicPencil build_pencil(std::shared_ptr<const FormSet> forms, ConstraintMap map, const BodyParams& body) {
  MonolithicPencil mp;
  mp.forms = forms;
  mp.map = std::move(map);
  mp.body = body;
  mp.E = mp.map.P.transpose() * forms->mass_vel * mp.map.P;
  if (mp.map.n_rigid > 0) {
    const int c = mp.map.n_free;
    SpMat d(mp.n_red(), mp.n_red());
    Triplets tr = {{c, c, body.m}, {c + 1, c + 1, body.m}, {c + 2, c + 2, body.J}};
    d.setFromTriplets(tr.begin(), tr.end());
    mp.E += d;
  }
  mp.A = mp.map.P.transpose() * forms->stiff_vel * mp.map.P;
  mp.B = forms->div * mp.map.P;
  mp.E.makeCompressed();
  mp.A.makeCompressed();
  mp.B.makeCompressed();
  return mp;
}

}  // namespace

MonolithicPencil assemble_monolithic(std::shared_ptr<const FormSet> forms, const BodyParams& body) {
  auto map = rigid_map(*forms->space);
  return build_pencil(forms, std::move(map), body);
}

MonolithicPencil assemble_stokes_pencil(std::shared_ptr<const FormSet> forms) {
  auto map = dirichlet_map(*forms->space);
  return build_pencil(forms, std::move(map), BodyParams{});
}

VecX MonolithicPencil::load(const VecX& volume_load, const Vec3& g) const {
  VecX r = volume_load.size() ? VecX(map.P.transpose() * volume_load) : VecX::Zero(n_red());
  if (has_body()) r.tail<3>() += g;
  return r;
}

VecX MonolithicPencil::restrict_field(const VecX& u, const Vec3& xi) const {
  VecX x(n_red());
  for (int i = 0; i < map.n_free; ++i) x[i] = u[map.free_dofs[i]];
  if (has_body()) x.tail<3>() = xi;
  return x;
}

Vec3 body_traction(const FormSet& forms, const VecX& u, const VecX& p, const VecX& accel, const VecX& volume_load) {
  const SpacePair& s = *forms.space;
  const VecX r = forms.stiff_vel * u - forms.div.transpose() * p +
                 (accel.size() ? VecX(forms.mass_vel * accel) : VecX::Zero(s.n_vel)) -
                 (volume_load.size() ? volume_load : VecX::Zero(s.n_vel));
  Vec3 out;
  for (int j = 0; j < 3; ++j) {
    const Vec3 e = rigid_mode(j);
    out[j] = -r.dot(rigid_boundary_values(s, e.head<2>(), e[2]));
  }
  return out;
}

}  // namespace fsilab
