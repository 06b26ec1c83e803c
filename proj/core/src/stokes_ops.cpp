#include "fsilab/stokes_ops.hpp"

#include <cmath>
#include <sstream>

#include "fsilab/errors.hpp"

namespace fsilab {

Eigen::Vector3d rigid_mode(int j) {
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  e[j] = 1.0;
  return e;
}

VecX LiftingBasis::velocity(const Vec2& ell, double omega) const {
  return ell.x() * W[0].u + ell.y() * W[1].u + omega * W[2].u;
}

VecX LiftingBasis::pressure(const Vec2& ell, double omega) const {
  return ell.x() * W[0].p + ell.y() * W[1].p + omega * W[2].p;
}

LiftingBasis lifting_basis(const FormSet& forms) {
  const SpacePair& s = *forms.space;
  const ConstraintMap map = dirichlet_map(s);
  const SpMat kred = map.P.transpose() * forms.stiff_vel * map.P;
  const SpMat bred = forms.div * map.P;
  SaddleSolver<double> solver(kred, bred, forms.pres_mean, true);
  LiftingBasis basis;
  for (int j = 0; j < 3; ++j) {
    const Eigen::Vector3d e = rigid_mode(j);
    const VecX ubc = rigid_boundary_values(s, e.head<2>(), e[2]);
    VecX x, p;
    solver.solve(map.P.transpose() * (-(forms.stiff_vel * ubc)), -(forms.div * ubc), x, p);
    basis.W[j].u = map.P * x + ubc;
    basis.W[j].p = remove_pressure_mean(forms, p);
    basis.W[j].mean_zero = true;
  }
  return basis;
}

namespace {

SparseSolver<double> build_leray(const FormSet& f) {
  const int nv = f.space->n_vel, np = f.space->n_pres;
  Triplets tr;
  auto add = [&tr](const SpMat& m, int r0, int c0, bool transpose) {
    for (int j = 0; j < m.outerSize(); ++j) {
      for (SpMat::InnerIterator it(m, j); it; ++it) {
        if (transpose) {
          tr.emplace_back(r0 + it.col(), c0 + it.row(), it.value());
        } else {
          tr.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
        }
      }
    }
  };
  add(f.mass_vel, 0, 0, false);
  add(f.weak_grad, 0, nv, false);
  add(f.weak_grad, nv, 0, true);
  // constants have zero gradient: pin the potential to mean zero
  const double scale = 1.0 / f.pres_mean.sum();
  for (int i = 0; i < np; ++i) {
    tr.emplace_back(nv + i, nv + np, f.pres_mean[i] * scale);
    tr.emplace_back(nv + np, nv + i, f.pres_mean[i] * scale);
  }
  SpMat a(nv + np + 1, nv + np + 1);
  a.setFromTriplets(tr.begin(), tr.end());
  return SparseSolver<double>(std::move(a), "Leray projection system");
}

SaddleSolver<double> build_mass_saddle(const FormSet& f, const ConstraintMap& map) {
  const SpMat m00 = map.P.transpose() * f.mass_vel * map.P;
  const SpMat b0 = f.div * map.P;
  return SaddleSolver<double>(m00, b0, f.pres_mean, true);
}

}  // namespace

ProjectionContext::ProjectionContext(std::shared_ptr<const FormSet> forms)
    : forms_(std::move(forms)),
      interior_(dirichlet_map(*forms_->space)),
      neumann_(forms_),
      leray_(build_leray(*forms_)),
      mass_saddle_(build_mass_saddle(*forms_, interior_)) {}

VecX ProjectionContext::leray_project(const VecX& u) const {
  const int nv = space().n_vel, np = space().n_pres;
  VecX rhs = VecX::Zero(nv + np + 1);
  rhs.head(nv) = forms_->mass_vel * u;
  return leray_.solve(rhs).head(nv);
}

VecX ProjectionContext::project_div_free_interior(const VecX& u) const {
  const VecX f = interior_.P.transpose() * (forms_->mass_vel * u);
  VecX x, p;
  mass_saddle_.solve(f, VecX(), x, p);
  return interior_.P * x;
}

VecX ProjectionContext::rigid_flux(const Vec2& ell, double omega) const {
  return boundary_functional(space(), [&](const Vec2& y, const Vec2& n, BoundaryTag tag) {
    if (tag != BoundaryTag::Body) return 0.0;
    const Vec2 v(ell.x() - omega * y.y(), ell.y() + omega * y.x());
    return v.dot(n);
  });
}

VecX ProjectionContext::neumann_NS(const Vec2& ell, double omega) const {
  VecX flux = rigid_flux(ell, omega);
  const double total = flux.sum();
  if (std::abs(total) > 1e-10 * std::max(flux.cwiseAbs().sum(), 1e-300) && std::abs(total) > 1e-14) {
    std::ostringstream ss;
    ss << "internal error: rigid flux has nonzero mean " << total;
    throw Error(ss.str());
  }
  // exact mean removal: the chord quadrature leaves roundoff only
  flux.array() -= total / flux.size();
  return neumann_.solve(flux);
}

VecX ProjectionContext::apply_A0(const VecX& u) const {
  const SpacePair& s = space();
  const double un = u.lpNorm<Eigen::Infinity>();
  for (int n = 0; n < s.n_nodes; ++n) {
    if (s.node_tag[n] == 0) continue;
    if (std::abs(u[s.vel(n, 0)]) > 1e-12 * std::max(un, 1e-300) ||
        std::abs(u[s.vel(n, 1)]) > 1e-12 * std::max(un, 1e-300)) {
      throw Error("apply_A0: field does not vanish on the boundary");
    }
  }
  const VecX div = forms_->div * u;
  if (div.norm() > 1e-8 * std::max(1.0, un)) {
    std::ostringstream ss;
    ss << "apply_A0: field is not discretely divergence-free (residual " << div.norm() << ")";
    throw Error(ss.str());
  }
  const VecX f = -(interior_.P.transpose() * (forms_->stiff_vel * u));
  VecX x, p;
  mass_saddle_.solve(f, VecX(), x, p);
  return interior_.P * x;
}

VecX ProjectionContext::recover_pressure(const VecX& u, const Vec2& ell, double omega, double lambda) const {
  const SpacePair& s = space();
  const double nu = forms_->nu;
  // <nu Delta u . n, chi> = (nu Delta u, grad chi) for divergence-free u; Delta u is constant per element.
  VecX flux = VecX::Zero(s.n_nodes);
  const auto& qp = TriangleRule::points();
  const auto& qw = TriangleRule::weights();
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& g = s.geom[t];
    const auto& nd = s.tri_nodes[t];
    const auto hs = P2Basis::hessians(g);
    Vec2 lap = Vec2::Zero();
    for (int a = 0; a < 6; ++a) {
      lap.x() += u[s.vel(nd[a], 0)] * hs[a].trace();
      lap.y() += u[s.vel(nd[a], 1)] * hs[a].trace();
    }
    for (int k = 0; k < TriangleRule::n; ++k) {
      const auto d = P2Basis::gradients(g, qp[k]);
      for (int a = 0; a < 6; ++a) flux[nd[a]] += qw[k] * g.area * nu * lap.dot(d[a]);
    }
  }
  VecX pi = neumann_.solve(flux);
  if (lambda != 0.0 && (ell.squaredNorm() > 0.0 || omega != 0.0)) pi -= lambda * neumann_NS(ell, omega);
  return pi;
}

VecX pressure_to_quadratic(const SpacePair& s, const VecX& p) {
  VecX out(s.n_nodes);
  out.head(s.n_vertices) = p;
  const auto& mesh = *s.mesh;
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& v = mesh.triangles[t];
    const auto& nd = s.tri_nodes[t];
    out[nd[3]] = 0.5 * (p[v[0]] + p[v[1]]);
    out[nd[4]] = 0.5 * (p[v[1]] + p[v[2]]);
    out[nd[5]] = 0.5 * (p[v[2]] + p[v[0]]);
  }
  return out;
}

}  // namespace fsilab
