#pragma once

#include <array>
#include <memory>

#include "fsilab/fem.hpp"

namespace fsilab {

// Steady Stokes liftings of the three rigid modes: e1, e2 and y^perp on the body.
struct LiftingBasis {
  std::array<Field, 3> W;

  // D(ell, omega) and D_pr(ell, omega).
  VecX velocity(const Vec2& ell, double omega) const;
  VecX pressure(const Vec2& ell, double omega) const;
  VecX velocity(const Eigen::Vector3d& xi) const { return velocity(xi.head<2>(), xi[2]); }
};

LiftingBasis lifting_basis(const FormSet& forms);

// Rigid mode j as a 3-vector of (ell, omega).
Eigen::Vector3d rigid_mode(int j);

class ProjectionContext {
 public:
  explicit ProjectionContext(std::shared_ptr<const FormSet> forms);

  const FormSet& forms() const { return *forms_; }
  const SpacePair& space() const { return *forms_->space; }
  std::shared_ptr<const FormSet> forms_ptr() const { return forms_; }
  const ConstraintMap& interior() const { return interior_; }
  const NeumannSolver& neumann() const { return neumann_; }

  // Mass-orthogonal projection onto fields orthogonal to every discrete gradient.
  VecX leray_project(const VecX& u) const;
  // Mass-orthogonal projection onto interior, discretely divergence-free fields.
  VecX project_div_free_interior(const VecX& u) const;
  // <(ell + omega y^perp) . n, chi> on BODY; n is the outward normal of the fluid.
  VecX rigid_flux(const Vec2& ell, double omega) const;
  VecX neumann_NS(const Vec2& ell, double omega) const;
  // nu P Delta u for u vanishing on the boundary and divergence-free.
  VecX apply_A0(const VecX& u) const;
  // Pressure nu N(Delta u . n) - lambda N_S((ell + omega y^perp) . n), as a quadratic scalar.
  VecX recover_pressure(const VecX& u, const Vec2& ell, double omega, double lambda) const;

  // Saddle solver for (M00, B0) on interior dofs, shared by the projection and A0.
  const SaddleSolver<double>& interior_mass_saddle() const { return mass_saddle_; }

 private:
  std::shared_ptr<const FormSet> forms_;
  ConstraintMap interior_;
  NeumannSolver neumann_;
  SparseSolver<double> leray_;
  SaddleSolver<double> mass_saddle_;
};

// P1 pressure restricted to quadratic nodes (vertices keep their values, midpoints average).
VecX pressure_to_quadratic(const SpacePair& s, const VecX& p);

}  // namespace fsilab
