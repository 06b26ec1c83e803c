#pragma once

#include <Eigen/Dense>
#include <array>

#include "fsilab/stokes_ops.hpp"

namespace fsilab {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct BodyParams {
  double rho_s = 1.0;
  double r_body = 0.5;
  double m = 0.0;
  double J = 0.0;

  static BodyParams disk(double rho_s, double r_body);
  Mat3 inertia() const { return Vec3(m, m, J).asDiagonal(); }
};

struct SymmetryReport {
  double asymmetry = 0.0;  // max |A - A^T| / max |A|
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double condition = 0.0;
};

SymmetryReport analyse_symmetric(const Mat3& a);

// B_ij = a(W_i, W_j).
Mat3 matrix_B(const FormSet& forms, const LiftingBasis& basis);
// m_ij from the harmonic potentials of the rigid fluxes.
Mat3 added_mass_M(const ProjectionContext& ctx);

struct KMatrix {
  Mat3 K;
  Mat3 K_inv;
  double condition = 0.0;
};
KMatrix matrix_K(const BodyParams& body, const Mat3& added_mass);

// Operator pencil of the reduced fluid-structure system on (interior divergence-free u, xi):
//   E_fs d/dt (u, xi) = S_fs (u, xi), with
//   E_fs = [[M00, (M P W)_int], [0, K_c]],  S_fs = [[-K00, 0], [C1_int, -B]]
// and the divergence constraint B0 u = 0 carried by a multiplier.
struct AFSPencil {
  SpMat M00;
  SpMat K00;
  SpMat B0;
  Eigen::MatrixXd MW;  // n_free x 3
  Eigen::MatrixXd C1;  // 3 x n_free
  Mat3 K;              // consistent K
  Mat3 B;
  VecX pres_mean;
  int n_free() const { return static_cast<int>(M00.rows()); }
};

struct CouplingMatrices {
  BodyParams body;
  Mat3 B;             // lifting stiffness
  Mat3 M;             // harmonic added mass
  Mat3 M_consistent;  // T^T M T with T the discrete potential extensions
  KMatrix K;          // built from the harmonic added mass
  KMatrix K_consistent;
  Eigen::MatrixXd C1;  // 3 x n_vel: C1 w = -a(w, T_j)
  Mat3 C2;
  std::array<VecX, 3> T;   // (I - Pi0) W_j
  std::array<VecX, 3> PW;  // Leray projection of W_j
  AFSPencil pencil;
};

CouplingMatrices assemble_AFS(const ProjectionContext& ctx, const LiftingBasis& basis, const BodyParams& body);

// A_FS applied to (v, xi) with v - P D xi interior and divergence-free; returns (A0 part, xi part).
std::pair<VecX, Vec3> apply_AFS(const ProjectionContext& ctx, const CouplingMatrices& cm, const VecX& v,
                                const Vec3& xi);

// Extended-velocity pencil: x = (interior dofs, ell, omega), u = P x.
//   E = P^T M P + diag(0, m, m, J),  A = P^T K P,  Bx = B_div P x.
struct MonolithicPencil {
  std::shared_ptr<const FormSet> forms;
  ConstraintMap map;
  BodyParams body;
  SpMat E;
  SpMat A;
  SpMat B;
  int n_red() const { return map.n_red(); }
  bool has_body() const { return map.n_rigid > 0; }
  VecX velocity(const VecX& x) const { return map.P * x; }
  Vec3 rigid(const VecX& x) const { return has_body() ? Vec3(x.tail<3>()) : Vec3::Zero(); }
  // Reduced right-hand side of (f, v) + g . eta.
  VecX load(const VecX& volume_load, const Vec3& g) const;
  // Pull a full velocity field back to reduced coordinates (interior values and rigid part).
  VecX restrict_field(const VecX& u, const Vec3& xi) const;
  double energy(const VecX& x) const { return 0.5 * x.dot(E * x); }
  double dissipation(const VecX& x) const { return x.dot(A * x); }
};

MonolithicPencil assemble_monolithic(std::shared_ptr<const FormSet> forms, const BodyParams& body);
// Body frozen: the plain Stokes pencil on interior dofs.
MonolithicPencil assemble_stokes_pencil(std::shared_ptr<const FormSet> forms);

// Force and torque exerted by the fluid on the body, tested variationally against the rigid modes:
//   F_j = -(a(u, R_j) - (p, div R_j) + (accel - f, R_j)).
Vec3 body_traction(const FormSet& forms, const VecX& u, const VecX& p, const VecX& accel, const VecX& volume_load);

}  // namespace fsilab
