#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <array>
#include <complex>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "fsilab/mesh.hpp"

namespace fsilab {

using VecX = Eigen::VectorXd;
using VecXc = Eigen::VectorXcd;
using Mat2 = Eigen::Matrix2d;
using SpMat = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<std::complex<double>>;
using Triplets = std::vector<Eigen::Triplet<double>>;

// 6-point degree-4 rule on the reference triangle (barycentric coordinates, weights sum to 1).
struct TriangleRule {
  static constexpr int n = 6;
  static const std::array<Eigen::Vector3d, n>& points();
  static const std::array<double, n>& weights();
};

// 3-point Gauss rule on [0, 1].
struct EdgeRule {
  static constexpr int n = 3;
  static const std::array<double, n>& points();
  static const std::array<double, n>& weights();
};

struct ElementGeometry {
  std::array<Vec2, 3> x;
  std::array<Vec2, 3> grad_lambda;
  double area = 0.0;
  Vec2 map(const Eigen::Vector3d& bary) const { return bary[0] * x[0] + bary[1] * x[1] + bary[2] * x[2]; }
};

// Quadratic Lagrange basis on one triangle; local nodes are the vertices then the midpoints of
// edges (0,1), (1,2), (2,0).
struct P2Basis {
  static std::array<double, 6> values(const Eigen::Vector3d& bary);
  static std::array<Vec2, 6> gradients(const ElementGeometry& g, const Eigen::Vector3d& bary);
  static std::array<Mat2, 6> hessians(const ElementGeometry& g);
};

struct BoundarySegment {
  int n0 = 0;  // P2 node at the start of the edge
  int n1 = 0;  // P2 node at the end
  int nm = 0;  // midpoint node
  BoundaryTag tag = BoundaryTag::Outer;
  Vec2 normal;  // unit outward normal of the fluid domain
  double length = 0.0;
};

struct SpacePair {
  std::shared_ptr<const Mesh> mesh;
  int n_vertices = 0;
  int n_edges = 0;
  int n_nodes = 0;  // scalar quadratic nodes: vertices then edge midpoints
  int n_vel = 0;    // 2 * n_nodes, component-blocked
  int n_pres = 0;   // linear pressure: one per vertex
  int quad_points = TriangleRule::n;
  std::vector<std::array<int, 6>> tri_nodes;
  std::vector<ElementGeometry> geom;
  std::vector<Vec2> node_coords;
  std::vector<int> node_tag;  // 0 interior, otherwise the BoundaryTag value
  std::vector<int> outer_nodes;
  std::vector<int> body_nodes;
  std::vector<BoundarySegment> boundary;

  int vel(int node, int comp) const { return comp * n_nodes + node; }
  int n_triangles() const { return static_cast<int>(tri_nodes.size()); }
  int n_quad_total() const { return n_triangles() * quad_points; }
  double total_area() const;
  // Velocity dofs per tag (both components).
  std::vector<int> boundary_dofs(BoundaryTag tag) const;
};

std::shared_ptr<const SpacePair> build_spaces(std::shared_ptr<const Mesh> mesh);

struct FormSet {
  std::shared_ptr<const SpacePair> space;
  double nu = 1.0;
  SpMat mass_vel;       // velocity mass
  SpMat stiff_vel;      // 2 nu (eps(u), eps(v))
  SpMat div;            // rows pressure, cols velocity: (q, div v)
  SpMat mass_pres;      // linear pressure mass
  SpMat weak_grad;      // rows velocity, cols pressure: (v, grad q) including boundary flux
  SpMat lap_scalar;     // quadratic scalar (grad phi, grad chi)
  SpMat mass_scalar;    // quadratic scalar mass
  VecX pres_mean;       // integral of each pressure basis function
  VecX scalar_mean;     // integral of each quadratic scalar basis function
};

std::shared_ptr<const FormSet> assemble_forms(std::shared_ptr<const SpacePair> space, double nu);

struct Field {
  VecX u;  // velocity coefficients, size n_vel
  VecX p;  // pressure coefficients, size n_pres
  bool mean_zero = false;
};

// Values of a vector field at every quadrature point, column t * 6 + k.
using QuadField = Eigen::Matrix<double, 2, Eigen::Dynamic>;

VecX interpolate_vector(const SpacePair& s, const std::function<Vec2(const Vec2&)>& f);
VecX interpolate_scalar(const SpacePair& s, const std::function<double(const Vec2&)>& f);
VecX interpolate_pressure(const SpacePair& s, const std::function<double(const Vec2&)>& f);
QuadField sample_quad(const SpacePair& s, const std::function<Vec2(const Vec2&)>& f);
QuadField velocity_at_quad(const SpacePair& s, const VecX& u);
// (f, v) for every velocity basis function v.
VecX load_vector(const SpacePair& s, const QuadField& f);

double pressure_mean(const FormSet& forms, const VecX& p);
VecX remove_pressure_mean(const FormSet& forms, const VecX& p);

// Discrete L^q norm (order 0), gradient seminorm (order 1) or broken-Hessian seminorm (order 2)
// of the velocity part, by element quadrature.
double lq_norm(const SpacePair& s, const Field& field, double q, int derivative_order);
double velocity_lq_norm(const SpacePair& s, const VecX& u, double q, int derivative_order);
double pressure_lq_norm(const SpacePair& s, const VecX& p, double q, int derivative_order);
double scalar_lq_norm(const SpacePair& s, const VecX& phi, double q, int derivative_order);
double quad_lq_norm(const SpacePair& s, const QuadField& f, double q);
// Full discrete W^{k,q} norm: sum of the seminorms up to order k.
double velocity_wkq_norm(const SpacePair& s, const VecX& u, double q, int k);
double pressure_w1q_norm(const SpacePair& s, const VecX& p, double q);

// Boundary functional <g, chi> for every quadratic scalar basis function chi, where g(x, n, tag)
// is sampled along the boundary chords.
VecX boundary_functional(const SpacePair& s,
                         const std::function<double(const Vec2& x, const Vec2& n, BoundaryTag tag)>& g);

// Name of the factorization backend in use ("umfpack" or "sparselu"). UMFPACK is used only when a
// start-up self test on a small 2D Laplacian passes.
const char* sparse_backend();

// Sparse LU with a residual check; Scalar is double or std::complex<double>.
template <typename Scalar>
class SparseSolver {
 public:
  using Mat = Eigen::SparseMatrix<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  SparseSolver() = default;
  explicit SparseSolver(Mat a, const char* what = "linear system");
  Vec solve(const Vec& rhs) const;
  // Several right-hand sides at once, one per column.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> solve_many(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rhs) const;
  double relative_residual(const Vec& x, const Vec& rhs) const;
  int rows() const { return impl_ ? static_cast<int>(impl_->a.rows()) : 0; }
  const Mat& matrix() const { return impl_->a; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  const char* what_ = "linear system";
};

// Velocity written as u = P x + lift; x holds free interior dofs and optionally three rigid dofs.
struct ConstraintMap {
  SpMat P;  // n_vel x n_red
  int n_free = 0;
  int n_rigid = 0;
  std::vector<int> free_dofs;  // velocity dof for each free reduced coordinate
  int n_red() const { return n_free + n_rigid; }
  VecX expand(const VecX& x) const { return P * x; }
};

// Interior velocity dofs only (zero on both boundaries).
ConstraintMap dirichlet_map(const SpacePair& s);
// Interior dofs plus (l1, l2, omega): body nodes move rigidly, outer nodes are fixed.
ConstraintMap rigid_map(const SpacePair& s);
// Velocity values of the rigid motion l + omega y^perp on body nodes, zero elsewhere.
VecX rigid_boundary_values(const SpacePair& s, const Vec2& ell, double omega);
// Same motion at every node.
VecX rigid_field(const SpacePair& s, const Vec2& ell, double omega);

// Saddle point [[K, -Bt], [-B, 0]] in reduced coordinates with an optional mean-zero pressure row.
template <typename Scalar>
class SaddleSolver {
 public:
  using Mat = Eigen::SparseMatrix<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  SaddleSolver() = default;
  SaddleSolver(const Mat& k, const SpMat& b_red, const VecX& pres_mean, bool fix_gauge = true);
  // K x - B^T p = f,  B x = g.
  void solve(const Vec& f, const Vec& g, Vec& x, Vec& p) const;
  Vec solve_velocity(const Vec& f) const;
  int n_red() const { return n_red_; }
  int n_pres() const { return n_pres_; }

 private:
  int n_red_ = 0;
  int n_pres_ = 0;
  bool gauge_ = true;
  SparseSolver<Scalar> solver_;
};

struct RigidData {
  Vec2 ell = Vec2::Zero();
  double omega = 0.0;
};

struct StokesOptions {
  bool fix_pressure_gauge = true;
};

// Steady Stokes: rigid data on BODY, zero on OUTER, volume load (f, v) given as a velocity vector.
Field solve_dirichlet_stokes(const FormSet& forms, const RigidData& body, const VecX& volume_load,
                             const StokesOptions& opt = {});
// General Dirichlet values at every boundary dof (interior entries of `boundary_values` are ignored).
Field solve_dirichlet_stokes_general(const FormSet& forms, const VecX& boundary_values, const VecX& volume_load,
                                     const StokesOptions& opt = {});

class NeumannSolver {
 public:
  explicit NeumannSolver(std::shared_ptr<const FormSet> forms);
  // Mean-zero quadratic phi with (grad phi, grad chi) = <flux, chi>.
  VecX solve(const VecX& flux_functional) const;

 private:
  std::shared_ptr<const FormSet> forms_;
  SparseSolver<double> solver_;
};

VecX solve_neumann_laplace(std::shared_ptr<const FormSet> forms, const VecX& flux_functional);

// Text dumps: "dof_index value" rows and "row col value" coordinate rows.
void write_field(std::ostream& os, const VecX& values);
void write_matrix(std::ostream& os, const SpMat& m);

}  // namespace fsilab
