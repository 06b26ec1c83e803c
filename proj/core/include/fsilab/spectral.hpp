#pragma once

#include <complex>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fsilab/coupling.hpp"

namespace fsilab {

using cplx = std::complex<double>;

struct KrylovOptions {
  int block = 4;          // block size; must exceed the largest eigenvalue multiplicity wanted
  int max_dim = 400;      // largest subspace before giving up
  double tol = 1e-10;     // relative Ritz residual of the shift-inverted operator
  double shift = 0.0;     // real shift sigma
  std::uint64_t seed = 7;
};

struct SpectrumReport {
  std::vector<cplx> eigenvalues;  // rightmost first
  std::vector<double> residuals;  // relative residual of each pair (shift-inverted form)
  std::vector<VecX> vectors;      // real parts of the reduced eigenvectors (monolithic path only)
  double abscissa = 0.0;
  double eta0 = 0.0;
  int dimension = 0;
  int krylov_dim = 0;
  std::string mesh_id;
  double tolerance = 0.0;
  bool converged = false;
};

// k rightmost eigenvalues of  -A x = lambda E x,  B x = 0.
SpectrumReport eigen_spectrum(const MonolithicPencil& pencil, int k, const KrylovOptions& opt = {});
// k rightmost eigenvalues of the reduced fluid-structure pencil.
SpectrumReport eigen_spectrum_afs(const AFSPencil& pencil, int k, const KrylovOptions& opt = {});
// Dense reference solves on a null-space basis of the constraint (small meshes only).
SpectrumReport dense_spectrum(const MonolithicPencil& pencil, int k);
SpectrumReport dense_spectrum_afs(const AFSPencil& pencil, int k);

// Relative residual of Re(lambda) x^T E x = -x^T A x at a computed eigenvector.
double energy_identity_residual(const MonolithicPencil& pencil, cplx lambda, const VecX& x);

std::string mesh_id(const Mesh& mesh);

// Factorised lambda E + A with the divergence constraint; solves (lambda E + A) x - B^T p = rhs, B x = 0.
class Resolvent {
 public:
  Resolvent(const MonolithicPencil& pencil, cplx lambda);
  cplx lambda() const { return lambda_; }
  VecXc solve(const VecXc& rhs) const;
  VecXc solve(const VecXc& rhs, VecXc& pressure) const;
  // lambda (lambda - A)^{-1} F, with the operator realised as E^{-1}(-A) on the constrained space.
  VecXc apply(const VecXc& F) const;
  // Euclidean adjoint of apply().
  VecXc apply_adjoint(const VecXc& z) const;

 private:
  const MonolithicPencil* pencil_;
  cplx lambda_;
  SaddleSolver<cplx> solver_;
};

struct ResolventSolution {
  VecXc u;  // full velocity
  VecXc p;
  Eigen::Vector2cd ell;
  cplx omega;
  double residual = 0.0;
};

// Coupled resolvent system with volume force f (full velocity field) and body force / torque g.
ResolventSolution resolvent_solve(const MonolithicPencil& pencil, cplx lambda, const VecXc& f,
                                  const Eigen::Vector2cd& g1, cplx g2);

// Discrete norms on reduced coordinates: q = 2 uses the E inner product, otherwise a weighted l^q
// with positive lumped weights.
class ReducedNorm {
 public:
  ReducedNorm(const MonolithicPencil& pencil, double q);
  double q() const { return q_; }
  double operator()(const VecXc& x) const;
  const VecX& weights() const { return w_; }

 private:
  const MonolithicPencil* pencil_;
  double q_;
  VecX w_;
};

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  VecXc maximiser;  // unit vector attaining the estimate
};

// Operator norm of lambda (lambda - A)^{-1} by power iteration (q = 2) or Boyd's q-norm iteration.
NormEstimate resolvent_norm(const Resolvent& r, const ReducedNorm& norm, int max_iter = 20, double tol = 1e-6,
                            std::uint64_t seed = 11);

struct LambdaGrid {
  double r_min = 0.1;
  double r_max = 1000.0;
  int n_radii = 9;
  int n_angles = 7;            // on [-pi/2, pi/2]
  double sector_angle = 0.75 * 3.141592653589793;  // rays arg = +-theta
  bool include_sector = true;
  std::vector<cplx> points() const;
};

struct ScanPoint {
  cplx lambda;
  double norm = 0.0;
  bool ok = true;
  std::string error;
};

struct ScanReport {
  std::vector<ScanPoint> points;
  double sup = 0.0;
  double sup_right_half = 0.0;
  double q = 2.0;
  int failures = 0;
};

ScanReport resolvent_scan(const MonolithicPencil& pencil, const std::vector<cplx>& lambdas, double q,
                          int max_iter = 20, double tol = 1e-6);

struct RBoundOptions {
  int n = 4;            // operators per family
  int trials = 40;      // random families
  int sign_samples = 256;
  double p = 2.0;       // exponent of the Rademacher average
  double q = 2.0;       // space exponent
  std::uint64_t seed = 12345;
};

struct RBoundEstimate {
  int n = 0;
  int trials = 0;
  double p = 2.0;
  double q = 2.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double uniform_bound = 0.0;  // max single-operator norm over the samples
  std::vector<double> trial_ratios;
};

RBoundEstimate estimate_r_bound(const MonolithicPencil& pencil, const std::vector<cplx>& lambda_samples,
                                const RBoundOptions& opt);

}  // namespace fsilab
