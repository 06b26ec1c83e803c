#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "fsilab/evolution.hpp"

namespace fsilab {

// Truncated bivariate Taylor polynomial of total degree 3 around a point:
// f(x + d) ~ sum c_ij d_x^i d_y^j, coefficients ordered 1, x, y, x^2, xy, y^2, x^3, x^2y, xy^2, y^3.
struct Jet3 {
  std::array<double, 10> c{};

  static Jet3 constant(double v);
  static Jet3 variable(double v, int axis);
  double value() const { return c[0]; }
  // Partial derivative d^{i+j} f / dx^i dy^j for i + j <= 3.
  double derivative(int i, int j) const;
  // Univariate composition f(g) given f, f', f'', f''' at g's value.
  Jet3 compose(double f0, double f1, double f2, double f3) const;
};

Jet3 operator+(const Jet3& a, const Jet3& b);
Jet3 operator-(const Jet3& a, const Jet3& b);
Jet3 operator*(const Jet3& a, const Jet3& b);
Jet3 operator*(double s, const Jet3& a);

// psi = S((dist - alpha/8) / (alpha/8)) with S the quintic smoothstep; dist is the distance to the outer circle.
struct Cutoff {
  double r_outer = 2.0;
  double alpha = 1.5;
  double value(const Vec2& x) const;
  Jet3 jet(const Vec2& x) const;
  double distance(const Vec2& x) const { return r_outer - x.norm(); }
};

Cutoff build_cutoff(const Mesh& mesh, double alpha);
VecX cutoff_nodal(const SpacePair& s, const Cutoff& psi);

struct LambdaEval {
  Vec2 value = Vec2::Zero();
  Mat2 grad = Mat2::Zero();        // grad(i, l) = d Lambda_i / d x_l
  std::array<Mat2, 2> hess{Mat2::Zero(), Mat2::Zero()};  // hess[i](l, m) = d^2 Lambda_i / d x_l d x_m
};

// Lambda = (d_2 P, -d_1 P) with P = psi Phi and Phi the stream function of adot + omega (x - a)^perp.
class LambdaField {
 public:
  LambdaField() = default;
  LambdaField(const Cutoff& psi, const Vec2& a, const Vec2& adot, double omega);
  LambdaEval evaluate(const Vec2& x) const;
  Jet3 potential(const Vec2& x) const;

 private:
  Cutoff psi_;
  Vec2 a_ = Vec2::Zero();
  Vec2 adot_ = Vec2::Zero();
  double omega_ = 0.0;
};

// Throws ClearanceError if the body disk centred at a leaves the region where psi = 1 is guaranteed.
LambdaField build_lambda(const Cutoff& psi, const Vec2& a, const Vec2& adot, double omega, double r_body);
// Largest |div| over elements of the curl of the P2 interpolant of the potential.
double lambda_element_divergence(const SpacePair& s, const LambdaField& lam);

struct RotationSeries {
  std::vector<double> theta;
  std::vector<Mat2> Q;
};

Mat2 rotation(double theta);
// theta = integral of omega (trapezoid, exact for piecewise linear omega); Q = rotation(theta).
RotationSeries rotation_from_omega(const std::vector<double>& omega, double dt, double theta0 = 0.0);

// Body motion reconstructed from a transformed trajectory, with ell and omega linear on each step.
class RigidPath {
 public:
  RigidPath() = default;
  RigidPath(const TimeGrid& grid, std::vector<Vec2> ell, std::vector<double> omega);
  static RigidPath from_series(const MonolithicPencil& pencil, const TimeSeries& ts);
  const TimeGrid& grid() const { return grid_; }
  double theta(double t) const;
  double omega(double t) const;
  Vec2 ell(double t) const;
  Vec2 adot(double t) const { return rotation(theta(t)) * ell(t); }
  Vec2 a(double t) const;
  const RotationSeries& rotations() const { return rot_; }

 private:
  TimeGrid grid_;
  std::vector<Vec2> ell_;
  std::vector<double> omega_;
  RotationSeries rot_;
  std::vector<Vec2> a_;  // at grid points
  int interval(double t) const;
  Vec2 a_from(int n, double t) const;
};

// Flow map data at one time for every tracked point (quadrature points first, then P2 nodes).
struct MapFrame {
  double t = 0.0;
  Mat2 Q = Mat2::Identity();
  Mat2 Qdot = Mat2::Zero();
  Vec2 a = Vec2::Zero();
  Vec2 adot = Vec2::Zero();
  double omega = 0.0;
  int n_quad = 0;
  std::vector<Vec2> X, Xdot;
  std::vector<Mat2> F;                  // grad X
  std::vector<std::array<Mat2, 2>> dF;  // dF[l] = d(grad X) / d y_l
  static MapFrame identity(const SpacePair& s);
  Mat2 Z(int i) const { return F[i].inverse(); }
};

// RK4 transport of X with its first and second variational equations along Lambda.
class FlowMap {
 public:
  FlowMap(const SpacePair& s, const Cutoff& psi, const RigidPath& path, double r_body);
  const MapFrame& frame() const { return frame_; }
  int step() const { return n_; }
  int substeps() const { return substeps_; }  // RK4 substeps taken so far
  void advance();
  double max_det_drift() const;
  // max over BODY nodes of |X - (a + Q y)|
  double body_rigidity_error() const;
  double clearance() const;

 private:
  const SpacePair* space_;
  Cutoff psi_;
  RigidPath path_;
  double r_body_;
  int n_ = 0;
  int substeps_ = 0;
  std::vector<Vec2> y_;
  MapFrame frame_;
  LambdaField lambda_at(double t) const;
  void fill_velocity();
};

struct GeometrySummary {
  std::vector<double> det_drift;    // per step max |det grad X - 1|
  std::vector<double> clearance;    // per step dist(body, outer boundary)
  std::vector<double> rigidity;     // per step body rigidity error
  std::vector<double> q_orth;       // per step |Q^T Q - I|
  std::vector<Vec2> a;
  std::vector<double> theta;
  double max_det_drift() const;
  double min_clearance() const;
  double max_q_orth() const;
};

struct StateSample {
  VecX u;     // full velocity
  VecX dudt;  // full velocity
  VecX p;
  Vec2 ell = Vec2::Zero();
  double omega = 0.0;
};

struct NonlinearTerms {
  QuadField F;  // volume force at quadrature points
  VecX H;       // divergence lift at P2 nodes (velocity coefficients, zero on the boundary)
  Vec2 G1 = Vec2::Zero();
  double G2 = 0.0;
};

NonlinearTerms nonlinear_terms(const FormSet& forms, const BodyParams& body, const StateSample& st,
                               const MapFrame& maps);

struct NonlinearData {
  TimeGrid grid;
  std::vector<QuadField> F;
  std::vector<VecX> H;
  std::vector<Vec3> G;
  GeometrySummary geometry;
};

struct NonlinearProblem {
  std::shared_ptr<const FormSet> forms;
  MonolithicPencil pencil;
  BodyParams body;
  Cutoff psi;
  static NonlinearProblem create(std::shared_ptr<const FormSet> forms, const BodyParams& body);
};

// Nonlinear terms along a whole trajectory with maps regenerated from it.
NonlinearData evaluate_nonlinear(const NonlinearProblem& prob, const TimeSeries& ts);
struct NonlinearTermNorms {
  double F = 0.0;   // ||e^{eta t} F||_{Lp Lq}
  double H = 0.0;   // ||e^{eta t} H||_{Lp W2q} + ||e^{eta t} H||_{Lp Lq} + ||e^{eta t} d_t H||_{Lp Lq}
  double G1 = 0.0;  // ||e^{eta t} G1||_{Lp}
  double G2 = 0.0;
  double max() const { return std::max({F, H, G1, G2}); }
  double sum() const { return F + H + G1 + G2; }
};

NonlinearTermNorms nonlinear_term_norms(const NonlinearProblem& prob, const NonlinearData& d, double p, double q,
                                        double eta, Scheme scheme);
// Termwise a - b on the same grid.
NonlinearData difference(const NonlinearData& a, const NonlinearData& b);
// Sum of the nonlinear_term_norms.
double nonlinear_data_norm(const NonlinearProblem& prob, const NonlinearData& d, double p, double q, double eta,
                           Scheme scheme);
// S-norm of the difference of two trajectories on the same grid.
double s_norm_difference(const MonolithicPencil& pencil, const TimeSeries& a, const TimeSeries& b, double p,
                         double q, double eta);
double s_norm(const MonolithicPencil& pencil, const TimeSeries& a, double p, double q, double eta);
TimeSeries scale_series(const TimeSeries& ts, double s);

struct NonlinearOptions {
  double p = 2.0;
  double q = 2.0;
  double eta = 1.0;
  double gamma = 1e-2;
  double tol = 1e-8;
  int max_iter = 10;
  TimeGrid grid{0.05, 400};
  StepperOptions stepper{};
};

// gamma_0 = min{1, alpha / (2 C_{p,eta} (1 + diam))}, C_{p,eta} = (1/(p' eta))^{1/p'}.
double gamma0(double alpha, double diam, double p, double eta);

struct PicardIterate {
  int k = 0;
  double s_norm = 0.0;
  double diff = 0.0;
  double factor = 0.0;  // diff_k / diff_{k-1}, 0 when undefined
  bool in_ball = true;
  double data_norm = 0.0;  // nonlinear data norm of the iterate
};

struct PicardDiagnostics {
  std::vector<PicardIterate> iterates;
  double gamma = 0.0, gamma0 = 0.0, gamma_tilde = 0.0;
  double C_N = 0.0;            // max data_norm / s_norm^2
  double initial_data_norm = 0.0;
  double linear_s_norm = 0.0;  // first iterate
  double max_factor = 0.0;
  bool all_in_ball = true;
  bool small_data_gate = true;  // linear_s_norm <= gamma / 2
  bool converged = false;
  std::vector<std::string> warnings;
};

struct PicardResult {
  TimeSeries solution;
  PicardDiagnostics diag;
};

PicardResult picard_solve(const NonlinearProblem& prob, const VecX& u0, const Vec2& ell0, double omega0,
                          const NonlinearOptions& opt);

struct PhysicalSeries {
  std::vector<double> t;
  std::vector<Vec2> a;
  std::vector<double> theta, omega, clearance;
  std::vector<double> u_lq;     // over the moving fluid domain
  std::vector<double> adot;     // |a'|
  std::vector<double> decay;    // ||u||_{L^q} + |a'| + |omega|
  double min_clearance = 0.0;
  double alpha = 0.0;
  bool clearance_ok = true;
  double decay_slope = 0.0;
  double max_det_drift = 0.0;
  double max_q_orth = 0.0;
};

PhysicalSeries back_transform(const NonlinearProblem& prob, const TimeSeries& solution, double q);
double log_linear_slope(const std::vector<double>& t, const std::vector<double>& y);

}  // namespace fsilab
