#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsilab/coupling.hpp"

namespace fsilab {

enum class Scheme { Theta, BDF2 };
enum class CompatibilityMode { FullTrace, NormalTrace };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

struct TimeGrid {
  double dt = 0.05;
  int steps = 100;
  double time(int n) const { return n * dt; }
  double horizon() const { return steps * dt; }
};

// Data of the linear system with nonzero divergence; every callback is sampled at step n, t = n dt.
struct LinearInputs {
  TimeGrid grid;
  std::function<QuadField(int)> f;  // volume force at quadrature points
  std::function<VecX(int)> h;       // divergence lift, velocity coefficients vanishing on the boundary
  std::function<Vec3(int)> g;       // (g1, g2)
  VecX u0;                          // full velocity; empty means the rigid extension of (ell0, omega0)
  Vec2 ell0 = Vec2::Zero();
  double omega0 = 0.0;
  CompatibilityMode mode = CompatibilityMode::FullTrace;
};

// Which trace condition applies for (p, q); throws if 1/p + 1/(2q) = 1.
CompatibilityMode trace_case(double p, double q);
CompatibilityMode check_compatibility(const FormSet& forms, const VecX& u0, const Vec2& ell0, double omega0, double p,
                                      double q);

struct StepperOptions {
  Scheme scheme = Scheme::BDF2;
  double theta = 1.0;     // Theta scheme only
  double diag_q = 2.0;    // exponent of the per-step norm diagnostics
  bool diagnostics = true;
};

// One implicit step at a time of  E x' + A x - B^T p = L(t),  B x = B_div h(t).
class LinearStepper {
 public:
  LinearStepper(const MonolithicPencil& pencil, double dt, const StepperOptions& opt = {});
  // Advance from x_n (and x_{n-1} for BDF2, empty on the first step) to x_{n+1}.
  void step(const VecX& x_n, const VecX& x_nm1, const VecX& load_n, const VecX& load_np1, const VecX& div_np1,
            VecX& x_np1, VecX& p_np1) const;
  double dt() const { return dt_; }
  const StepperOptions& options() const { return opt_; }

 private:
  const MonolithicPencil* pencil_;
  double dt_;
  StepperOptions opt_;
  SaddleSolver<double> first_;   // implicit Euler or theta
  SaddleSolver<double> second_;  // BDF2
};

struct TimeSeries {
  TimeGrid grid;
  Scheme scheme = Scheme::BDF2;
  std::vector<VecX> x;  // reduced state per step
  std::vector<VecX> p;  // pressure per step (p[0] from a consistent steady solve)
  std::vector<double> energy;
  double diag_q = 2.0;
  std::vector<double> u_lq, u_w2q, p_w1q;
  int size() const { return static_cast<int>(x.size()); }
};

// Reduced right-hand side of step n.
VecX assemble_load(const MonolithicPencil& pencil, const LinearInputs& in, int n);
VecX initial_state(const MonolithicPencil& pencil, const LinearInputs& in);

TimeSeries simulate_linear(const MonolithicPencil& pencil, const LinearInputs& in, const StepperOptions& opt = {});

// Time derivative by the stencil the scheme used: forward at n = 0, backward Euler at n = 1 (and always
// for Theta), BDF2 otherwise.
std::vector<VecX> time_derivative(const std::vector<VecX>& y, double dt, Scheme scheme);

// (sum_n w_n exp(eta p t_n) a_n^p dt)^{1/p} with trapezoid weights.
double weighted_lp(const std::vector<double>& a, double dt, double p, double eta);

struct NormReport {
  double p = 2.0, q = 2.0, eta = 0.0;
  // solution terms
  double u_w2q = 0.0, u_lq = 0.0, dtu_lq = 0.0, pi_w1q = 0.0;
  double ell = 0.0, dell = 0.0, omega = 0.0, domega = 0.0;
  // data terms
  double u0_besov = 0.0, ell0 = 0.0, omega0 = 0.0, f_lq = 0.0, h_w21 = 0.0, g1 = 0.0, g2 = 0.0;
  double solution_norm = 0.0;
  double data_norm = 0.0;
  double ratio = 0.0;
  bool eta_warning = false;
};

// Discrete stand-in for the B^{2(1-1/p)}_{q,p} norm: ||u||_q plus the interpolated seminorm between the two
// Sobolev levels bracketing s = 2(1 - 1/p).
double besov_proxy(const SpacePair& s, const VecX& u0, double p, double q);

// S-norm terms of a trajectory (without data terms).
NormReport solution_norms(const MonolithicPencil& pencil, const TimeSeries& series, double p, double q, double eta);
NormReport norm_accounting(const MonolithicPencil& pencil, const TimeSeries& series, const LinearInputs& in, double p,
                           double q, double eta, std::optional<double> eta0 = std::nullopt);

// Seeded smooth forcing: random low-frequency volume force, a divergence lift with a bump profile,
// body force and torque, and a lifted initial state.
struct ForcingMember {
  std::array<Vec2, 3> fk;       // wave vectors
  std::array<Vec2, 3> fa;       // amplitudes
  std::array<double, 3> fphase;
  Vec2 hk;
  Vec2 ha;
  double hphase = 0.0;
  Vec3 g = Vec3::Zero();
  Vec3 xi0 = Vec3::Zero();
  double rate = 1.0;  // temporal envelope t exp(-rate t)
};

ForcingMember random_member(std::mt19937_64& rng);
// Inputs on a given discretisation; the lifting basis provides u0 = D(xi0).
LinearInputs member_inputs(const ForcingMember& m, const FormSet& forms, const LiftingBasis& basis,
                           const TimeGrid& grid, double scale = 1.0);

struct MaxRegResult {
  std::vector<double> ratios;
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
};

MaxRegResult maxreg_ensemble(const MonolithicPencil& pencil, const LiftingBasis& basis, const TimeGrid& grid,
                             const std::vector<ForcingMember>& members, double p, double q, double eta,
                             const StepperOptions& opt = {});

// Columns t, l1, l2, omega, energy, u_lq, u_w2q, p_w1q.
void write_series_csv(std::ostream& os, const MonolithicPencil& pencil, const TimeSeries& series);

}  // namespace fsilab
