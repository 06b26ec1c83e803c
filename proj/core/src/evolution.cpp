#include "fsilab/evolution.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "fsilab/errors.hpp"

namespace fsilab {

const char* scheme_name(Scheme s) { return s == Scheme::BDF2 ? "bdf2" : "theta"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "bdf2" || name == "BDF2") return Scheme::BDF2;
  if (name == "theta" || name == "THETA") return Scheme::Theta;
  throw Error("unknown time scheme '" + name + "' (expected bdf2 or theta)");
}

CompatibilityMode trace_case(double p, double q) {
  if (!(p > 1.0) || !(q > 1.0)) throw Error("exponents p and q must exceed 1");
  const double s = 1.0 / p + 1.0 / (2.0 * q);
  if (std::abs(s - 1.0) < 1e-12) {
    throw CompatibilityError("1/p + 1/(2q) = 1 is excluded", "1/p + 1/(2q) != 1", 0.0);
  }
  return s < 1.0 ? CompatibilityMode::FullTrace : CompatibilityMode::NormalTrace;
}

CompatibilityMode check_compatibility(const FormSet& forms, const VecX& u0, const Vec2& ell0, double omega0, double p,
                                      double q) {
  const CompatibilityMode mode = trace_case(p, q);
  const SpacePair& s = *forms.space;
  const VecX rig = rigid_boundary_values(s, ell0, omega0);
  const double scale = std::max({u0.lpNorm<Eigen::Infinity>(), rig.lpNorm<Eigen::Infinity>(), 1e-300});
  const double tol = 1e-8;

  const VecX div = forms.div * u0;
  const double dres = div.lpNorm<Eigen::Infinity>() / scale;
  if (dres > tol) {
    std::ostringstream ss;
    ss << "initial velocity is not divergence-free (residual " << dres << ")";
    throw CompatibilityError(ss.str(), "div u0 = 0", dres);
  }
  if (mode == CompatibilityMode::FullTrace) {
    double body = 0.0, outer = 0.0;
    for (int n = 0; n < s.n_nodes; ++n) {
      if (s.node_tag[n] == 0) continue;
      const Vec2 v(u0[s.vel(n, 0)] - rig[s.vel(n, 0)], u0[s.vel(n, 1)] - rig[s.vel(n, 1)]);
      double& slot = s.node_tag[n] == static_cast<int>(BoundaryTag::Body) ? body : outer;
      slot = std::max(slot, v.norm() / scale);
    }
    if (body > tol) {
      std::ostringstream ss;
      ss << "u0 does not match ell0 + omega0 y^perp on the body (residual " << body << ")";
      throw CompatibilityError(ss.str(), "u0 = ell0 + omega0 y^perp on the body", body);
    }
    if (outer > tol) {
      std::ostringstream ss;
      ss << "u0 does not vanish on the outer boundary (residual " << outer << ")";
      throw CompatibilityError(ss.str(), "u0 = 0 on the outer boundary", outer);
    }
  } else {
    double body = 0.0, outer = 0.0;
    for (const auto& seg : s.boundary) {
      for (int n : {seg.n0, seg.nm, seg.n1}) {
        const Vec2 v(u0[s.vel(n, 0)] - rig[s.vel(n, 0)], u0[s.vel(n, 1)] - rig[s.vel(n, 1)]);
        double& slot = seg.tag == BoundaryTag::Body ? body : outer;
        slot = std::max(slot, std::abs(v.dot(seg.normal)) / scale);
      }
    }
    if (body > tol) {
      std::ostringstream ss;
      ss << "normal trace of u0 does not match the rigid motion on the body (residual " << body << ")";
      throw CompatibilityError(ss.str(), "u0 . n = (ell0 + omega0 y^perp) . n on the body", body);
    }
    if (outer > tol) {
      std::ostringstream ss;
      ss << "normal trace of u0 does not vanish on the outer boundary (residual " << outer << ")";
      throw CompatibilityError(ss.str(), "u0 . n = 0 on the outer boundary", outer);
    }
  }
  return mode;
}

LinearStepper::LinearStepper(const MonolithicPencil& pencil, double dt, const StepperOptions& opt)
    : pencil_(&pencil), dt_(dt), opt_(opt) {
  if (!(dt > 0.0)) throw Error("time step must be positive");
  if (opt.scheme == Scheme::Theta && !(opt.theta >= 0.5 && opt.theta <= 1.0)) {
    throw Error("theta must lie in [0.5, 1]");
  }
  const double th = opt.scheme == Scheme::Theta ? opt.theta : 1.0;
  const SpMat k1 = pencil.E / dt + th * pencil.A;
  first_ = SaddleSolver<double>(k1, pencil.B, pencil.forms->pres_mean, true);
  if (opt.scheme == Scheme::BDF2) {
    const SpMat k2 = 1.5 * pencil.E / dt + pencil.A;
    second_ = SaddleSolver<double>(k2, pencil.B, pencil.forms->pres_mean, true);
  }
}

void LinearStepper::step(const VecX& x_n, const VecX& x_nm1, const VecX& load_n, const VecX& load_np1,
                         const VecX& div_np1, VecX& x_np1, VecX& p_np1) const {
  const MonolithicPencil& pc = *pencil_;
  VecX rhs;
  if (opt_.scheme == Scheme::BDF2 && x_nm1.size()) {
    rhs = pc.E * (4.0 * x_n - x_nm1) / (2.0 * dt_) + load_np1;
    second_.solve(rhs, div_np1, x_np1, p_np1);
    return;
  }
  const double th = opt_.scheme == Scheme::Theta ? opt_.theta : 1.0;
  rhs = pc.E * x_n / dt_ + th * load_np1;
  if (th < 1.0) rhs += (1.0 - th) * (load_n - pc.A * x_n);
  first_.solve(rhs, div_np1, x_np1, p_np1);
}

VecX assemble_load(const MonolithicPencil& pencil, const LinearInputs& in, int n) {
  const SpacePair& s = *pencil.forms->space;
  VecX vol;
  if (in.f) vol = load_vector(s, in.f(n));
  const Vec3 g = in.g ? in.g(n) : Vec3::Zero();
  return pencil.load(vol, g);
}

VecX initial_state(const MonolithicPencil& pencil, const LinearInputs& in) {
  const SpacePair& s = *pencil.forms->space;
  const Vec3 xi(in.ell0.x(), in.ell0.y(), in.omega0);
  if (in.u0.size() == 0) return pencil.restrict_field(rigid_boundary_values(s, in.ell0, in.omega0), xi);
  if (in.u0.size() != s.n_vel) throw Error("initial velocity has the wrong size");
  return pencil.restrict_field(in.u0, xi);
}

namespace {

VecX divergence_data(const MonolithicPencil& pencil, const LinearInputs& in, int n) {
  if (!in.h) return VecX::Zero(pencil.B.rows());
  return pencil.forms->div * in.h(n);
}

void record_diagnostics(const MonolithicPencil& pencil, TimeSeries& ts, int n) {
  const SpacePair& s = *pencil.forms->space;
  ts.energy[n] = pencil.energy(ts.x[n]);
  const VecX u = pencil.velocity(ts.x[n]);
  ts.u_lq[n] = velocity_lq_norm(s, u, ts.diag_q, 0);
  ts.u_w2q[n] = velocity_wkq_norm(s, u, ts.diag_q, 2);
  ts.p_w1q[n] = pressure_w1q_norm(s, ts.p[n], ts.diag_q);
}

}  // namespace

TimeSeries simulate_linear(const MonolithicPencil& pencil, const LinearInputs& in, const StepperOptions& opt) {
  const int N = in.grid.steps;
  if (N < 1) throw Error("time grid needs at least one step");
  LinearStepper stepper(pencil, in.grid.dt, opt);
  TimeSeries ts;
  ts.grid = in.grid;
  ts.scheme = opt.scheme;
  ts.diag_q = opt.diag_q;
  ts.x.resize(N + 1);
  ts.p.resize(N + 1);
  ts.energy.assign(N + 1, 0.0);
  ts.u_lq.assign(N + 1, 0.0);
  ts.u_w2q.assign(N + 1, 0.0);
  ts.p_w1q.assign(N + 1, 0.0);
  ts.x[0] = initial_state(pencil, in);
  VecX load_prev = assemble_load(pencil, in, 0);
  for (int n = 0; n < N; ++n) {
    const VecX load_next = assemble_load(pencil, in, n + 1);
    const VecX div = divergence_data(pencil, in, n + 1);
    try {
      stepper.step(ts.x[n], n > 0 ? ts.x[n - 1] : VecX(), load_prev, load_next, div, ts.x[n + 1], ts.p[n + 1]);
    } catch (const SolverError& e) {
      std::ostringstream ss;
      ss << "step " << n + 1 << " (t = " << in.grid.time(n + 1) << ", " << scheme_name(opt.scheme)
         << "): " << e.what();
      throw SolverError(ss.str());
    }
    load_prev = load_next;
  }
  // no pressure at t = 0 without an acceleration solve; reuse the first computed one
  ts.p[0] = ts.p[1];
  ts.energy[0] = pencil.energy(ts.x[0]);
  for (int n = 0; n <= N; ++n) {
    if (opt.diagnostics) {
      record_diagnostics(pencil, ts, n);
    } else {
      ts.energy[n] = pencil.energy(ts.x[n]);
    }
  }
  return ts;
}

std::vector<VecX> time_derivative(const std::vector<VecX>& y, double dt, Scheme scheme) {
  const int n = static_cast<int>(y.size());
  std::vector<VecX> d(n);
  if (n < 2) {
    for (auto& v : d) v = VecX::Zero(y.empty() ? 0 : y[0].size());
    return d;
  }
  d[0] = (y[1] - y[0]) / dt;
  for (int i = 1; i < n; ++i) {
    if (scheme == Scheme::BDF2 && i >= 2) {
      d[i] = (3.0 * y[i] - 4.0 * y[i - 1] + y[i - 2]) / (2.0 * dt);
    } else {
      d[i] = (y[i] - y[i - 1]) / dt;
    }
  }
  return d;
}

double weighted_lp(const std::vector<double>& a, double dt, double p, double eta) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  if (n == 1) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    sum += w * std::exp(eta * p * i * dt) * std::pow(std::abs(a[i]), p);
  }
  return std::pow(sum * dt, 1.0 / p);
}

double besov_proxy(const SpacePair& s, const VecX& u0, double p, double q) {
  const double sm = 2.0 * (1.0 - 1.0 / p);
  const double l0 = velocity_lq_norm(s, u0, q, 0);
  const double w1 = velocity_wkq_norm(s, u0, q, 1);
  if (l0 == 0.0 && w1 == 0.0) return 0.0;
  if (sm <= 1.0) return l0 + std::pow(l0, 1.0 - sm) * std::pow(w1, sm);
  const double w2 = velocity_wkq_norm(s, u0, q, 2);
  return l0 + std::pow(w1, 2.0 - sm) * std::pow(w2, sm - 1.0);
}

NormReport solution_norms(const MonolithicPencil& pencil, const TimeSeries& ts, double p, double q, double eta) {
  const SpacePair& s = *pencil.forms->space;
  const double dt = ts.grid.dt;
  const int N = ts.size();
  NormReport r;
  r.p = p;
  r.q = q;
  r.eta = eta;
  std::vector<VecX> u(N);
  for (int n = 0; n < N; ++n) u[n] = pencil.velocity(ts.x[n]);
  const auto du = time_derivative(u, dt, ts.scheme);
  const auto dx = time_derivative(ts.x, dt, ts.scheme);
  std::vector<double> a(N), b(N), c(N), d(N), e(N), f(N), g(N), h(N);
  for (int n = 0; n < N; ++n) {
    a[n] = velocity_wkq_norm(s, u[n], q, 2);
    b[n] = velocity_lq_norm(s, u[n], q, 0);
    c[n] = velocity_lq_norm(s, du[n], q, 0);
    d[n] = pressure_w1q_norm(s, ts.p[n], q);
    const Vec3 xi = pencil.rigid(ts.x[n]);
    const Vec3 dxi = pencil.rigid(dx[n]);
    e[n] = xi.head<2>().norm();
    f[n] = dxi.head<2>().norm();
    g[n] = std::abs(xi[2]);
    h[n] = std::abs(dxi[2]);
  }
  r.u_w2q = weighted_lp(a, dt, p, eta);
  r.u_lq = weighted_lp(b, dt, p, eta);
  r.dtu_lq = weighted_lp(c, dt, p, eta);
  r.pi_w1q = weighted_lp(d, dt, p, eta);
  r.ell = weighted_lp(e, dt, p, eta);
  r.dell = weighted_lp(f, dt, p, eta);
  r.omega = weighted_lp(g, dt, p, eta);
  r.domega = weighted_lp(h, dt, p, eta);
  r.solution_norm = r.u_w2q + r.u_lq + r.dtu_lq + r.pi_w1q + r.ell + r.dell + r.omega + r.domega;
  return r;
}

NormReport norm_accounting(const MonolithicPencil& pencil, const TimeSeries& ts, const LinearInputs& in, double p,
                           double q, double eta, std::optional<double> eta0) {
  NormReport r = solution_norms(pencil, ts, p, q, eta);
  const SpacePair& s = *pencil.forms->space;
  const double dt = ts.grid.dt;
  const int N = ts.size();
  if (eta0 && eta >= *eta0) r.eta_warning = true;

  const VecX x0 = ts.x[0];
  r.u0_besov = besov_proxy(s, pencil.velocity(x0), p, q);
  const Vec3 xi0 = pencil.rigid(x0);
  r.ell0 = xi0.head<2>().norm();
  r.omega0 = std::abs(xi0[2]);
  if (in.f) {
    std::vector<double> a(N);
    for (int n = 0; n < N; ++n) a[n] = quad_lq_norm(s, in.f(n), q);
    r.f_lq = weighted_lp(a, dt, p, eta);
  }
  if (in.h) {
    std::vector<VecX> hs(N);
    for (int n = 0; n < N; ++n) hs[n] = in.h(n);
    const auto dh = time_derivative(hs, dt, ts.scheme);
    std::vector<double> a(N), b(N), c(N);
    for (int n = 0; n < N; ++n) {
      a[n] = velocity_wkq_norm(s, hs[n], q, 2);
      b[n] = velocity_lq_norm(s, hs[n], q, 0);
      c[n] = velocity_lq_norm(s, dh[n], q, 0);
    }
    r.h_w21 = weighted_lp(a, dt, p, eta) + weighted_lp(b, dt, p, eta) + weighted_lp(c, dt, p, eta);
  }
  if (in.g) {
    std::vector<double> a(N), b(N);
    for (int n = 0; n < N; ++n) {
      const Vec3 g = in.g(n);
      a[n] = g.head<2>().norm();
      b[n] = std::abs(g[2]);
    }
    r.g1 = weighted_lp(a, dt, p, eta);
    r.g2 = weighted_lp(b, dt, p, eta);
  }
  r.data_norm = r.u0_besov + r.ell0 + r.omega0 + r.f_lq + r.h_w21 + r.g1 + r.g2;
  r.ratio = r.data_norm > 0.0 ? r.solution_norm / r.data_norm : 0.0;
  return r;
}

ForcingMember random_member(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> wave(-2.0, 2.0), phase(0.0, 2.0 * std::numbers::pi), rate(0.5, 2.0);
  std::normal_distribution<double> nd;
  ForcingMember m;
  for (int k = 0; k < 3; ++k) {
    m.fk[k] = Vec2(wave(rng), wave(rng));
    m.fa[k] = Vec2(nd(rng), nd(rng));
    m.fphase[k] = phase(rng);
  }
  m.hk = Vec2(wave(rng), wave(rng));
  m.ha = Vec2(nd(rng), nd(rng));
  m.hphase = phase(rng);
  m.g = Vec3(nd(rng), nd(rng), nd(rng));
  m.xi0 = 0.5 * Vec3(nd(rng), nd(rng), nd(rng));
  m.rate = rate(rng);
  return m;
}

LinearInputs member_inputs(const ForcingMember& m, const FormSet& forms, const LiftingBasis& basis,
                           const TimeGrid& grid, double scale) {
  const SpacePair& s = *forms.space;
  const Mesh& mesh = *s.mesh;
  const double ri = mesh.r_inner, ro = mesh.r_outer;
  auto env = [m, grid](int n) {
    const double t = grid.time(n);
    return m.rate * std::numbers::e * t * std::exp(-m.rate * t);
  };
  LinearInputs in;
  in.grid = grid;
  const QuadField fshape = sample_quad(s, [m](const Vec2& x) {
    Vec2 v = Vec2::Zero();
    for (int k = 0; k < 3; ++k) v += m.fa[k] * std::sin(m.fk[k].dot(x) + m.fphase[k]);
    return v;
  });
  in.f = [fshape, env, scale](int n) { return QuadField(scale * env(n) * fshape); };
  VecX hshape = interpolate_vector(s, [m, ri, ro](const Vec2& x) {
    const double r = x.norm();
    const double b = 16.0 * std::pow((r - ri) * (ro - r), 2) / std::pow(ro - ri, 4);
    return Vec2(b * m.ha * std::cos(m.hk.dot(x) + m.hphase));
  });
  for (int n = 0; n < s.n_nodes; ++n) {
    if (s.node_tag[n] != 0) {
      hshape[s.vel(n, 0)] = 0.0;
      hshape[s.vel(n, 1)] = 0.0;
    }
  }
  in.h = [hshape, env, scale](int n) { return VecX(scale * env(n) * hshape); };
  in.g = [m, env, scale](int n) { return Vec3(scale * env(n) * m.g); };
  in.u0 = scale * basis.velocity(m.xi0);
  in.ell0 = scale * m.xi0.head<2>();
  in.omega0 = scale * m.xi0[2];
  return in;
}

MaxRegResult maxreg_ensemble(const MonolithicPencil& pencil, const LiftingBasis& basis, const TimeGrid& grid,
                             const std::vector<ForcingMember>& members, double p, double q, double eta,
                             const StepperOptions& opt) {
  StepperOptions o = opt;
  o.diagnostics = false;
  MaxRegResult res;
  for (const auto& m : members) {
    const LinearInputs in = member_inputs(m, *pencil.forms, basis, grid);
    const TimeSeries ts = simulate_linear(pencil, in, o);
    const NormReport nr = norm_accounting(pencil, ts, in, p, q, eta);
    res.ratios.push_back(nr.ratio);
    res.max_ratio = std::max(res.max_ratio, nr.ratio);
    res.mean_ratio += nr.ratio / members.size();
  }
  return res;
}

void write_series_csv(std::ostream& os, const MonolithicPencil& pencil, const TimeSeries& ts) {
  os << "t,l1,l2,omega,energy,u_lq,u_w2q,p_w1q\n";
  os.precision(12);
  for (int n = 0; n < ts.size(); ++n) {
    const Vec3 xi = pencil.rigid(ts.x[n]);
    os << ts.grid.time(n) << ',' << xi[0] << ',' << xi[1] << ',' << xi[2] << ',' << ts.energy[n] << ','
       << ts.u_lq[n] << ',' << ts.u_w2q[n] << ',' << ts.p_w1q[n] << '\n';
  }
}

}  // namespace fsilab
