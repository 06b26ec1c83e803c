#include "fsilab/nonlinear.hpp"

#include <cmath>
#include <sstream>

#include "fsilab/errors.hpp"

namespace fsilab {

namespace {

constexpr int kExp[10][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};

int jet_index(int i, int j) {
  const int d = i + j;
  const int base = d * (d + 1) / 2;
  return base + j;
}

struct ProductTable {
  std::vector<std::array<int, 3>> terms;
  ProductTable() {
    for (int a = 0; a < 10; ++a) {
      for (int b = 0; b < 10; ++b) {
        const int i = kExp[a][0] + kExp[b][0], j = kExp[a][1] + kExp[b][1];
        if (i + j <= 3) terms.push_back({a, b, jet_index(i, j)});
      }
    }
  }
};

const ProductTable& products() {
  static const ProductTable t;
  return t;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

Mat2 perp_matrix() {
  Mat2 j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

}  // namespace

Jet3 Jet3::constant(double v) {
  Jet3 j;
  j.c[0] = v;
  return j;
}

Jet3 Jet3::variable(double v, int axis) {
  Jet3 j;
  j.c[0] = v;
  j.c[axis == 0 ? 1 : 2] = 1.0;
  return j;
}

double Jet3::derivative(int i, int j) const { return c[jet_index(i, j)] * factorial(i) * factorial(j); }

Jet3 Jet3::compose(double f0, double f1, double f2, double f3) const {
  Jet3 g = *this;
  g.c[0] = 0.0;
  const Jet3 g2 = g * g;
  const Jet3 g3 = g2 * g;
  Jet3 r = f1 * g + (0.5 * f2) * g2 + (f3 / 6.0) * g3;
  r.c[0] += f0;
  return r;
}

Jet3 operator+(const Jet3& a, const Jet3& b) {
  Jet3 r;
  for (int i = 0; i < 10; ++i) r.c[i] = a.c[i] + b.c[i];
  return r;
}

Jet3 operator-(const Jet3& a, const Jet3& b) {
  Jet3 r;
  for (int i = 0; i < 10; ++i) r.c[i] = a.c[i] - b.c[i];
  return r;
}

Jet3 operator*(const Jet3& a, const Jet3& b) {
  Jet3 r;
  for (const auto& t : products().terms) r.c[t[2]] += a.c[t[0]] * b.c[t[1]];
  return r;
}

Jet3 operator*(double s, const Jet3& a) {
  Jet3 r;
  for (int i = 0; i < 10; ++i) r.c[i] = s * a.c[i];
  return r;
}

namespace {

double smoothstep(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }

}  // namespace

double Cutoff::value(const Vec2& x) const {
  const double w = alpha / 8.0;
  const double t = (distance(x) - w) / w;
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return smoothstep(t);
}

Jet3 Cutoff::jet(const Vec2& x) const {
  const double w = alpha / 8.0;
  const double t0 = (distance(x) - w) / w;
  if (t0 <= 0.0) return Jet3::constant(0.0);
  if (t0 >= 1.0) return Jet3::constant(1.0);
  const Jet3 X = Jet3::variable(x.x(), 0), Y = Jet3::variable(x.y(), 1);
  const Jet3 r2 = X * X + Y * Y;
  const double s = r2.value();
  const double r = std::sqrt(s);
  const Jet3 rj = r2.compose(r, 0.5 / r, -0.25 / (s * r), 0.375 / (s * s * r));
  const Jet3 tau = (1.0 / w) * (Jet3::constant(r_outer - w) - rj);
  const double t = t0;
  const double s1 = 30.0 * t * t * (t - 1.0) * (t - 1.0);
  const double s2 = 60.0 * t * (2.0 * t * t - 3.0 * t + 1.0);
  const double s3 = 60.0 * (6.0 * t * t - 6.0 * t + 1.0);
  return tau.compose(smoothstep(t), s1, s2, s3);
}

Cutoff build_cutoff(const Mesh& mesh, double alpha) {
  if (!(alpha > 0.0)) throw GeometryError("cutoff width alpha must be positive");
  Cutoff c;
  c.r_outer = mesh.r_outer;
  c.alpha = alpha;
  return c;
}

VecX cutoff_nodal(const SpacePair& s, const Cutoff& psi) {
  return interpolate_scalar(s, [&](const Vec2& x) { return psi.value(x); });
}

LambdaField::LambdaField(const Cutoff& psi, const Vec2& a, const Vec2& adot, double omega)
    : psi_(psi), a_(a), adot_(adot), omega_(omega) {}

Jet3 LambdaField::potential(const Vec2& x) const {
  const Jet3 X = Jet3::variable(x.x(), 0), Y = Jet3::variable(x.y(), 1);
  const Jet3 dx = X - Jet3::constant(a_.x()), dy = Y - Jet3::constant(a_.y());
  const Jet3 phi = adot_.x() * Y - adot_.y() * X - (0.5 * omega_) * (dx * dx + dy * dy);
  return psi_.jet(x) * phi;
}

LambdaEval LambdaField::evaluate(const Vec2& x) const {
  LambdaEval e;
  const Jet3 psi = psi_.jet(x);
  bool rigid = true;
  for (int i = 1; i < 10; ++i) rigid = rigid && psi.c[i] == 0.0;
  if (rigid) {
    // psi is locally constant: Lambda = psi (adot + omega (x - a)^perp)
    const double v = psi.c[0];
    e.value = v * (adot_ + omega_ * perp(x - a_));
    e.grad = v * omega_ * perp_matrix();
    return e;
  }
  const Jet3 P = potential(x);
  const double px = P.derivative(1, 0), py = P.derivative(0, 1);
  const double pxx = P.derivative(2, 0), pxy = P.derivative(1, 1), pyy = P.derivative(0, 2);
  const double pxxx = P.derivative(3, 0), pxxy = P.derivative(2, 1), pxyy = P.derivative(1, 2),
               pyyy = P.derivative(0, 3);
  e.value = Vec2(py, -px);
  e.grad << pxy, pyy, -pxx, -pxy;
  e.hess[0] << pxxy, pxyy, pxyy, pyyy;
  e.hess[1] << -pxxx, -pxxy, -pxxy, -pxyy;
  return e;
}

LambdaField build_lambda(const Cutoff& psi, const Vec2& a, const Vec2& adot, double omega, double r_body) {
  const double clearance = psi.r_outer - a.norm() - r_body;
  if (clearance < psi.alpha / 2.0) {
    std::ostringstream ss;
    ss << "body too close to the outer wall: clearance " << clearance << " < alpha/2 = " << psi.alpha / 2.0;
    throw ClearanceError(ss.str(), clearance);
  }
  return LambdaField(psi, a, adot, omega);
}

double lambda_element_divergence(const SpacePair& s, const LambdaField& lam) {
  const VecX P = interpolate_scalar(s, [&](const Vec2& x) { return lam.potential(x).value(); });
  double worst = 0.0;
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto hs = P2Basis::hessians(s.geom[t]);
    double div = 0.0;
    for (int a = 0; a < 6; ++a) div += P[s.tri_nodes[t][a]] * (hs[a](0, 1) - hs[a](1, 0));
    worst = std::max(worst, std::abs(div));
  }
  return worst;
}

Mat2 rotation(double theta) {
  Mat2 q;
  const double c = std::cos(theta), s = std::sin(theta);
  q << c, -s, s, c;
  return q;
}

RotationSeries rotation_from_omega(const std::vector<double>& omega, double dt, double theta0) {
  RotationSeries r;
  if (omega.empty()) return r;
  r.theta.resize(omega.size());
  r.theta[0] = theta0;
  for (std::size_t n = 1; n < omega.size(); ++n) r.theta[n] = r.theta[n - 1] + 0.5 * dt * (omega[n - 1] + omega[n]);
  for (double th : r.theta) r.Q.push_back(rotation(th));
  return r;
}

RigidPath::RigidPath(const TimeGrid& grid, std::vector<Vec2> ell, std::vector<double> omega)
    : grid_(grid), ell_(std::move(ell)), omega_(std::move(omega)) {
  if (ell_.size() != omega_.size() || ell_.size() < 2) throw Error("rigid path needs matching series of length >= 2");
  rot_ = rotation_from_omega(omega_, grid_.dt);
  a_.assign(ell_.size(), Vec2::Zero());
  for (std::size_t n = 0; n + 1 < ell_.size(); ++n) a_[n + 1] = a_from(static_cast<int>(n), grid_.time(n + 1));
}

RigidPath RigidPath::from_series(const MonolithicPencil& pencil, const TimeSeries& ts) {
  std::vector<Vec2> ell;
  std::vector<double> om;
  for (const auto& x : ts.x) {
    const Vec3 xi = pencil.rigid(x);
    ell.push_back(xi.head<2>());
    om.push_back(xi[2]);
  }
  return RigidPath(ts.grid, std::move(ell), std::move(om));
}

int RigidPath::interval(double t) const {
  const int last = static_cast<int>(ell_.size()) - 2;
  const int n = static_cast<int>(std::floor(t / grid_.dt + 1e-12));
  return std::clamp(n, 0, last);
}

double RigidPath::omega(double t) const {
  const int n = interval(t);
  const double s = (t - grid_.time(n)) / grid_.dt;
  return (1.0 - s) * omega_[n] + s * omega_[n + 1];
}

double RigidPath::theta(double t) const {
  const int n = interval(t);
  const double tau = t - grid_.time(n);
  return rot_.theta[n] + tau * omega_[n] + 0.5 * tau * tau / grid_.dt * (omega_[n + 1] - omega_[n]);
}

Vec2 RigidPath::ell(double t) const {
  const int n = interval(t);
  const double s = (t - grid_.time(n)) / grid_.dt;
  return (1.0 - s) * ell_[n] + s * ell_[n + 1];
}

Vec2 RigidPath::a_from(int n, double t) const {
  // 3-point Gauss on [t_n, t]
  static const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double t0 = grid_.time(n);
  const double h = 0.5 * (t - t0), m = 0.5 * (t + t0);
  Vec2 s = Vec2::Zero();
  for (int k = 0; k < 3; ++k) s += gw[k] * adot(m + h * gx[k]);
  return a_[n] + h * s;
}

Vec2 RigidPath::a(double t) const { return a_from(interval(t), t); }

MapFrame MapFrame::identity(const SpacePair& s) {
  MapFrame f;
  f.n_quad = s.n_quad_total();
  const int n = f.n_quad + s.n_nodes;
  f.X.resize(n);
  const auto& qp = TriangleRule::points();
  for (int t = 0; t < s.n_triangles(); ++t) {
    for (int k = 0; k < TriangleRule::n; ++k) f.X[t * TriangleRule::n + k] = s.geom[t].map(qp[k]);
  }
  for (int i = 0; i < s.n_nodes; ++i) f.X[f.n_quad + i] = s.node_coords[i];
  f.Xdot.assign(n, Vec2::Zero());
  f.F.assign(n, Mat2::Identity());
  f.dF.assign(n, {Mat2::Zero(), Mat2::Zero()});
  return f;
}

FlowMap::FlowMap(const SpacePair& s, const Cutoff& psi, const RigidPath& path, double r_body)
    : space_(&s), psi_(psi), path_(path), r_body_(r_body) {
  frame_ = MapFrame::identity(s);
  y_ = frame_.X;
  fill_velocity();
}

LambdaField FlowMap::lambda_at(double t) const {
  return build_lambda(psi_, path_.a(t), path_.adot(t), path_.omega(t), r_body_);
}

void FlowMap::fill_velocity() {
  const double t = path_.grid().time(n_);
  frame_.t = t;
  const double th = path_.theta(t);
  frame_.omega = path_.omega(t);
  frame_.Q = rotation(th);
  frame_.Qdot = frame_.omega * perp_matrix() * frame_.Q;
  frame_.a = path_.a(t);
  frame_.adot = path_.adot(t);
  const LambdaField lam = lambda_at(t);
  for (std::size_t i = 0; i < frame_.X.size(); ++i) frame_.Xdot[i] = lam.evaluate(frame_.X[i]).value;
}

void FlowMap::advance() {
  const double dt = path_.grid().dt;
  const double t = path_.grid().time(n_);
  struct S {
    Vec2 x;
    Mat2 f;
    std::array<Mat2, 2> g;
  };
  auto rhs = [](const LambdaField& lam, const S& s) {
    const LambdaEval e = lam.evaluate(s.x);
    S d;
    d.x = e.value;
    d.f = e.grad * s.f;
    for (int l = 0; l < 2; ++l) {
      Mat2 m;
      for (int i = 0; i < 2; ++i) m.row(i) = (s.f.transpose() * e.hess[i] * s.f).col(l).transpose();
      d.g[l] = m + e.grad * s.g[l];
    }
    return d;
  };
  auto axpy = [](const S& s, double h, const S& d) {
    S r;
    r.x = s.x + h * d.x;
    r.f = s.f + h * d.f;
    r.g[0] = s.g[0] + h * d.g[0];
    r.g[1] = s.g[1] + h * d.g[1];
    return r;
  };
  // substeps keep h |grad Lambda| below kMaxStiffness
  constexpr double kMaxStiffness = 0.1;
  double gmax = 0.0;
  {
    const LambdaField l0 = lambda_at(t);
    for (const Vec2& x : frame_.X) gmax = std::max(gmax, l0.evaluate(x).grad.norm());
  }
  const int m = std::max(1, static_cast<int>(std::ceil(dt * gmax / kMaxStiffness)));
  const double h = dt / m;
  for (int j = 0; j < m; ++j) {
    const double tj = t + j * h;
    const LambdaField l0 = lambda_at(tj), lh = lambda_at(tj + 0.5 * h), l1 = lambda_at(tj + h);
    for (std::size_t i = 0; i < frame_.X.size(); ++i) {
      const S s0{frame_.X[i], frame_.F[i], frame_.dF[i]};
      const S k1 = rhs(l0, s0);
      const S k2 = rhs(lh, axpy(s0, 0.5 * h, k1));
      const S k3 = rhs(lh, axpy(s0, 0.5 * h, k2));
      const S k4 = rhs(l1, axpy(s0, h, k3));
      frame_.X[i] = s0.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
      frame_.F[i] = s0.f + h / 6.0 * (k1.f + 2.0 * k2.f + 2.0 * k3.f + k4.f);
      for (int l = 0; l < 2; ++l) {
        frame_.dF[i][l] = s0.g[l] + h / 6.0 * (k1.g[l] + 2.0 * k2.g[l] + 2.0 * k3.g[l] + k4.g[l]);
      }
    }
  }
  substeps_ += m;
  ++n_;
  for (std::size_t i = 0; i < frame_.X.size(); ++i) {
    if (!(frame_.F[i].determinant() > 0.0)) {
      std::ostringstream ss;
      ss << "flow map inverted an element at t = " << path_.grid().time(n_);
      throw GeometryError(ss.str());
    }
  }
  fill_velocity();
}

double FlowMap::max_det_drift() const {
  double m = 0.0;
  for (const auto& f : frame_.F) m = std::max(m, std::abs(f.determinant() - 1.0));
  return m;
}

double FlowMap::body_rigidity_error() const {
  double m = 0.0;
  for (int n : space_->body_nodes) {
    const int i = frame_.n_quad + n;
    m = std::max(m, (frame_.X[i] - (frame_.a + frame_.Q * y_[i])).norm());
  }
  return m;
}

double FlowMap::clearance() const { return psi_.r_outer - frame_.a.norm() - r_body_; }

double GeometrySummary::max_det_drift() const {
  return det_drift.empty() ? 0.0 : *std::max_element(det_drift.begin(), det_drift.end());
}

double GeometrySummary::min_clearance() const {
  return clearance.empty() ? 0.0 : *std::min_element(clearance.begin(), clearance.end());
}

double GeometrySummary::max_q_orth() const {
  return q_orth.empty() ? 0.0 : *std::max_element(q_orth.begin(), q_orth.end());
}

NonlinearTerms nonlinear_terms(const FormSet& forms, const BodyParams& body, const StateSample& st,
                               const MapFrame& maps) {
  const SpacePair& s = *forms.space;
  const double nu = forms.nu;
  const auto& qp = TriangleRule::points();
  const Mat2 I = Mat2::Identity();
  const Mat2& Q = maps.Q;
  NonlinearTerms out;
  out.F.resize(2, s.n_quad_total());
  const bool has_dt = st.dudt.size() > 0;
  const bool has_p = st.p.size() > 0;
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& g = s.geom[t];
    const auto& nd = s.tri_nodes[t];
    const auto hs = P2Basis::hessians(g);
    std::array<Mat2, 2> H{Mat2::Zero(), Mat2::Zero()};
    for (int a = 0; a < 6; ++a) {
      H[0] += st.u[s.vel(nd[a], 0)] * hs[a];
      H[1] += st.u[s.vel(nd[a], 1)] * hs[a];
    }
    const std::array<Mat2, 2> QH{Q(0, 0) * H[0] + Q(0, 1) * H[1], Q(1, 0) * H[0] + Q(1, 1) * H[1]};
    const Vec2 lap(H[0].trace(), H[1].trace());
    Vec2 gp = Vec2::Zero();
    if (has_p) {
      const auto& v = s.mesh->triangles[t];
      for (int k = 0; k < 3; ++k) gp += st.p[v[k]] * g.grad_lambda[k];
    }
    for (int k = 0; k < TriangleRule::n; ++k) {
      const int i = t * TriangleRule::n + k;
      const auto N = P2Basis::values(qp[k]);
      const auto dN = P2Basis::gradients(g, qp[k]);
      Vec2 u = Vec2::Zero(), ut = Vec2::Zero();
      Mat2 Du = Mat2::Zero();
      for (int a = 0; a < 6; ++a) {
        const Vec2 ua(st.u[s.vel(nd[a], 0)], st.u[s.vel(nd[a], 1)]);
        u += N[a] * ua;
        Du += ua * dN[a].transpose();
        if (has_dt) ut += N[a] * Vec2(st.dudt[s.vel(nd[a], 0)], st.dudt[s.vel(nd[a], 1)]);
      }
      const Mat2 Z = maps.Z(i);
      std::array<Mat2, 2> dZ;
      for (int l = 0; l < 2; ++l) dZ[l] = -Z * maps.dF[i][l] * Z;
      const Mat2 QDu = Q * Du;
      const Mat2 QDuZ = QDu * Z;
      const Mat2 M5 = (Z - I) * Z.transpose();
      Vec2 c = Vec2::Zero();
      for (int l = 0; l < 2; ++l) c += (dZ[l] * Z.transpose()).col(l);
      Vec2 f = -(Q - I) * ut - maps.Qdot * u + QDuZ * maps.Xdot[i] - QDuZ * u;
      for (int r = 0; r < 2; ++r) {
        f[r] += nu * (QH[r] * M5).trace() + nu * (QH[r] * (Z - I).transpose()).trace();
      }
      f += nu * (Q - I) * lap + nu * QDu * c - (Z.transpose() - I) * gp;
      out.F.col(i) = f;
    }
  }
  out.H = VecX::Zero(s.n_vel);
  for (int n = 0; n < s.n_nodes; ++n) {
    if (s.node_tag[n] != 0) continue;
    const int i = maps.n_quad + n;
    const Vec2 u(st.u[s.vel(n, 0)], st.u[s.vel(n, 1)]);
    const Vec2 h = u - (maps.Z(i) * Q).transpose() * u;
    out.H[s.vel(n, 0)] = h.x();
    out.H[s.vel(n, 1)] = h.y();
  }
  out.G1 = -body.m * st.omega * perp(st.ell);
  out.G2 = 0.0;
  return out;
}

NonlinearProblem NonlinearProblem::create(std::shared_ptr<const FormSet> forms, const BodyParams& body) {
  NonlinearProblem p;
  p.forms = forms;
  p.body = body;
  p.pencil = assemble_monolithic(forms, body);
  const Mesh& mesh = *forms->space->mesh;
  p.psi = build_cutoff(mesh, mesh.r_outer - mesh.r_inner);
  return p;
}

NonlinearData evaluate_nonlinear(const NonlinearProblem& prob, const TimeSeries& ts) {
  const SpacePair& s = *prob.forms->space;
  const MonolithicPencil& pc = prob.pencil;
  const int N = ts.size();
  NonlinearData d;
  d.grid = ts.grid;
  std::vector<VecX> u(N);
  for (int n = 0; n < N; ++n) u[n] = pc.velocity(ts.x[n]);
  const auto du = time_derivative(u, ts.grid.dt, ts.scheme);
  const RigidPath path = RigidPath::from_series(pc, ts);
  FlowMap fm(s, prob.psi, path, prob.body.r_body);
  for (int n = 0; n < N; ++n) {
    if (n > 0) fm.advance();
    StateSample st;
    st.u = u[n];
    st.dudt = du[n];
    st.p = ts.p[n];
    const Vec3 xi = pc.rigid(ts.x[n]);
    st.ell = xi.head<2>();
    st.omega = xi[2];
    NonlinearTerms nt = nonlinear_terms(*prob.forms, prob.body, st, fm.frame());
    d.F.push_back(std::move(nt.F));
    d.H.push_back(std::move(nt.H));
    d.G.push_back(Vec3(nt.G1.x(), nt.G1.y(), nt.G2));
    d.geometry.det_drift.push_back(fm.max_det_drift());
    d.geometry.clearance.push_back(fm.clearance());
    d.geometry.rigidity.push_back(fm.body_rigidity_error());
    const Mat2& Q = fm.frame().Q;
    d.geometry.q_orth.push_back((Q.transpose() * Q - Mat2::Identity()).cwiseAbs().maxCoeff());
    d.geometry.a.push_back(fm.frame().a);
    d.geometry.theta.push_back(path.theta(ts.grid.time(n)));
  }
  return d;
}

NonlinearTermNorms nonlinear_term_norms(const NonlinearProblem& prob, const NonlinearData& d, double p, double q,
                                        double eta, Scheme scheme) {
  const SpacePair& s = *prob.forms->space;
  const int N = static_cast<int>(d.F.size());
  const double dt = d.grid.dt;
  std::vector<double> fa(N), ha(N), hb(N), hc(N), g1(N), g2(N);
  const auto dh = time_derivative(d.H, dt, scheme);
  for (int n = 0; n < N; ++n) {
    fa[n] = quad_lq_norm(s, d.F[n], q);
    ha[n] = velocity_wkq_norm(s, d.H[n], q, 2);
    hb[n] = velocity_lq_norm(s, d.H[n], q, 0);
    hc[n] = velocity_lq_norm(s, dh[n], q, 0);
    g1[n] = d.G[n].head<2>().norm();
    g2[n] = std::abs(d.G[n][2]);
  }
  NonlinearTermNorms r;
  r.F = weighted_lp(fa, dt, p, eta);
  r.H = weighted_lp(ha, dt, p, eta) + weighted_lp(hb, dt, p, eta) + weighted_lp(hc, dt, p, eta);
  r.G1 = weighted_lp(g1, dt, p, eta);
  r.G2 = weighted_lp(g2, dt, p, eta);
  return r;
}

NonlinearData difference(const NonlinearData& a, const NonlinearData& b) {
  if (a.F.size() != b.F.size()) throw Error("nonlinear data on different grids");
  NonlinearData d;
  d.grid = a.grid;
  for (std::size_t n = 0; n < a.F.size(); ++n) {
    d.F.push_back(a.F[n] - b.F[n]);
    d.H.push_back(a.H[n] - b.H[n]);
    d.G.push_back(a.G[n] - b.G[n]);
  }
  return d;
}

double nonlinear_data_norm(const NonlinearProblem& prob, const NonlinearData& d, double p, double q, double eta,
                           Scheme scheme) {
  return nonlinear_term_norms(prob, d, p, q, eta, scheme).sum();
}

TimeSeries scale_series(const TimeSeries& ts, double s) {
  TimeSeries r = ts;
  for (auto& x : r.x) x *= s;
  for (auto& p : r.p) p *= s;
  for (auto& e : r.energy) e *= s * s;
  return r;
}

double s_norm(const MonolithicPencil& pencil, const TimeSeries& a, double p, double q, double eta) {
  return solution_norms(pencil, a, p, q, eta).solution_norm;
}

double s_norm_difference(const MonolithicPencil& pencil, const TimeSeries& a, const TimeSeries& b, double p,
                         double q, double eta) {
  if (a.size() != b.size()) throw Error("trajectories have different lengths");
  TimeSeries d;
  d.grid = a.grid;
  d.scheme = a.scheme;
  for (int n = 0; n < a.size(); ++n) {
    d.x.push_back(a.x[n] - b.x[n]);
    d.p.push_back(a.p[n] - b.p[n]);
  }
  return s_norm(pencil, d, p, q, eta);
}

double gamma0(double alpha, double diam, double p, double eta) {
  const double pp = p / (p - 1.0);
  const double c = std::pow(1.0 / (pp * eta), 1.0 / pp);
  return std::min(1.0, alpha / (2.0 * c * (1.0 + diam)));
}

namespace {

TimeSeries zero_series(const MonolithicPencil& pencil, const TimeGrid& grid, Scheme scheme) {
  TimeSeries ts;
  ts.grid = grid;
  ts.scheme = scheme;
  ts.x.assign(grid.steps + 1, VecX::Zero(pencil.n_red()));
  ts.p.assign(grid.steps + 1, VecX::Zero(pencil.B.rows()));
  ts.energy.assign(grid.steps + 1, 0.0);
  return ts;
}

bool is_zero(const TimeSeries& ts) {
  for (const auto& x : ts.x) {
    if (x.squaredNorm() != 0.0) return false;
  }
  return true;
}

}  // namespace

PicardResult picard_solve(const NonlinearProblem& prob, const VecX& u0, const Vec2& ell0, double omega0,
                          const NonlinearOptions& opt) {
  const MonolithicPencil& pc = prob.pencil;
  const SpacePair& s = *prob.forms->space;
  if (!(opt.eta > 0.0)) throw Error("eta must be positive");
  if (opt.max_iter < 1) throw Error("max_iter must be at least 1");
  check_compatibility(*prob.forms, u0, ell0, omega0, opt.p, opt.q);

  PicardResult res;
  PicardDiagnostics& dg = res.diag;
  const Mesh& mesh = *s.mesh;
  dg.gamma = opt.gamma;
  dg.gamma0 = gamma0(prob.psi.alpha, 2.0 * mesh.r_outer, opt.p, opt.eta);
  dg.initial_data_norm = besov_proxy(s, u0, opt.p, opt.q) + ell0.norm() + std::abs(omega0);
  if (opt.gamma >= dg.gamma0) dg.warnings.push_back("gamma is not below gamma_0");

  StepperOptions so = opt.stepper;
  so.diagnostics = false;
  TimeSeries prev = zero_series(pc, opt.grid, so.scheme);
  int bad = 0;
  for (int k = 0; k < opt.max_iter; ++k) {
    LinearInputs in;
    in.grid = opt.grid;
    in.u0 = u0;
    in.ell0 = ell0;
    in.omega0 = omega0;
    if (!is_zero(prev)) {
      auto data = std::make_shared<NonlinearData>(evaluate_nonlinear(prob, prev));
      const double dn = nonlinear_data_norm(prob, *data, opt.p, opt.q, opt.eta, so.scheme);
      if (!dg.iterates.empty()) {
        dg.iterates.back().data_norm = dn;
        const double sn = dg.iterates.back().s_norm;
        if (sn > 0.0) dg.C_N = std::max(dg.C_N, dn / (sn * sn));
      }
      in.f = [data](int n) { return data->F[n]; };
      in.h = [data](int n) { return data->H[n]; };
      in.g = [data](int n) { return data->G[n]; };
    }
    TimeSeries next = simulate_linear(pc, in, so);
    PicardIterate it;
    it.k = k + 1;
    it.s_norm = s_norm(pc, next, opt.p, opt.q, opt.eta);
    it.diff = s_norm_difference(pc, next, prev, opt.p, opt.q, opt.eta);
    if (!dg.iterates.empty() && dg.iterates.back().diff > 0.0) it.factor = it.diff / dg.iterates.back().diff;
    it.in_ball = it.s_norm <= opt.gamma;
    dg.all_in_ball = dg.all_in_ball && it.in_ball;
    dg.max_factor = std::max(dg.max_factor, it.factor);
    if (k == 0) {
      dg.linear_s_norm = it.s_norm;
      dg.small_data_gate = it.s_norm <= 0.5 * opt.gamma;
      if (!dg.small_data_gate) dg.warnings.push_back("linear solution exceeds gamma/2: data may be too large");
    }
    dg.iterates.push_back(it);
    prev = std::move(next);
    if (it.diff <= opt.tol) {
      dg.converged = true;
      break;
    }
    bad = it.factor >= 1.0 ? bad + 1 : 0;
    if (bad >= 3) {
      std::ostringstream ss;
      ss << "Picard iteration is not contracting: factors";
      for (std::size_t i = dg.iterates.size() - 3; i < dg.iterates.size(); ++i) ss << ' ' << dg.iterates[i].factor;
      ss << " at gamma = " << opt.gamma;
      throw ContractionError(ss.str());
    }
  }
  if (dg.max_factor > 0.0) dg.gamma_tilde = 0.5 * opt.gamma / dg.max_factor;
  res.solution = std::move(prev);
  return res;
}

double log_linear_slope(const std::vector<double>& t, const std::vector<double>& y) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  int n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(y[i] > 0.0)) continue;
    const double ly = std::log(y[i]);
    st += t[i];
    sy += ly;
    stt += t[i] * t[i];
    sty += t[i] * ly;
    ++n;
  }
  if (n < 2) return 0.0;
  return (n * sty - st * sy) / (n * stt - st * st);
}

PhysicalSeries back_transform(const NonlinearProblem& prob, const TimeSeries& ts, double q) {
  const SpacePair& s = *prob.forms->space;
  const MonolithicPencil& pc = prob.pencil;
  const RigidPath path = RigidPath::from_series(pc, ts);
  PhysicalSeries out;
  out.alpha = prob.psi.alpha;
  FlowMap fm(s, prob.psi, path, prob.body.r_body);
  const auto& qw = TriangleRule::weights();
  for (int n = 0; n < ts.size(); ++n) {
    if (n > 0) fm.advance();
    const MapFrame& f = fm.frame();
    const double t = ts.grid.time(n);
    const Vec3 xi = pc.rigid(ts.x[n]);
    const QuadField uq = velocity_at_quad(s, pc.velocity(ts.x[n]));
    double sum = 0.0;
    for (int e = 0; e < s.n_triangles(); ++e) {
      for (int k = 0; k < TriangleRule::n; ++k) {
        const int i = e * TriangleRule::n + k;
        const Vec2 u = f.Q * uq.col(i);
        sum += qw[k] * s.geom[e].area * std::pow(u.norm(), q) * f.F[i].determinant();
      }
    }
    out.t.push_back(t);
    out.a.push_back(f.a);
    out.theta.push_back(path.theta(t));
    out.omega.push_back(xi[2]);
    out.clearance.push_back(fm.clearance());
    out.u_lq.push_back(std::pow(sum, 1.0 / q));
    out.adot.push_back(f.adot.norm());
    out.decay.push_back(out.u_lq.back() + out.adot.back() + std::abs(xi[2]));
    out.max_det_drift = std::max(out.max_det_drift, fm.max_det_drift());
    out.max_q_orth = std::max(out.max_q_orth, (f.Q.transpose() * f.Q - Mat2::Identity()).cwiseAbs().maxCoeff());
  }
  out.min_clearance = *std::min_element(out.clearance.begin(), out.clearance.end());
  out.clearance_ok = out.min_clearance >= out.alpha / 2.0;
  if (!out.clearance_ok) {
    std::ostringstream ss;
    ss << "clearance " << out.min_clearance << " fell below alpha/2 = " << out.alpha / 2.0;
    throw ClearanceError(ss.str(), out.min_clearance);
  }
  out.decay_slope = log_linear_slope(out.t, out.decay);
  return out;
}

}  // namespace fsilab
