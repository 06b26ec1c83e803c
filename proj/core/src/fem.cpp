#include "fsilab/fem.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "fsilab/errors.hpp"

#ifdef FSILAB_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

namespace fsilab {

const std::array<Eigen::Vector3d, TriangleRule::n>& TriangleRule::points() {
  static const std::array<Eigen::Vector3d, n> pts = [] {
    const double a = 0.445948490915965, b = 0.091576213509771;
    return std::array<Eigen::Vector3d, n>{Eigen::Vector3d(a, a, 1 - 2 * a), Eigen::Vector3d(a, 1 - 2 * a, a),
                                          Eigen::Vector3d(1 - 2 * a, a, a), Eigen::Vector3d(b, b, 1 - 2 * b),
                                          Eigen::Vector3d(b, 1 - 2 * b, b), Eigen::Vector3d(1 - 2 * b, b, b)};
  }();
  return pts;
}

const std::array<double, TriangleRule::n>& TriangleRule::weights() {
  static const std::array<double, n> w = {0.223381589678011, 0.223381589678011, 0.223381589678011,
                                          0.109951743655322, 0.109951743655322, 0.109951743655322};
  return w;
}

const std::array<double, EdgeRule::n>& EdgeRule::points() {
  static const std::array<double, n> p = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
  return p;
}

const std::array<double, EdgeRule::n>& EdgeRule::weights() {
  static const std::array<double, n> w = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  return w;
}

std::array<double, 6> P2Basis::values(const Eigen::Vector3d& l) {
  return {l[0] * (2 * l[0] - 1), l[1] * (2 * l[1] - 1), l[2] * (2 * l[2] - 1),
          4 * l[0] * l[1],       4 * l[1] * l[2],       4 * l[2] * l[0]};
}

std::array<Vec2, 6> P2Basis::gradients(const ElementGeometry& g, const Eigen::Vector3d& l) {
  const auto& d = g.grad_lambda;
  return {(4 * l[0] - 1) * d[0],          (4 * l[1] - 1) * d[1],          (4 * l[2] - 1) * d[2],
          4 * (l[1] * d[0] + l[0] * d[1]), 4 * (l[2] * d[1] + l[1] * d[2]), 4 * (l[0] * d[2] + l[2] * d[0])};
}

std::array<Mat2, 6> P2Basis::hessians(const ElementGeometry& g) {
  const auto& d = g.grad_lambda;
  auto sym = [](const Vec2& a, const Vec2& b) -> Mat2 { return 4.0 * (a * b.transpose() + b * a.transpose()); };
  return {4.0 * d[0] * d[0].transpose(), 4.0 * d[1] * d[1].transpose(), 4.0 * d[2] * d[2].transpose(),
          sym(d[0], d[1]),                sym(d[1], d[2]),                sym(d[2], d[0])};
}

double SpacePair::total_area() const {
  double a = 0.0;
  for (const auto& g : geom) a += g.area;
  return a;
}

std::vector<int> SpacePair::boundary_dofs(BoundaryTag tag) const {
  const auto& nodes = tag == BoundaryTag::Body ? body_nodes : outer_nodes;
  std::vector<int> out;
  out.reserve(2 * nodes.size());
  for (int c = 0; c < 2; ++c) {
    for (int n : nodes) out.push_back(vel(n, c));
  }
  return out;
}

std::shared_ptr<const SpacePair> build_spaces(std::shared_ptr<const Mesh> mesh) {
  auto s = std::make_shared<SpacePair>();
  s->mesh = mesh;
  s->n_vertices = static_cast<int>(mesh->vertices.size());
  std::map<std::pair<int, int>, int> edge_id;
  auto edge = [&](int a, int b) {
    auto k = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto it = edge_id.find(k);
    if (it != edge_id.end()) return it->second;
    const int id = static_cast<int>(edge_id.size());
    edge_id.emplace(k, id);
    return id;
  };
  std::vector<std::array<int, 3>> tri_edges;
  tri_edges.reserve(mesh->triangles.size());
  for (const auto& t : mesh->triangles) tri_edges.push_back({edge(t[0], t[1]), edge(t[1], t[2]), edge(t[2], t[0])});
  s->n_edges = static_cast<int>(edge_id.size());
  s->n_nodes = s->n_vertices + s->n_edges;
  s->n_vel = 2 * s->n_nodes;
  s->n_pres = s->n_vertices;

  s->node_coords.resize(s->n_nodes);
  for (int v = 0; v < s->n_vertices; ++v) s->node_coords[v] = mesh->vertices[v];
  for (const auto& [k, id] : edge_id) {
    s->node_coords[s->n_vertices + id] = 0.5 * (mesh->vertices[k.first] + mesh->vertices[k.second]);
  }

  for (std::size_t t = 0; t < mesh->triangles.size(); ++t) {
    const auto& v = mesh->triangles[t];
    const auto& e = tri_edges[t];
    s->tri_nodes.push_back(
        {v[0], v[1], v[2], s->n_vertices + e[0], s->n_vertices + e[1], s->n_vertices + e[2]});
    ElementGeometry g;
    for (int i = 0; i < 3; ++i) g.x[i] = mesh->vertices[v[i]];
    const Vec2 e1 = g.x[1] - g.x[0], e2 = g.x[2] - g.x[0];
    const double det = e1.x() * e2.y() - e1.y() * e2.x();
    if (!(det > 0.0)) throw GeometryError("triangle " + std::to_string(t) + " is degenerate or inverted");
    g.area = 0.5 * det;
    // grad lambda_i is the inward normal of the opposite edge scaled by 1/(2 area).
    for (int i = 0; i < 3; ++i) {
      const Vec2 a = g.x[(i + 1) % 3], b = g.x[(i + 2) % 3];
      const Vec2 d = b - a;
      g.grad_lambda[i] = Vec2(-d.y(), d.x()) / det;
    }
    s->geom.push_back(g);
  }

  s->node_tag.assign(s->n_nodes, 0);
  for (const auto& be : mesh->boundary_edges) {
    BoundarySegment seg;
    seg.n0 = be.a;
    seg.n1 = be.b;
    seg.nm = s->n_vertices + edge(be.a, be.b);
    seg.tag = be.tag;
    const Vec2 t = mesh->vertices[be.b] - mesh->vertices[be.a];
    seg.length = t.norm();
    seg.normal = Vec2(t.y(), -t.x()) / seg.length;
    s->boundary.push_back(seg);
    for (int n : {seg.n0, seg.n1, seg.nm}) s->node_tag[n] = static_cast<int>(be.tag);
  }
  if (static_cast<int>(edge_id.size()) != s->n_edges) {
    throw GeometryError("boundary edge does not belong to any triangle");
  }
  int interior = 0;
  for (int n = 0; n < s->n_nodes; ++n) {
    if (s->node_tag[n] == static_cast<int>(BoundaryTag::Outer)) s->outer_nodes.push_back(n);
    if (s->node_tag[n] == static_cast<int>(BoundaryTag::Body)) s->body_nodes.push_back(n);
    if (s->node_tag[n] == 0) ++interior;
  }
  if (interior == 0) throw GeometryError("mesh has no interior nodes");
  return s;
}

std::shared_ptr<const FormSet> assemble_forms(std::shared_ptr<const SpacePair> sp, double nu) {
  if (!(nu > 0.0)) throw Error("viscosity must be positive");
  const SpacePair& s = *sp;
  auto f = std::make_shared<FormSet>();
  f->space = sp;
  f->nu = nu;
  Triplets mv, kv, bd, mp, gw, ls, ms;
  const int nn = s.n_nodes;
  f->pres_mean = VecX::Zero(s.n_pres);
  f->scalar_mean = VecX::Zero(nn);
  const auto& qp = TriangleRule::points();
  const auto& qw = TriangleRule::weights();
  const auto& mesh = *s.mesh;

  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& g = s.geom[t];
    const auto& nd = s.tri_nodes[t];
    const auto& vt = mesh.triangles[t];
    Eigen::Matrix<double, 6, 6> me = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 6> le = Eigen::Matrix<double, 6, 6>::Zero();
    // ke(c, d) blocks: nu * (delta_cd grad Na . grad Nb + d_d Na d_c Nb)
    Eigen::Matrix<double, 12, 12> ke = Eigen::Matrix<double, 12, 12>::Zero();
    Eigen::Matrix<double, 3, 12> be = Eigen::Matrix<double, 3, 12>::Zero();
    Eigen::Matrix<double, 3, 3> mpe = Eigen::Matrix<double, 3, 3>::Zero();
    for (int k = 0; k < TriangleRule::n; ++k) {
      const double w = qw[k] * g.area;
      const auto phi = P2Basis::values(qp[k]);
      const auto dphi = P2Basis::gradients(g, qp[k]);
      for (int a = 0; a < 6; ++a) {
        f->scalar_mean[nd[a]] += w * phi[a];
        for (int b = 0; b < 6; ++b) {
          me(a, b) += w * phi[a] * phi[b];
          const double gg = dphi[a].dot(dphi[b]);
          le(a, b) += w * gg;
          for (int c = 0; c < 2; ++c) {
            for (int d = 0; d < 2; ++d) {
              ke(c * 6 + a, d * 6 + b) += w * nu * ((c == d ? gg : 0.0) + dphi[a][d] * dphi[b][c]);
            }
          }
        }
      }
      for (int i = 0; i < 3; ++i) {
        const double li = qp[k][i];
        f->pres_mean[vt[i]] += w * li;
        for (int j = 0; j < 3; ++j) mpe(i, j) += w * li * qp[k][j];
        for (int a = 0; a < 6; ++a) {
          for (int c = 0; c < 2; ++c) be(i, c * 6 + a) += w * li * dphi[a][c];
        }
      }
    }
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        ms.emplace_back(nd[a], nd[b], me(a, b));
        ls.emplace_back(nd[a], nd[b], le(a, b));
        for (int c = 0; c < 2; ++c) {
          mv.emplace_back(s.vel(nd[a], c), s.vel(nd[b], c), me(a, b));
          for (int d = 0; d < 2; ++d) kv.emplace_back(s.vel(nd[a], c), s.vel(nd[b], d), ke(c * 6 + a, d * 6 + b));
        }
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) mp.emplace_back(vt[i], vt[j], mpe(i, j));
      for (int a = 0; a < 6; ++a) {
        for (int c = 0; c < 2; ++c) bd.emplace_back(vt[i], s.vel(nd[a], c), be(i, c * 6 + a));
      }
    }
    // (v, grad q): grad q is constant, vertex basis integrates to 0, midpoint basis to area / 3.
    for (int a = 3; a < 6; ++a) {
      for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 2; ++c) gw.emplace_back(s.vel(nd[a], c), vt[i], g.area / 3.0 * g.grad_lambda[i][c]);
      }
    }
  }
  auto build = [](int r, int c, const Triplets& tr) {
    SpMat m(r, c);
    m.setFromTriplets(tr.begin(), tr.end());
    m.makeCompressed();
    return m;
  };
  f->mass_vel = build(s.n_vel, s.n_vel, mv);
  f->stiff_vel = build(s.n_vel, s.n_vel, kv);
  f->div = build(s.n_pres, s.n_vel, bd);
  f->mass_pres = build(s.n_pres, s.n_pres, mp);
  f->weak_grad = build(s.n_vel, s.n_pres, gw);
  f->lap_scalar = build(nn, nn, ls);
  f->mass_scalar = build(nn, nn, ms);
  return f;
}

VecX interpolate_vector(const SpacePair& s, const std::function<Vec2(const Vec2&)>& f) {
  VecX u(s.n_vel);
  for (int n = 0; n < s.n_nodes; ++n) {
    const Vec2 v = f(s.node_coords[n]);
    u[s.vel(n, 0)] = v.x();
    u[s.vel(n, 1)] = v.y();
  }
  return u;
}

VecX interpolate_scalar(const SpacePair& s, const std::function<double(const Vec2&)>& f) {
  VecX u(s.n_nodes);
  for (int n = 0; n < s.n_nodes; ++n) u[n] = f(s.node_coords[n]);
  return u;
}

VecX interpolate_pressure(const SpacePair& s, const std::function<double(const Vec2&)>& f) {
  VecX p(s.n_pres);
  for (int n = 0; n < s.n_pres; ++n) p[n] = f(s.node_coords[n]);
  return p;
}

QuadField sample_quad(const SpacePair& s, const std::function<Vec2(const Vec2&)>& f) {
  QuadField out(2, s.n_quad_total());
  const auto& qp = TriangleRule::points();
  for (int t = 0; t < s.n_triangles(); ++t) {
    for (int k = 0; k < TriangleRule::n; ++k) out.col(t * TriangleRule::n + k) = f(s.geom[t].map(qp[k]));
  }
  return out;
}

QuadField velocity_at_quad(const SpacePair& s, const VecX& u) {
  QuadField out(2, s.n_quad_total());
  const auto& qp = TriangleRule::points();
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& nd = s.tri_nodes[t];
    for (int k = 0; k < TriangleRule::n; ++k) {
      const auto phi = P2Basis::values(qp[k]);
      Vec2 v = Vec2::Zero();
      for (int a = 0; a < 6; ++a) v += phi[a] * Vec2(u[s.vel(nd[a], 0)], u[s.vel(nd[a], 1)]);
      out.col(t * TriangleRule::n + k) = v;
    }
  }
  return out;
}

VecX load_vector(const SpacePair& s, const QuadField& f) {
  VecX b = VecX::Zero(s.n_vel);
  const auto& qp = TriangleRule::points();
  const auto& qw = TriangleRule::weights();
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& nd = s.tri_nodes[t];
    for (int k = 0; k < TriangleRule::n; ++k) {
      const double w = qw[k] * s.geom[t].area;
      const auto phi = P2Basis::values(qp[k]);
      const Vec2 fv = f.col(t * TriangleRule::n + k);
      for (int a = 0; a < 6; ++a) {
        b[s.vel(nd[a], 0)] += w * phi[a] * fv.x();
        b[s.vel(nd[a], 1)] += w * phi[a] * fv.y();
      }
    }
  }
  return b;
}

double pressure_mean(const FormSet& forms, const VecX& p) {
  return forms.pres_mean.dot(p) / forms.pres_mean.sum();
}

VecX remove_pressure_mean(const FormSet& forms, const VecX& p) {
  return p - VecX::Constant(p.size(), pressure_mean(forms, p));
}

namespace {

double power_sum_to_norm(double sum, double q) { return std::pow(std::max(sum, 0.0), 1.0 / q); }

}  // namespace

double velocity_lq_norm(const SpacePair& s, const VecX& u, double q, int order) {
  const auto& qp = TriangleRule::points();
  const auto& qw = TriangleRule::weights();
  double sum = 0.0;
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& g = s.geom[t];
    const auto& nd = s.tri_nodes[t];
    if (order == 2) {
      const auto hs = P2Basis::hessians(g);
      double fro2 = 0.0;
      for (int c = 0; c < 2; ++c) {
        Mat2 h = Mat2::Zero();
        for (int a = 0; a < 6; ++a) h += u[s.vel(nd[a], c)] * hs[a];
        fro2 += h.squaredNorm();
      }
      sum += g.area * std::pow(std::sqrt(fro2), q);
      continue;
    }
    for (int k = 0; k < TriangleRule::n; ++k) {
      double mag = 0.0;
      if (order == 0) {
        const auto phi = P2Basis::values(qp[k]);
        Vec2 v = Vec2::Zero();
        for (int a = 0; a < 6; ++a) v += phi[a] * Vec2(u[s.vel(nd[a], 0)], u[s.vel(nd[a], 1)]);
        mag = v.norm();
      } else {
        const auto dphi = P2Basis::gradients(g, qp[k]);
        Mat2 gu = Mat2::Zero();
        for (int a = 0; a < 6; ++a) {
          gu.row(0) += u[s.vel(nd[a], 0)] * dphi[a].transpose();
          gu.row(1) += u[s.vel(nd[a], 1)] * dphi[a].transpose();
        }
        mag = gu.norm();
      }
      sum += qw[k] * g.area * std::pow(mag, q);
    }
  }
  return power_sum_to_norm(sum, q);
}

double lq_norm(const SpacePair& s, const Field& field, double q, int order) {
  if (!(q > 1.0)) throw Error("lq_norm requires q > 1");
  if (order < 0 || order > 2) throw Error("derivative order must be 0, 1 or 2");
  return velocity_lq_norm(s, field.u, q, order);
}

double pressure_lq_norm(const SpacePair& s, const VecX& p, double q, int order) {
  const auto& qp = TriangleRule::points();
  const auto& qw = TriangleRule::weights();
  const auto& mesh = *s.mesh;
  double sum = 0.0;
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& g = s.geom[t];
    const auto& v = mesh.triangles[t];
    if (order >= 1) {
      Vec2 gp = Vec2::Zero();
      for (int i = 0; i < 3; ++i) gp += p[v[i]] * g.grad_lambda[i];
      sum += g.area * std::pow(gp.norm(), q);
      continue;
    }
    for (int k = 0; k < TriangleRule::n; ++k) {
      double val = 0.0;
      for (int i = 0; i < 3; ++i) val += p[v[i]] * qp[k][i];
      sum += qw[k] * g.area * std::pow(std::abs(val), q);
    }
  }
  return power_sum_to_norm(sum, q);
}

double scalar_lq_norm(const SpacePair& s, const VecX& phi, double q, int order) {
  const auto& qp = TriangleRule::points();
  const auto& qw = TriangleRule::weights();
  double sum = 0.0;
  for (int t = 0; t < s.n_triangles(); ++t) {
    const auto& g = s.geom[t];
    const auto& nd = s.tri_nodes[t];
    if (order == 2) {
      const auto hs = P2Basis::hessians(g);
      Mat2 h = Mat2::Zero();
      for (int a = 0; a < 6; ++a) h += phi[nd[a]] * hs[a];
      sum += g.area * std::pow(h.norm(), q);
      continue;
    }
    for (int k = 0; k < TriangleRule::n; ++k) {
      double mag = 0.0;
      if (order == 0) {
        const auto b = P2Basis::values(qp[k]);
        for (int a = 0; a < 6; ++a) mag += phi[nd[a]] * b[a];
        mag = std::abs(mag);
      } else {
        const auto db = P2Basis::gradients(g, qp[k]);
        Vec2 gv = Vec2::Zero();
        for (int a = 0; a < 6; ++a) gv += phi[nd[a]] * db[a];
        mag = gv.norm();
      }
      sum += qw[k] * g.area * std::pow(mag, q);
    }
  }
  return power_sum_to_norm(sum, q);
}

double quad_lq_norm(const SpacePair& s, const QuadField& f, double q) {
  const auto& qw = TriangleRule::weights();
  double sum = 0.0;
  for (int t = 0; t < s.n_triangles(); ++t) {
    for (int k = 0; k < TriangleRule::n; ++k) {
      sum += qw[k] * s.geom[t].area * std::pow(f.col(t * TriangleRule::n + k).norm(), q);
    }
  }
  return power_sum_to_norm(sum, q);
}

double velocity_wkq_norm(const SpacePair& s, const VecX& u, double q, int k) {
  double n = 0.0;
  for (int o = 0; o <= k; ++o) n += velocity_lq_norm(s, u, q, o);
  return n;
}

double pressure_w1q_norm(const SpacePair& s, const VecX& p, double q) {
  return pressure_lq_norm(s, p, q, 0) + pressure_lq_norm(s, p, q, 1);
}

VecX boundary_functional(const SpacePair& s,
                         const std::function<double(const Vec2& x, const Vec2& n, BoundaryTag tag)>& g) {
  VecX b = VecX::Zero(s.n_nodes);
  const auto& ep = EdgeRule::points();
  const auto& ew = EdgeRule::weights();
  for (const auto& seg : s.boundary) {
    const Vec2 x0 = s.node_coords[seg.n0], x1 = s.node_coords[seg.n1];
    for (int k = 0; k < EdgeRule::n; ++k) {
      const double t = ep[k];
      const Vec2 x = (1 - t) * x0 + t * x1;
      const double val = ew[k] * seg.length * g(x, seg.normal, seg.tag);
      b[seg.n0] += val * (1 - t) * (1 - 2 * t);
      b[seg.n1] += val * t * (2 * t - 1);
      b[seg.nm] += val * 4 * t * (1 - t);
    }
  }
  return b;
}

namespace {

#ifdef FSILAB_HAVE_UMFPACK
bool umfpack_self_test() {
  const int m = 60, n = m * m;
  Triplets tr;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const int k = i * m + j;
      tr.emplace_back(k, k, 4.1);
      if (i > 0) tr.emplace_back(k, k - m, -1.0);
      if (i < m - 1) tr.emplace_back(k, k + m, -1.2);
      if (j > 0) tr.emplace_back(k, k - 1, -1.0);
      if (j < m - 1) tr.emplace_back(k, k + 1, -0.9);
    }
  }
  SpMat a(n, n);
  a.setFromTriplets(tr.begin(), tr.end());
  Eigen::UmfPackLU<SpMat> lu(a);
  if (lu.info() != Eigen::Success) return false;
  const VecX b = VecX::LinSpaced(n, -1.0, 1.0);
  const VecX x = lu.solve(b);
  const double r = (a * x - b).norm() / b.norm();
  return std::isfinite(r) && r < 1e-10;
}
#endif

bool use_umfpack() {
#ifdef FSILAB_HAVE_UMFPACK
  static const bool ok = umfpack_self_test();
  return ok;
#else
  return false;
#endif
}

}  // namespace

const char* sparse_backend() { return use_umfpack() ? "umfpack" : "sparselu"; }

template <typename Scalar>
struct SparseSolver<Scalar>::Impl {
  Mat a;
  Eigen::SparseLU<Mat, Eigen::COLAMDOrdering<int>> slu;
#ifdef FSILAB_HAVE_UMFPACK
  Eigen::UmfPackLU<Mat> ulu;
#endif
  bool umf = false;

  bool factor() {
#ifdef FSILAB_HAVE_UMFPACK
    if (umf) {
      // every system here has a symmetric pattern; the default strategy is far slower on saddle points
      ulu.umfpackControl()(UMFPACK_STRATEGY) = UMFPACK_STRATEGY_SYMMETRIC;
      ulu.compute(a);
      return ulu.info() == Eigen::Success;
    }
#endif
    slu.analyzePattern(a);
    slu.factorize(a);
    return slu.info() == Eigen::Success;
  }
  Vec solve(const Vec& b) const {
#ifdef FSILAB_HAVE_UMFPACK
    if (umf) return ulu.solve(b);
#endif
    return slu.solve(b);
  }
};

template <typename Scalar>
SparseSolver<Scalar>::SparseSolver(Mat a, const char* what) : impl_(std::make_shared<Impl>()), what_(what) {
  impl_->a = std::move(a);
  impl_->a.makeCompressed();
  impl_->umf = use_umfpack();
  if (!impl_->factor()) {
    throw SolverError(std::string(what_) + ": factorization failed (singular matrix)");
  }
}

template <typename Scalar>
double SparseSolver<Scalar>::relative_residual(const Vec& x, const Vec& rhs) const {
  const double rn = rhs.norm();
  const double r = (impl_->a * x - rhs).norm();
  return rn > 0 ? r / rn : r;
}

template <typename Scalar>
typename SparseSolver<Scalar>::Vec SparseSolver<Scalar>::solve(const Vec& rhs) const {
  if (!impl_) throw SolverError(std::string(what_) + ": solver not initialised");
  Vec x = impl_->solve(rhs);
  const double res = relative_residual(x, rhs);
  if (!(res <= 1e-8)) {
    std::ostringstream ss;
    ss << what_ << ": solve failed, relative residual " << res;
    throw SolverError(ss.str());
  }
  return x;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> SparseSolver<Scalar>::solve_many(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rhs) const {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x(rhs.rows(), rhs.cols());
  for (Eigen::Index j = 0; j < rhs.cols(); ++j) x.col(j) = solve(rhs.col(j));
  return x;
}

template class SparseSolver<double>;
template class SparseSolver<std::complex<double>>;

ConstraintMap dirichlet_map(const SpacePair& s) {
  ConstraintMap m;
  Triplets tr;
  for (int c = 0; c < 2; ++c) {
    for (int n = 0; n < s.n_nodes; ++n) {
      if (s.node_tag[n] != 0) continue;
      tr.emplace_back(s.vel(n, c), m.n_free, 1.0);
      m.free_dofs.push_back(s.vel(n, c));
      ++m.n_free;
    }
  }
  m.P.resize(s.n_vel, m.n_free);
  m.P.setFromTriplets(tr.begin(), tr.end());
  m.P.makeCompressed();
  return m;
}

ConstraintMap rigid_map(const SpacePair& s) {
  ConstraintMap m = dirichlet_map(s);
  Triplets tr;
  for (int k = 0; k < m.P.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m.P, k); it; ++it) tr.emplace_back(it.row(), it.col(), it.value());
  }
  m.n_rigid = 3;
  const int c0 = m.n_free;
  for (int n : s.body_nodes) {
    const Vec2& y = s.node_coords[n];
    tr.emplace_back(s.vel(n, 0), c0, 1.0);
    tr.emplace_back(s.vel(n, 1), c0 + 1, 1.0);
    tr.emplace_back(s.vel(n, 0), c0 + 2, -y.y());
    tr.emplace_back(s.vel(n, 1), c0 + 2, y.x());
  }
  m.P.resize(s.n_vel, m.n_red());
  m.P.setFromTriplets(tr.begin(), tr.end());
  m.P.makeCompressed();
  return m;
}

VecX rigid_boundary_values(const SpacePair& s, const Vec2& ell, double omega) {
  VecX u = VecX::Zero(s.n_vel);
  for (int n : s.body_nodes) {
    const Vec2& y = s.node_coords[n];
    u[s.vel(n, 0)] = ell.x() - omega * y.y();
    u[s.vel(n, 1)] = ell.y() + omega * y.x();
  }
  return u;
}

VecX rigid_field(const SpacePair& s, const Vec2& ell, double omega) {
  return interpolate_vector(s, [&](const Vec2& y) { return Vec2(ell.x() - omega * y.y(), ell.y() + omega * y.x()); });
}

template <typename Scalar>
SaddleSolver<Scalar>::SaddleSolver(const Mat& k, const SpMat& b_red, const VecX& pres_mean, bool fix_gauge)
    : n_red_(static_cast<int>(k.rows())), n_pres_(static_cast<int>(b_red.rows())), gauge_(fix_gauge) {
  if (!fix_gauge) {
    const VecX bt1 = b_red.transpose() * VecX::Ones(n_pres_);
    double bn = 0.0;
    for (int j = 0; j < b_red.outerSize(); ++j) {
      for (SpMat::InnerIterator it(b_red, j); it; ++it) bn = std::max(bn, std::abs(it.value()));
    }
    if (bt1.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(bn, 1e-300)) {
      throw SolverError("singular saddle-point system: pressure gauge not fixed (constant pressure in kernel)");
    }
  }
  const int n = n_red_ + n_pres_ + (gauge_ ? 1 : 0);
  std::vector<Eigen::Triplet<Scalar>> tr;
  tr.reserve(static_cast<std::size_t>(k.nonZeros() + 2 * b_red.nonZeros() + 2 * n_pres_));
  for (int j = 0; j < k.outerSize(); ++j) {
    for (typename Mat::InnerIterator it(k, j); it; ++it) tr.emplace_back(it.row(), it.col(), it.value());
  }
  for (int j = 0; j < b_red.outerSize(); ++j) {
    for (SpMat::InnerIterator it(b_red, j); it; ++it) {
      tr.emplace_back(n_red_ + it.row(), it.col(), Scalar(-it.value()));
      tr.emplace_back(it.col(), n_red_ + it.row(), Scalar(-it.value()));
    }
  }
  if (gauge_) {
    const double scale = 1.0 / pres_mean.sum();
    for (int i = 0; i < n_pres_; ++i) {
      tr.emplace_back(n_red_ + i, n - 1, Scalar(pres_mean[i] * scale));
      tr.emplace_back(n - 1, n_red_ + i, Scalar(pres_mean[i] * scale));
    }
  }
  Mat a(n, n);
  a.setFromTriplets(tr.begin(), tr.end());
  solver_ = SparseSolver<Scalar>(std::move(a), "saddle-point system");
}

template <typename Scalar>
void SaddleSolver<Scalar>::solve(const Vec& f, const Vec& g, Vec& x, Vec& p) const {
  const int n = n_red_ + n_pres_ + (gauge_ ? 1 : 0);
  Vec rhs = Vec::Zero(n);
  rhs.head(n_red_) = f;
  if (g.size() > 0) rhs.segment(n_red_, n_pres_) = -g;
  const Vec sol = solver_.solve(rhs);
  x = sol.head(n_red_);
  p = sol.segment(n_red_, n_pres_);
}

template <typename Scalar>
typename SaddleSolver<Scalar>::Vec SaddleSolver<Scalar>::solve_velocity(const Vec& f) const {
  Vec x, p;
  solve(f, Vec(), x, p);
  return x;
}

template class SaddleSolver<double>;
template class SaddleSolver<std::complex<double>>;

Field solve_dirichlet_stokes_general(const FormSet& forms, const VecX& boundary_values, const VecX& volume_load,
                                     const StokesOptions& opt) {
  const SpacePair& s = *forms.space;
  const ConstraintMap map = dirichlet_map(s);
  VecX ubc = VecX::Zero(s.n_vel);
  for (int n = 0; n < s.n_nodes; ++n) {
    if (s.node_tag[n] == 0) continue;
    for (int c = 0; c < 2; ++c) ubc[s.vel(n, c)] = boundary_values[s.vel(n, c)];
  }
  const SpMat kred = map.P.transpose() * forms.stiff_vel * map.P;
  const SpMat bred = forms.div * map.P;
  SaddleSolver<double> solver(kred, bred, forms.pres_mean, opt.fix_pressure_gauge);
  VecX load = volume_load.size() ? volume_load : VecX::Zero(s.n_vel);
  const VecX f = map.P.transpose() * (load - forms.stiff_vel * ubc);
  const VecX g = -(forms.div * ubc);
  VecX x, p;
  solver.solve(f, g, x, p);
  Field out;
  out.u = map.P * x + ubc;
  out.p = remove_pressure_mean(forms, p);
  out.mean_zero = true;
  return out;
}

Field solve_dirichlet_stokes(const FormSet& forms, const RigidData& body, const VecX& volume_load,
                             const StokesOptions& opt) {
  return solve_dirichlet_stokes_general(forms, rigid_boundary_values(*forms.space, body.ell, body.omega),
                                        volume_load, opt);
}

NeumannSolver::NeumannSolver(std::shared_ptr<const FormSet> forms) : forms_(std::move(forms)) {
  const int n = forms_->space->n_nodes;
  Triplets tr;
  for (int j = 0; j < forms_->lap_scalar.outerSize(); ++j) {
    for (SpMat::InnerIterator it(forms_->lap_scalar, j); it; ++it) tr.emplace_back(it.row(), it.col(), it.value());
  }
  const double scale = 1.0 / forms_->scalar_mean.sum();
  for (int i = 0; i < n; ++i) {
    tr.emplace_back(i, n, forms_->scalar_mean[i] * scale);
    tr.emplace_back(n, i, forms_->scalar_mean[i] * scale);
  }
  SpMat a(n + 1, n + 1);
  a.setFromTriplets(tr.begin(), tr.end());
  solver_ = SparseSolver<double>(std::move(a), "Neumann-Laplace system");
}

VecX NeumannSolver::solve(const VecX& flux) const {
  const double total = flux.sum();
  const double scale = flux.cwiseAbs().sum();
  if (std::abs(total) > 1e-10 * std::max(scale, 1e-300) && std::abs(total) > 1e-300) {
    std::ostringstream ss;
    ss << "Neumann data violates compatibility: <flux, 1> = " << total;
    throw CompatibilityError(ss.str(), "<flux, 1> = 0", total);
  }
  const int n = forms_->space->n_nodes;
  VecX rhs = VecX::Zero(n + 1);
  rhs.head(n) = flux;
  return solver_.solve(rhs).head(n);
}

VecX solve_neumann_laplace(std::shared_ptr<const FormSet> forms, const VecX& flux) {
  return NeumannSolver(std::move(forms)).solve(flux);
}

void write_field(std::ostream& os, const VecX& values) {
  os.precision(17);
  for (Eigen::Index i = 0; i < values.size(); ++i) os << i << ' ' << values[i] << '\n';
}

void write_matrix(std::ostream& os, const SpMat& m) {
  os.precision(17);
  for (int j = 0; j < m.outerSize(); ++j) {
    for (SpMat::InnerIterator it(m, j); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  }
}

}  // namespace fsilab
