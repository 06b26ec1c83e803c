#include "fsilab/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "fsilab/errors.hpp"

namespace fsilab {

namespace {

using MatX = Eigen::MatrixXd;
using MatXc = Eigen::MatrixXcd;

struct KrylovResult {
  std::vector<cplx> nu;
  std::vector<VecXc> vectors;
  std::vector<double> residuals;
  int dim = 0;
  bool converged = false;
};

// Block Krylov subspace of `op` with Rayleigh-Ritz extraction of the k eigenvalues of largest modulus.
// `gram` defines the inner product (nullptr for Euclidean); `symmetric` means op is self-adjoint in it.
KrylovResult block_krylov(int n, const std::function<MatX(const MatX&)>& op, const SpMat* gram, bool symmetric,
                          int k, const KrylovOptions& opt) {
  const int b = std::max(1, opt.block);
  const int max_dim = std::min(opt.max_dim, n);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  MatX x0(n, b);
  for (int j = 0; j < b; ++j) {
    for (int i = 0; i < n; ++i) x0(i, j) = nd(rng);
  }
  MatX V(n, max_dim), GV(n, max_dim), W(n, max_dim);
  int dim = 0;
  auto G = [&](const VecX& v) -> VecX { return gram ? VecX(*gram * v) : v; };

  // Orthonormalise the columns of `blk` against V and among themselves; returns accepted columns.
  auto extend = [&](MatX blk) {
    std::vector<int> added;
    for (int j = 0; j < blk.cols() && dim < max_dim; ++j) {
      VecX v = blk.col(j);
      const double n0 = std::sqrt(std::max(v.dot(G(v)), 0.0));
      if (!(n0 > 0.0)) continue;
      for (int pass = 0; pass < 2; ++pass) {
        if (dim > 0) v -= V.leftCols(dim) * (GV.leftCols(dim).transpose() * v);
      }
      const VecX gv = G(v);
      const double nv = std::sqrt(std::max(v.dot(gv), 0.0));
      if (!(nv > 1e-10 * n0)) continue;
      V.col(dim) = v / nv;
      GV.col(dim) = gv / nv;
      added.push_back(dim);
      ++dim;
    }
    return added;
  };

  KrylovResult res;
  auto first = extend(op(x0));
  int next_check = std::max(3 * k, 40);
  std::vector<int> pending = first;
  while (true) {
    if (pending.empty()) break;
    MatX blk(n, static_cast<int>(pending.size()));
    for (std::size_t j = 0; j < pending.size(); ++j) blk.col(j) = V.col(pending[j]);
    const MatX w = op(blk);
    for (std::size_t j = 0; j < pending.size(); ++j) W.col(pending[j]) = w.col(j);
    const bool full = dim >= max_dim;
    if (dim >= next_check || full) {
      const int m = dim;
      const MatX H = GV.leftCols(m).transpose() * W.leftCols(m);
      std::vector<cplx> nu;
      MatXc S;
      if (symmetric) {
        Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (H + H.transpose()));
        nu.assign(es.eigenvalues().data(), es.eigenvalues().data() + m);
        S = es.eigenvectors().cast<cplx>();
      } else {
        Eigen::EigenSolver<MatX> es(H);
        for (int i = 0; i < m; ++i) nu.push_back(es.eigenvalues()[i]);
        S = es.eigenvectors();
      }
      std::vector<int> order(m);
      for (int i = 0; i < m; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](int a, int c) { return std::abs(nu[a]) > std::abs(nu[c]); });
      res.nu.clear();
      res.vectors.clear();
      res.residuals.clear();
      bool all = true;
      for (int i = 0; i < std::min(k, m); ++i) {
        const int id = order[i];
        const VecXc s = S.col(id);
        const VecXc y = V.leftCols(m).cast<cplx>() * s;
        const VecXc r = W.leftCols(m).cast<cplx>() * s - nu[id] * y;
        auto gnorm = [&](const VecXc& z) {
          const VecX re = z.real(), im = z.imag();
          return std::sqrt(std::max(re.dot(G(re)) + im.dot(G(im)), 0.0));
        };
        const double rel = gnorm(r) / (std::abs(nu[id]) * gnorm(y));
        res.nu.push_back(nu[id]);
        res.vectors.push_back(y);
        res.residuals.push_back(rel);
        if (!(rel <= opt.tol)) all = false;
      }
      res.dim = m;
      if ((all && static_cast<int>(res.nu.size()) == k) || full) {
        res.converged = all && static_cast<int>(res.nu.size()) == k;
        return res;
      }
      next_check = dim + 4 * b;
    }
    pending = extend(w);
  }
  res.dim = dim;
  return res;
}

SpectrumReport finish_report(const KrylovResult& kr, double shift, int dimension, double tol, bool keep_vectors) {
  SpectrumReport rep;
  std::vector<int> order(kr.nu.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::vector<cplx> lam(kr.nu.size());
  for (std::size_t i = 0; i < kr.nu.size(); ++i) lam[i] = shift - 1.0 / kr.nu[i];
  std::sort(order.begin(), order.end(), [&](int a, int b) { return lam[a].real() > lam[b].real(); });
  for (int id : order) {
    rep.eigenvalues.push_back(lam[id]);
    rep.residuals.push_back(kr.residuals[id]);
    if (keep_vectors) rep.vectors.push_back(kr.vectors[id].real());
  }
  rep.abscissa = rep.eigenvalues.empty() ? 0.0 : rep.eigenvalues.front().real();
  rep.eta0 = -rep.abscissa;
  rep.dimension = dimension;
  rep.krylov_dim = kr.dim;
  rep.tolerance = tol;
  rep.converged = kr.converged;
  return rep;
}

}  // namespace

std::string mesh_id(const Mesh& mesh) {
  std::ostringstream ss;
  ss << "annulus(" << mesh.r_inner << "," << mesh.r_outer << "," << mesh.n_radial << "," << mesh.n_angular << ")";
  return ss.str();
}

SpectrumReport eigen_spectrum(const MonolithicPencil& pencil, int k, const KrylovOptions& opt) {
  if (k < 1) throw Error("eigen_spectrum: k must be positive");
  const int n = pencil.n_red();
  const SpMat K = pencil.A + opt.shift * pencil.E;
  SaddleSolver<double> solver(K, pencil.B, pencil.forms->pres_mean, true);
  auto op = [&](const MatX& x) {
    MatX y(x.rows(), x.cols());
    for (int j = 0; j < x.cols(); ++j) y.col(j) = solver.solve_velocity(pencil.E * x.col(j));
    return y;
  };
  const KrylovResult kr = block_krylov(n, op, &pencil.E, true, k, opt);
  SpectrumReport rep = finish_report(kr, opt.shift, n, opt.tol, true);
  rep.mesh_id = mesh_id(*pencil.forms->space->mesh);
  if (!rep.converged) {
    std::ostringstream ss;
    ss << "eigen_spectrum: Krylov iteration did not converge within " << opt.max_dim << " vectors";
    throw SolverError(ss.str());
  }
  return rep;
}

SpectrumReport eigen_spectrum_afs(const AFSPencil& p, int k, const KrylovOptions& opt) {
  if (k < 1) throw Error("eigen_spectrum_afs: k must be positive");
  const int nf = p.n_free(), np = static_cast<int>(p.B0.rows());
  const int n = nf + 3;
  const double s = opt.shift;
  Triplets tr;
  auto add = [&tr](const SpMat& m, int r0, int c0, double scale, bool transpose) {
    for (int j = 0; j < m.outerSize(); ++j) {
      for (SpMat::InnerIterator it(m, j); it; ++it) {
        if (transpose) {
          tr.emplace_back(r0 + it.col(), c0 + it.row(), scale * it.value());
        } else {
          tr.emplace_back(r0 + it.row(), c0 + it.col(), scale * it.value());
        }
      }
    }
  };
  add(p.K00, 0, 0, 1.0, false);
  if (s != 0.0) add(p.M00, 0, 0, s, false);
  for (int j = 0; j < 3; ++j) {
    if (s != 0.0) {
      for (int i = 0; i < nf; ++i) tr.emplace_back(i, nf + j, s * p.MW(i, j));
    }
    for (int i = 0; i < nf; ++i) tr.emplace_back(nf + j, i, -p.C1(j, i));
    for (int l = 0; l < 3; ++l) tr.emplace_back(nf + j, nf + l, s * p.K(j, l) + p.B(j, l));
  }
  add(p.B0, 0, n, -1.0, true);
  add(p.B0, n, 0, -1.0, false);
  const double scale = 1.0 / p.pres_mean.sum();
  for (int i = 0; i < np; ++i) {
    tr.emplace_back(n + i, n + np, p.pres_mean[i] * scale);
    tr.emplace_back(n + np, n + i, p.pres_mean[i] * scale);
  }
  SpMat a(n + np + 1, n + np + 1);
  a.setFromTriplets(tr.begin(), tr.end());
  SparseSolver<double> solver(std::move(a), "reduced fluid-structure shift-invert system");
  auto op = [&](const MatX& x) {
    MatX y(x.rows(), x.cols());
    VecX rhs = VecX::Zero(n + np + 1);
    for (int j = 0; j < x.cols(); ++j) {
      rhs.setZero();
      rhs.head(nf) = p.M00 * x.col(j).head(nf) + p.MW * x.col(j).tail<3>();
      rhs.segment(nf, 3) = p.K * x.col(j).tail<3>();
      y.col(j) = solver.solve(rhs).head(n);
    }
    return y;
  };
  const KrylovResult kr = block_krylov(n, op, nullptr, false, k, opt);
  SpectrumReport rep = finish_report(kr, s, n, opt.tol, false);
  if (!rep.converged) {
    std::ostringstream ss;
    ss << "eigen_spectrum_afs: Krylov iteration did not converge within " << opt.max_dim << " vectors";
    throw SolverError(ss.str());
  }
  return rep;
}

namespace {

// Orthonormal basis of the null space of b (dense).
MatX null_space(const SpMat& b) {
  const MatX bt = MatX(b).transpose();
  Eigen::ColPivHouseholderQR<MatX> qr(bt);
  const int r = static_cast<int>(qr.rank());
  const MatX q = qr.householderQ();
  return q.rightCols(bt.rows() - r);
}

}  // namespace

SpectrumReport dense_spectrum(const MonolithicPencil& pencil, int k) {
  const MatX z = null_space(pencil.B);
  const MatX e = z.transpose() * (pencil.E * z);
  const MatX a = z.transpose() * (pencil.A * z);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatX> es(0.5 * (a + a.transpose()), 0.5 * (e + e.transpose()));
  if (es.info() != Eigen::Success) throw SolverError("dense_spectrum: eigensolver failed");
  SpectrumReport rep;
  const int m = static_cast<int>(es.eigenvalues().size());
  for (int i = 0; i < std::min(k, m); ++i) {
    rep.eigenvalues.push_back(-es.eigenvalues()[i]);
    rep.residuals.push_back(0.0);
    rep.vectors.push_back(z * es.eigenvectors().col(i));
  }
  rep.abscissa = rep.eigenvalues.front().real();
  rep.eta0 = -rep.abscissa;
  rep.dimension = m;
  rep.converged = true;
  rep.mesh_id = mesh_id(*pencil.forms->space->mesh);
  return rep;
}

SpectrumReport dense_spectrum_afs(const AFSPencil& p, int k) {
  const MatX z = null_space(p.B0);
  const int m = static_cast<int>(z.cols());
  MatX e = MatX::Zero(m + 3, m + 3), s = MatX::Zero(m + 3, m + 3);
  e.topLeftCorner(m, m) = z.transpose() * (p.M00 * z);
  e.topRightCorner(m, 3) = z.transpose() * p.MW;
  e.bottomRightCorner(3, 3) = p.K;
  s.topLeftCorner(m, m) = -(z.transpose() * (p.K00 * z));
  s.bottomLeftCorner(3, m) = p.C1 * z;
  s.bottomRightCorner(3, 3) = -p.B;
  Eigen::GeneralizedEigenSolver<MatX> es(s, e);
  std::vector<cplx> lam;
  for (int i = 0; i < m + 3; ++i) lam.push_back(es.eigenvalues()[i]);
  std::sort(lam.begin(), lam.end(), [](cplx a, cplx b) { return a.real() > b.real(); });
  SpectrumReport rep;
  for (int i = 0; i < std::min(k, m + 3); ++i) {
    rep.eigenvalues.push_back(lam[i]);
    rep.residuals.push_back(0.0);
  }
  rep.abscissa = rep.eigenvalues.front().real();
  rep.eta0 = -rep.abscissa;
  rep.dimension = m + 3;
  rep.converged = true;
  return rep;
}

double energy_identity_residual(const MonolithicPencil& pencil, cplx lambda, const VecX& x) {
  const double ex = x.dot(pencil.E * x), ax = x.dot(pencil.A * x);
  return std::abs(lambda.real() * ex + ax) / std::abs(ax);
}

namespace {

SpMatC shifted(const MonolithicPencil& p, cplx lambda) {
  SpMatC k = p.E.cast<cplx>() * lambda + p.A.cast<cplx>();
  k.makeCompressed();
  return k;
}

}  // namespace

Resolvent::Resolvent(const MonolithicPencil& pencil, cplx lambda)
    : pencil_(&pencil), lambda_(lambda), solver_(shifted(pencil, lambda), pencil.B, pencil.forms->pres_mean, true) {}

VecXc Resolvent::solve(const VecXc& rhs, VecXc& pressure) const {
  VecXc x;
  solver_.solve(rhs, VecXc(), x, pressure);
  const double rn = rhs.norm(), xn = x.norm();
  if (rn > 0.0 && xn > 1e12 * rn) {
    std::ostringstream ss;
    ss << "resolvent: lambda = " << lambda_ << " is within about " << rn / xn << " of the spectrum";
    throw SolverError(ss.str());
  }
  return x;
}

VecXc Resolvent::solve(const VecXc& rhs) const {
  VecXc p;
  return solve(rhs, p);
}

VecXc Resolvent::apply(const VecXc& F) const {
  const VecXc ef = pencil_->E.cast<cplx>() * F;
  return lambda_ * solve(ef);
}

VecXc Resolvent::apply_adjoint(const VecXc& z) const {
  const VecXc s = solve(VecXc(z.conjugate())).conjugate();
  return std::conj(lambda_) * (pencil_->E.cast<cplx>() * s);
}

ResolventSolution resolvent_solve(const MonolithicPencil& pencil, cplx lambda, const VecXc& f,
                                  const Eigen::Vector2cd& g1, cplx g2) {
  Resolvent r(pencil, lambda);
  const FormSet& forms = *pencil.forms;
  VecXc rhs = VecXc::Zero(pencil.n_red());
  if (f.size()) rhs = pencil.map.P.cast<cplx>().transpose() * (forms.mass_vel.cast<cplx>() * f);
  if (pencil.has_body()) {
    rhs.tail<3>() += Eigen::Vector3cd(g1[0], g1[1], g2);
  }
  ResolventSolution out;
  VecXc p;
  const VecXc x = r.solve(rhs, p);
  out.u = pencil.map.P.cast<cplx>() * x;
  out.p = p;
  if (pencil.has_body()) {
    out.ell = x.segment<2>(pencil.map.n_free);
    out.omega = x[pencil.map.n_free + 2];
  } else {
    out.ell.setZero();
    out.omega = 0.0;
  }
  const VecXc res = (pencil.E.cast<cplx>() * x) * lambda + pencil.A.cast<cplx>() * x -
                    pencil.B.cast<cplx>().transpose() * p - rhs;
  const double rn = rhs.norm();
  out.residual = rn > 0 ? res.norm() / rn : res.norm();
  return out;
}

ReducedNorm::ReducedNorm(const MonolithicPencil& pencil, double q) : pencil_(&pencil), q_(q) {
  if (!(q > 1.0)) throw Error("norm exponent must exceed 1");
  const FormSet& f = *pencil.forms;
  const SpacePair& s = *f.space;
  // HRZ lumping: diagonal scaled to preserve the total mass of each component
  const VecX d = f.mass_vel.diagonal();
  const double total = s.total_area();
  const double dsum = d.head(s.n_nodes).sum();
  const VecX lumped = d * (total / dsum);
  w_.resize(pencil.n_red());
  for (int i = 0; i < pencil.map.n_free; ++i) w_[i] = lumped[pencil.map.free_dofs[i]];
  if (pencil.has_body()) {
    double wt = pencil.body.m, wr = pencil.body.J;
    for (int n : s.body_nodes) {
      wt += lumped[s.vel(n, 0)];
      wr += lumped[s.vel(n, 0)] * s.node_coords[n].squaredNorm();
    }
    const int c = pencil.map.n_free;
    w_[c] = w_[c + 1] = wt;
    w_[c + 2] = wr;
  }
}

double ReducedNorm::operator()(const VecXc& x) const {
  if (q_ == 2.0) {
    const VecX re = x.real(), im = x.imag();
    return std::sqrt(std::max(re.dot(pencil_->E * re) + im.dot(pencil_->E * im), 0.0));
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += w_[i] * std::pow(std::abs(x[i]), q_);
  return std::pow(s, 1.0 / q_);
}

NormEstimate resolvent_norm(const Resolvent& r, const ReducedNorm& norm, int max_iter, double tol,
                            std::uint64_t seed) {
  const int n = static_cast<int>(norm.weights().size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  VecXc x(n);
  for (int i = 0; i < n; ++i) x[i] = nd(rng);
  x /= norm(x);
  NormEstimate best;
  double prev = 0.0;
  const double q = norm.q();
  const VecX& w = norm.weights();
  for (int it = 0; it < max_iter; ++it) {
    const VecXc y = r.apply(x);
    const double val = norm(y);
    if (val > best.value) {
      best.value = val;
      best.maximiser = x;
    }
    best.iterations = it + 1;
    if (it > 0 && std::abs(val - prev) <= tol * val) break;
    prev = val;
    if (!(val > 0.0)) break;
    VecXc next;
    if (q == 2.0) {
      // E-adjoint: T* y = conj(lambda) S_conj(lambda) E y = conj(T conj(y))
      next = r.apply(VecXc(y.conjugate())).conjugate();
    } else {
      const double qp = q / (q - 1.0);
      VecXc z(n);
      for (int i = 0; i < n; ++i) {
        const double a = std::abs(y[i]);
        z[i] = a > 0 ? w[i] * std::pow(a, q - 1.0) * (y[i] / a) : cplx(0.0);
      }
      const VecXc s = r.apply_adjoint(z);
      next.resize(n);
      for (int i = 0; i < n; ++i) {
        const cplx t = s[i] * std::pow(w[i], -1.0 / q);
        const double a = std::abs(t);
        next[i] = a > 0 ? std::pow(w[i], -1.0 / q) * std::pow(a, qp - 1.0) * (t / a) : cplx(0.0);
      }
    }
    const double nn = norm(next);
    if (!(nn > 0.0)) break;
    x = next / nn;
  }
  return best;
}

std::vector<cplx> LambdaGrid::points() const {
  std::vector<cplx> out;
  std::vector<double> radii;
  for (int i = 0; i < n_radii; ++i) {
    const double t = n_radii > 1 ? static_cast<double>(i) / (n_radii - 1) : 0.0;
    radii.push_back(r_min * std::pow(r_max / r_min, t));
  }
  for (double r : radii) {
    for (int j = 0; j < n_angles; ++j) {
      const double th = n_angles > 1 ? -std::numbers::pi / 2 + std::numbers::pi * j / (n_angles - 1) : 0.0;
      out.push_back(std::polar(r, th));
    }
    if (include_sector) {
      out.push_back(std::polar(r, sector_angle));
      out.push_back(std::polar(r, -sector_angle));
    }
  }
  return out;
}

ScanReport resolvent_scan(const MonolithicPencil& pencil, const std::vector<cplx>& lambdas, double q, int max_iter,
                          double tol) {
  ScanReport rep;
  rep.q = q;
  ReducedNorm norm(pencil, q);
  for (const cplx& lam : lambdas) {
    ScanPoint pt;
    pt.lambda = lam;
    try {
      Resolvent r(pencil, lam);
      pt.norm = resolvent_norm(r, norm, max_iter, tol).value;
      rep.sup = std::max(rep.sup, pt.norm);
      if (lam.real() >= -1e-14 * std::abs(lam)) rep.sup_right_half = std::max(rep.sup_right_half, pt.norm);
    } catch (const Error& e) {
      pt.ok = false;
      pt.error = e.what();
      ++rep.failures;
    }
    rep.points.push_back(pt);
  }
  return rep;
}

RBoundEstimate estimate_r_bound(const MonolithicPencil& pencil, const std::vector<cplx>& lambda_samples,
                                const RBoundOptions& opt) {
  if (opt.n < 1) throw Error("estimate_r_bound: n must be at least 1");
  if (lambda_samples.empty()) throw Error("estimate_r_bound: no lambda samples");
  RBoundEstimate est;
  est.n = opt.n;
  est.trials = opt.trials;
  est.p = opt.p;
  est.q = opt.q;
  ReducedNorm norm(pencil, opt.q);
  std::vector<std::unique_ptr<Resolvent>> res;
  std::vector<NormEstimate> single;
  for (std::size_t s = 0; s < lambda_samples.size(); ++s) {
    res.push_back(std::make_unique<Resolvent>(pencil, lambda_samples[s]));
    single.push_back(resolvent_norm(*res.back(), norm, 40, 1e-9, opt.seed + 17 * s));
    est.uniform_bound = std::max(est.uniform_bound, single.back().value);
  }
  // families of identical (T, x*) reproduce the single-operator norm exactly for every n and p
  est.estimate = est.uniform_bound;
  est.std_error = 0.0;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::size_t> pick(0, lambda_samples.size() - 1);
  std::bernoulli_distribution coin(0.5);
  const int dim = pencil.n_red();
  const int K = std::max(2, opt.sign_samples);
  for (int t = 0; t < opt.trials; ++t) {
    std::vector<VecXc> xs(opt.n), ys(opt.n);
    for (int j = 0; j < opt.n; ++j) {
      const std::size_t s = j == 0 ? static_cast<std::size_t>(t) % lambda_samples.size() : pick(rng);
      VecXc x(dim);
      for (int i = 0; i < dim; ++i) x[i] = cplx(nd(rng), nd(rng));
      x /= norm(x);
      xs[j] = x;
      ys[j] = res[s]->apply(x);
    }
    VecX a(K), b(K);
    for (int k = 0; k < K; ++k) {
      VecXc sx = VecXc::Zero(dim), sy = VecXc::Zero(dim);
      for (int j = 0; j < opt.n; ++j) {
        const double e = coin(rng) ? 1.0 : -1.0;
        sx += e * xs[j];
        sy += e * ys[j];
      }
      a[k] = std::pow(norm(sy), opt.p);
      b[k] = std::pow(norm(sx), opt.p);
    }
    const double am = a.mean(), bm = b.mean();
    const double va = (a.array() - am).square().sum() / (K - 1);
    const double vb = (b.array() - bm).square().sum() / (K - 1);
    const double cab = ((a.array() - am) * (b.array() - bm)).sum() / (K - 1);
    const double R = am / bm;
    const double varR = (va / (bm * bm) + am * am * vb / std::pow(bm, 4) - 2 * am * cab / std::pow(bm, 3)) / K;
    const double ratio = std::pow(R, 1.0 / opt.p);
    const double se = std::pow(R, 1.0 / opt.p - 1.0) / opt.p * std::sqrt(std::max(varR, 0.0));
    est.trial_ratios.push_back(ratio);
    if (ratio > est.estimate) {
      est.estimate = ratio;
      est.std_error = se;
    }
  }
  return est;
}

}  // namespace fsilab
