#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fsilab/errors.hpp"
#include "fsilab/nonlinear.hpp"

namespace fsilab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scenario {
  std::shared_ptr<Mesh> mesh;
  std::shared_ptr<const FormSet> forms;
  BodyParams body;
};

Scenario build(const ScenarioConfig& c) {
  Scenario s;
  s.mesh = std::make_shared<Mesh>(generate_annulus(c.r_inner, c.r_outer, c.n_radial, c.n_angular));
  s.forms = assemble_forms(build_spaces(s.mesh), c.nu);
  s.body = BodyParams::disk(c.rho_s, c.r_inner);
  return s;
}

json mat(const Mat3& m) {
  json a = json::array();
  for (int i = 0; i < 3; ++i) a.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return a;
}

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string r = "\"";
  for (char ch : s) r += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return r + "\"";
}

class Writer {
 public:
  explicit Writer(fs::path out) : out_(std::move(out)) { fs::create_directories(out_); }
  void json_file(const std::string& name, const json& j) {
    std::ofstream f(out_ / name);
    f << j.dump(2) << "\n";
    check(f, name);
  }
  std::ofstream stream(const std::string& name) {
    files_.push_back(name);
    std::ofstream f(out_ / name);
    if (!f) throw Error("cannot write " + (out_ / name).string());
    f << std::setprecision(12);
    return f;
  }
  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return out_; }

 private:
  void check(std::ofstream& f, const std::string& name) {
    if (!f) throw Error("cannot write " + (out_ / name).string());
    files_.push_back(name);
  }
  fs::path out_;
  std::vector<std::string> files_;
};

StepperOptions stepper(const ScenarioConfig& c) {
  StepperOptions o;
  o.scheme = c.scheme;
  o.theta = c.theta;
  o.diag_q = c.q;
  return o;
}

void cmd_mesh(const ScenarioConfig& c, Writer& w) {
  const Mesh mesh = generate_annulus(c.r_inner, c.r_outer, c.n_radial, c.n_angular);
  {
    auto f = w.stream("mesh.txt");
    write_mesh(f, mesh);
  }
  const QualityReport q = mesh_quality(mesh);
  w.json_file("mesh.json", {{"mesh_id", mesh_id(mesh)},
                            {"vertices", mesh.vertices.size()},
                            {"triangles", mesh.triangles.size()},
                            {"boundary_edges", mesh.boundary_edges.size()},
                            {"h_max", q.h_max},
                            {"min_angle_deg", q.min_angle_deg},
                            {"area", q.area},
                            {"exact_area", q.exact_area},
                            {"area_defect", q.area_defect},
                            {"outer_length", q.outer_length},
                            {"body_length", q.body_length},
                            {"valid", q.valid()},
                            {"violations", q.violations}});
}

void cmd_addedmass(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const ProjectionContext ctx(s.forms);
  const LiftingBasis basis = lifting_basis(*s.forms);
  const CouplingMatrices cm = assemble_AFS(ctx, basis, s.body);
  const SymmetryReport m = analyse_symmetric(cm.M), b = analyse_symmetric(cm.B);
  const double ri2 = c.r_inner * c.r_inner, ro2 = c.r_outer * c.r_outer;
  const double m11 = M_PI * ri2 * (ri2 + ro2) / (ro2 - ri2);
  w.json_file("addedmass.json",
              {{"M", mat(cm.M)},
               {"M_consistent", mat(cm.M_consistent)},
               {"B", mat(cm.B)},
               {"K", mat(cm.K.K)},
               {"K_condition", num(cm.K.condition)},
               {"K_consistent_condition", num(cm.K_consistent.condition)},
               {"mass", s.body.m},
               {"inertia", s.body.J},
               {"m11_analytic", m11},
               {"m11_relative_error", std::abs(cm.M(0, 0) / m11 - 1.0)},
               {"M_asymmetry", m.asymmetry},
               {"M_min_eigenvalue", m.min_eigenvalue},
               {"M_symmetric", m.asymmetry <= 1e-10},
               {"M_psd", m.min_eigenvalue >= -1e-10},
               {"B_asymmetry", b.asymmetry},
               {"B_min_eigenvalue", b.min_eigenvalue},
               {"B_symmetric", b.asymmetry <= 1e-10},
               {"B_pd", b.min_eigenvalue > 0.0},
               {"K_invertible", std::isfinite(cm.K.condition)}});
}

SpectrumReport spectrum_of(const ScenarioConfig& c, const MonolithicPencil& pencil, int k) {
  KrylovOptions o = c.krylov;
  o.seed = c.seed;
  return eigen_spectrum(pencil, k, o);
}

void cmd_spectrum(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const MonolithicPencil pencil = assemble_monolithic(s.forms, s.body);
  const SpectrumReport r = spectrum_of(c, pencil, c.k);
  {
    auto f = w.stream("eigenvalues.csv");
    f << "index,re,im,residual\n";
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
      f << i << "," << r.eigenvalues[i].real() << "," << r.eigenvalues[i].imag() << "," << r.residuals[i] << "\n";
    }
  }
  json ev = json::array();
  for (const auto& l : r.eigenvalues) ev.push_back({l.real(), l.imag()});
  w.json_file("spectrum.json", {{"abscissa", r.abscissa},
                                {"eta0", r.eta0},
                                {"eigenvalues", ev},
                                {"max_residual", *std::max_element(r.residuals.begin(), r.residuals.end())},
                                {"converged", r.converged},
                                {"dimension", r.dimension},
                                {"krylov_dim", r.krylov_dim},
                                {"mesh_id", r.mesh_id},
                                {"tolerance", r.tolerance}});
}

void cmd_scan(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const MonolithicPencil pencil = assemble_monolithic(s.forms, s.body);
  const ScanReport r = resolvent_scan(pencil, c.grid.points(), c.q);
  {
    auto f = w.stream("scan.csv");
    f << "re,im,norm,ok,error\n";
    for (const auto& p : r.points) {
      f << p.lambda.real() << "," << p.lambda.imag() << "," << p.norm << "," << (p.ok ? 1 : 0) << ","
        << csv_field(p.error) << "\n";
    }
  }
  w.json_file("scan.json", {{"q", r.q},
                            {"points", r.points.size()},
                            {"sup", r.sup},
                            {"sup_right_half", r.sup_right_half},
                            {"failures", r.failures}});
}

void cmd_rbound(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const MonolithicPencil pencil = assemble_monolithic(s.forms, s.body);
  RBoundOptions o;
  o.n = c.rbound_n;
  o.trials = c.rbound_trials;
  o.sign_samples = c.rbound_signs;
  o.p = c.p;
  o.q = c.q;
  o.seed = c.seed;
  const RBoundEstimate r = estimate_r_bound(pencil, c.grid.points(), o);
  {
    auto f = w.stream("rbound.csv");
    f << "trial,ratio\n";
    for (std::size_t i = 0; i < r.trial_ratios.size(); ++i) f << i << "," << r.trial_ratios[i] << "\n";
  }
  w.json_file("rbound.json", {{"n", r.n},
                              {"trials", r.trials},
                              {"p", r.p},
                              {"q", r.q},
                              {"estimate", r.estimate},
                              {"std_error", r.std_error},
                              {"uniform_bound", r.uniform_bound},
                              {"ratio_to_uniform", r.estimate / r.uniform_bound}});
}

json norm_json(const NormReport& n) {
  return {{"p", n.p},           {"q", n.q},
          {"eta", n.eta},       {"u_w2q", n.u_w2q},
          {"u_lq", n.u_lq},     {"dtu_lq", n.dtu_lq},
          {"pi_w1q", n.pi_w1q}, {"ell", n.ell},
          {"dell", n.dell},     {"omega", n.omega},
          {"domega", n.domega}, {"u0_besov_proxy", n.u0_besov},
          {"ell0", n.ell0},     {"omega0", n.omega0},
          {"f_lq", n.f_lq},     {"h_w21", n.h_w21},
          {"g1", n.g1},         {"g2", n.g2},
          {"solution_norm", n.solution_norm},
          {"data_norm", n.data_norm},
          {"ratio", num(n.ratio)},
          {"eta_warning", n.eta_warning}};
}

void cmd_evolve(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const MonolithicPencil pencil = assemble_monolithic(s.forms, s.body);
  const LiftingBasis basis = lifting_basis(*s.forms);
  const double eta0 = spectrum_of(c, pencil, 4).eta0;
  LinearInputs in;
  if (c.forcing) {
    std::mt19937_64 rng(c.seed);
    in = member_inputs(random_member(rng), *s.forms, basis, c.time_grid());
  } else {
    in.grid = c.time_grid();
    in.u0 = basis.velocity(c.xi0);
    in.ell0 = c.xi0.head<2>();
    in.omega0 = c.xi0[2];
  }
  check_compatibility(*s.forms, in.u0, in.ell0, in.omega0, c.p, c.q);
  const TimeSeries ts = simulate_linear(pencil, in, stepper(c));
  {
    auto f = w.stream("series.csv");
    write_series_csv(f, pencil, ts);
  }
  json j = norm_json(norm_accounting(pencil, ts, in, c.p, c.q, c.eta, eta0));
  j["eta0"] = eta0;
  j["scheme"] = scheme_name(c.scheme);
  j["steps"] = ts.grid.steps;
  j["dt"] = ts.grid.dt;
  j["forcing"] = c.forcing;
  w.json_file("norms.json", j);
}

void cmd_maxreg(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const MonolithicPencil pencil = assemble_monolithic(s.forms, s.body);
  const LiftingBasis basis = lifting_basis(*s.forms);
  std::mt19937_64 rng(c.seed);
  std::vector<ForcingMember> members;
  for (int i = 0; i < c.members; ++i) members.push_back(random_member(rng));
  StepperOptions o = stepper(c);
  o.diagnostics = false;
  const MaxRegResult r = maxreg_ensemble(pencil, basis, c.time_grid(), members, c.p, c.q, c.eta, o);
  {
    auto f = w.stream("maxreg.csv");
    f << "member,ratio\n";
    for (std::size_t i = 0; i < r.ratios.size(); ++i) f << i << "," << r.ratios[i] << "\n";
  }
  w.json_file("maxreg.json", {{"members", r.ratios.size()},
                              {"max_ratio", num(r.max_ratio)},
                              {"mean_ratio", num(r.mean_ratio)},
                              {"finite", std::isfinite(r.max_ratio)},
                              {"p", c.p},
                              {"q", c.q},
                              {"eta", c.eta}});
}

void cmd_nonlinear(const ScenarioConfig& c, Writer& w) {
  const Scenario s = build(c);
  const NonlinearProblem prob = NonlinearProblem::create(s.forms, s.body);
  const LiftingBasis basis = lifting_basis(*s.forms);
  const double eta0 = spectrum_of(c, prob.pencil, 4).eta0;
  NonlinearOptions o;
  o.p = c.p;
  o.q = c.q;
  o.eta = c.eta;
  o.gamma = c.gamma;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  o.grid = c.time_grid();
  o.stepper = stepper(c);
  double amp = c.amplitude;
  if (amp == 0.0) {
    LinearInputs in;
    in.grid = o.grid;
    in.u0 = basis.velocity(c.xi0);
    in.ell0 = c.xi0.head<2>();
    in.omega0 = c.xi0[2];
    StepperOptions so = o.stepper;
    so.diagnostics = false;
    const double lin = s_norm(prob.pencil, simulate_linear(prob.pencil, in, so), c.p, c.q, c.eta);
    if (!(lin > 0.0)) throw Error("nonlinear: initial data direction is zero");
    amp = 0.5 * c.gamma / lin;
  }
  const Vec3 xi = amp * c.xi0;
  const PicardResult r = picard_solve(prob, basis.velocity(xi), xi.head<2>(), xi[2], o);
  const PhysicalSeries ph = back_transform(prob, r.solution, c.q);
  {
    auto f = w.stream("physical.csv");
    f << "t,a1,a2,theta,omega,clearance,u_lq,adot,decay\n";
    for (std::size_t n = 0; n < ph.t.size(); ++n) {
      f << ph.t[n] << "," << ph.a[n].x() << "," << ph.a[n].y() << "," << ph.theta[n] << "," << ph.omega[n] << ","
        << ph.clearance[n] << "," << ph.u_lq[n] << "," << ph.adot[n] << "," << ph.decay[n] << "\n";
    }
  }
  json its = json::array();
  for (const auto& it : r.diag.iterates) {
    its.push_back({{"k", it.k},
                   {"s_norm", it.s_norm},
                   {"diff", it.diff},
                   {"factor", it.factor},
                   {"in_ball", it.in_ball},
                   {"data_norm", it.data_norm}});
  }
  std::vector<std::string> warnings = r.diag.warnings;
  if (c.eta >= eta0) warnings.push_back("eta is not below the estimated decay rate eta0");
  const auto& d = r.diag;
  w.json_file("picard.json", {{"iterates", its},
                              {"amplitude", amp},
                              {"gamma", d.gamma},
                              {"gamma0", d.gamma0},
                              {"gamma_tilde", num(d.gamma_tilde)},
                              {"C_N", d.C_N},
                              {"initial_data_norm", d.initial_data_norm},
                              {"linear_s_norm", d.linear_s_norm},
                              {"max_factor", d.max_factor},
                              {"all_in_ball", d.all_in_ball},
                              {"small_data_gate", d.small_data_gate},
                              {"converged", d.converged},
                              {"eta", c.eta},
                              {"eta0", eta0},
                              {"tail_weight", std::exp(-c.eta * o.grid.horizon())},
                              {"warnings", warnings}});
  w.json_file("nonlinear.json", {{"min_clearance", ph.min_clearance},
                                 {"alpha", ph.alpha},
                                 {"clearance_ok", ph.clearance_ok},
                                 {"decay_slope", ph.decay_slope},
                                 {"decay_ok", ph.decay_slope <= -0.8 * c.eta},
                                 {"max_det_drift", ph.max_det_drift},
                                 {"max_q_orth", ph.max_q_orth},
                                 {"final_a", {ph.a.back().x(), ph.a.back().y()}},
                                 {"final_theta", ph.theta.back()}});
}

void cmd_report(const ScenarioConfig& c, Writer& w) {
  json rep;
  rep["config"] = c.canonical();
  rep["config_hash"] = c.hash();
  json artifacts = json::object();
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(w.dir())) {
    const std::string name = e.path().filename().string();
    if (e.path().extension() == ".json" && name != "report.json" && name.find(".manifest.") == std::string::npos) {
      found.push_back(e.path());
    }
  }
  std::sort(found.begin(), found.end());
  for (const auto& p : found) {
    std::ifstream f(p);
    try {
      artifacts[p.stem().string()] = json::parse(f);
    } catch (const json::exception& e) {
      artifacts[p.stem().string()] = {{"error", e.what()}};
    }
  }
  rep["artifacts"] = artifacts;
  w.json_file("report.json", rep);
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> n = {"mesh",   "addedmass", "spectrum",  "scan",  "rbound",
                                             "evolve", "maxreg",    "nonlinear", "report"};
  return n;
}

std::vector<std::string> run_command(const std::string& command, const ScenarioConfig& cfg, const fs::path& out) {
  Writer w(out);
  if (command == "mesh") cmd_mesh(cfg, w);
  else if (command == "addedmass") cmd_addedmass(cfg, w);
  else if (command == "spectrum") cmd_spectrum(cfg, w);
  else if (command == "scan") cmd_scan(cfg, w);
  else if (command == "rbound") cmd_rbound(cfg, w);
  else if (command == "evolve") cmd_evolve(cfg, w);
  else if (command == "maxreg") cmd_maxreg(cfg, w);
  else if (command == "nonlinear") cmd_nonlinear(cfg, w);
  else if (command == "report") cmd_report(cfg, w);
  else throw Error("unknown command '" + command + "'");
  w.json_file(command + ".manifest.json", {{"command", command},
                                           {"config_hash", cfg.hash()},
                                           {"seed", cfg.seed},
                                           {"files", w.files()}});
  return w.files();
}

}  // namespace fsilab::cli
