#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "fsilab/nonlinear.hpp"
#include "fsilab/spectral.hpp"

using namespace fsilab;

namespace {

struct Setup {
  std::shared_ptr<const FormSet> forms;
  LiftingBasis basis;
  MonolithicPencil mono;
};

Setup make(int nr) {
  Setup s;
  auto mesh = std::make_shared<Mesh>(generate_annulus(0.5, 2.0, nr, 6 * nr));
  s.forms = assemble_forms(build_spaces(mesh), 1.0);
  s.basis = lifting_basis(*s.forms);
  s.mono = assemble_monolithic(s.forms, BodyParams::disk(1.0, 0.5));
  return s;
}

const Setup& cached(int nr) {
  static std::map<int, std::unique_ptr<Setup>> cache;
  auto& p = cache[nr];
  if (!p) p = std::make_unique<Setup>(make(nr));
  return *p;
}

LinearInputs lifted(const Setup& s, const Vec3& xi, TimeGrid grid) {
  LinearInputs in;
  in.grid = grid;
  in.u0 = s.basis.velocity(xi);
  in.ell0 = xi.head<2>();
  in.omega0 = xi[2];
  return in;
}

}  // namespace

static void BM_Assemble(benchmark::State& state) {
  const int nr = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto mesh = std::make_shared<Mesh>(generate_annulus(0.5, 2.0, nr, 6 * nr));
    auto forms = assemble_forms(build_spaces(mesh), 1.0);
    benchmark::DoNotOptimize(assemble_monolithic(forms, BodyParams::disk(1.0, 0.5)).n_red());
  }
}
BENCHMARK(BM_Assemble)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_AddedMass(benchmark::State& state) {
  const Setup& s = cached(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    const ProjectionContext ctx(s.forms);
    benchmark::DoNotOptimize(added_mass_M(ctx)(0, 0));
  }
}
BENCHMARK(BM_AddedMass)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_Spectrum(benchmark::State& state) {
  const Setup& s = cached(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(eigen_spectrum(s.mono, 10).abscissa);
}
BENCHMARK(BM_Spectrum)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_ResolventNorm(benchmark::State& state) {
  const Setup& s = cached(8);
  const ReducedNorm norm(s.mono, 2.0);
  for (auto _ : state) {
    const Resolvent r(s.mono, cplx(1.0, 10.0));
    benchmark::DoNotOptimize(resolvent_norm(r, norm).value);
  }
}
BENCHMARK(BM_ResolventNorm)->Unit(benchmark::kMillisecond);

static void BM_LinearSteps(benchmark::State& state) {
  const Setup& s = cached(8);
  StepperOptions opt;
  opt.scheme = state.range(0) ? Scheme::BDF2 : Scheme::Theta;
  opt.diagnostics = false;
  const int steps = 50;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_linear(s.mono, lifted(s, Vec3(1.0, 0.5, 2.0), {0.05, steps}), opt).x.back());
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_LinearSteps)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_NonlinearTerms(benchmark::State& state) {
  const Setup& s = cached(static_cast<int>(state.range(0)));
  const NonlinearProblem prob = NonlinearProblem::create(s.forms, BodyParams::disk(1.0, 0.5));
  StepperOptions opt;
  opt.diagnostics = false;
  const int steps = 10;
  const TimeSeries ts = simulate_linear(prob.pencil, lifted(s, Vec3(1e-3, 5e-4, 2e-3), {0.05, steps}), opt);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_nonlinear(prob, ts).F.size());
  state.SetItemsProcessed(state.iterations() * (steps + 1));
}
BENCHMARK(BM_NonlinearTerms)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
