#include <benchmark/benchmark.h>

#include <memory>

#include "fraclap/evolution.hpp"
#include "fraclap/fracsolve.hpp"
#include "fraclap/mesh.hpp"

using namespace fraclap;

namespace {

SystemPtr disc_system(int rings) {
  return assemble_shared(std::make_shared<Mesh>(disc_mesh(1.0, rings)),
                         BC::Neumann);
}

void bm_assemble(benchmark::State& state) {
  auto mesh = std::make_shared<Mesh>(disc_mesh(1.0, state.range(0)));
  for (auto _ : state) {
    FemSystem sys = assemble(mesh, BC::Neumann);
    benchmark::DoNotOptimize(sys.S.coeff(0, 0));
  }
  state.SetLabel(std::to_string(mesh->num_nodes()) + " nodes");
}
BENCHMARK(bm_assemble)->Arg(10)->Arg(25)->Arg(51)->Unit(benchmark::kMillisecond);

void bm_rational_fit(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    RationalApprox r = fit_best(0.5, 1.0, 1e5, n);
    benchmark::DoNotOptimize(r.achieved_sup_error);
  }
}
BENCHMARK(bm_rational_fit)->Arg(6)->Arg(12)->Unit(benchmark::kMillisecond);

void bm_fractional_apply(benchmark::State& state) {
  auto sys = disc_system(static_cast<int>(state.range(0)));
  FractionalInverse inv(sys, 0.5, 12);
  Vec b = load_vector(*sys, [](double x, double y) { return 1.0 + x - y; });
  for (auto _ : state) {
    Vec u = inv.apply(b);
    benchmark::DoNotOptimize(u.sum());
  }
  state.SetLabel(std::to_string(sys->num_free()) + " dof");
}
BENCHMARK(bm_fractional_apply)
    ->Arg(10)
    ->Arg(25)
    ->Arg(51)
    ->Unit(benchmark::kMillisecond);

void bm_evolution_step(benchmark::State& state) {
  auto sys = disc_system(static_cast<int>(state.range(0)));
  EvolutionConfig cfg = default_config(EvolutionModel::KellerSegel);
  cfg.s = 0.75;
  cfg.n_rational = 12;
  EvolutionWorkspace ws(sys, cfg);
  State st = initial_state(ws, gaussian_initial_data(sys, 1.0, 0.5));
  for (auto _ : state) {
    st = step_dt(st, ws, 1e-4);
    benchmark::DoNotOptimize(st.mass);
  }
  state.SetLabel(std::to_string(sys->num_free()) + " dof");
}
BENCHMARK(bm_evolution_step)->Arg(25)->Arg(51)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
