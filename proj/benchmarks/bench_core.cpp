// Microbenchmarks for the hot paths: kernel construction, smoothed field
// evaluation, trajectory integration, the backward adjoint pass, and a
// desk-scale solve. Run ./bench_core --benchmark_filter=<regex> to narrow.

#include <benchmark/benchmark.h>

#include <advoc/adjoint.hpp>
#include <advoc/io.hpp>
#include <advoc/mollify.hpp>
#include <advoc/solver.hpp>
#include <advoc/trajectory.hpp>

namespace {

using advoc::mollify::Vec;
using advoc::adjoint::integrate_Z_hat;
using advoc::controls::FiberPolicy;
using advoc::controls::RelaxedControl;
using advoc::io::load_problem_file;
using advoc::mollify::FredholmApprox;
using advoc::mollify::Mollifier;
using advoc::mollify::fredholm_grad;
using advoc::mollify::fredholm_value;
using advoc::mollify::make_mollifier;
using advoc::problem::ProblemSpec;
using advoc::solver::SolveConfig;
using advoc::solver::run_j_sweep;
using advoc::trajectory::Adversary;
using advoc::trajectory::Trajectory;
using advoc::trajectory::integrate_fiber;
using advoc::trajectory::integrate_perturbed;

const ProblemSpec& worked_spec() {
  static const ProblemSpec spec =
      load_problem_file(std::string(ADVOC_PROBLEMS_DIR) + "/abs_bilinear_minimax.json");
  return spec;
}

void bm_make_mollifier(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(make_mollifier(dim));
  }
}
BENCHMARK(bm_make_mollifier)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMicrosecond);

void bm_fredholm_value(benchmark::State& state) {
  const ProblemSpec& spec = worked_spec();
  const Mollifier moll = make_mollifier(spec.f_tilde.dim_state);
  const FredholmApprox fa{&spec.f_tilde, &moll, static_cast<int>(state.range(0))};
  const Vec x = spec.b_hat_mid(); // interior of the joint domain box
  for (auto _ : state) {
    benchmark::DoNotOptimize(fredholm_value(fa, 0.5, x, 1, 0));
  }
}
BENCHMARK(bm_fredholm_value)->Arg(4)->Arg(16)->Unit(benchmark::kMicrosecond);

void bm_fredholm_grad(benchmark::State& state) {
  const ProblemSpec& spec = worked_spec();
  const Mollifier moll = make_mollifier(spec.f_tilde.dim_state);
  const FredholmApprox fa{&spec.f_tilde, &moll, static_cast<int>(state.range(0))};
  const Vec x = spec.b_hat_mid(); // interior of the joint domain box
  for (auto _ : state) {
    benchmark::DoNotOptimize(fredholm_grad(fa, 0.5, x, 1, 0));
  }
}
BENCHMARK(bm_fredholm_grad)->Arg(4)->Arg(16)->Unit(benchmark::kMicrosecond);

void bm_integrate_fiber(benchmark::State& state) {
  const ProblemSpec& spec = worked_spec();
  const int n = 500;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const auto pi = FiberPolicy::uniform(n, spec.u_grid, spec.v_grid);
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate_fiber(spec, sigma, pi, spec.b_hat_mid(), n));
  }
}
BENCHMARK(bm_integrate_fiber)->Unit(benchmark::kMicrosecond);

void bm_integrate_perturbed(benchmark::State& state) {
  const ProblemSpec& spec = worked_spec();
  const int n = 200;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const auto pi = FiberPolicy::uniform(n, spec.u_grid, spec.v_grid);
  const int j = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        integrate_perturbed(spec, j, sigma, Adversary::of(pi), spec.b_hat_mid(), n));
  }
}
BENCHMARK(bm_integrate_perturbed)->Arg(8)->Unit(benchmark::kMillisecond);

void bm_adjoint_backward(benchmark::State& state) {
  const ProblemSpec& spec = worked_spec();
  const int n = 200, j = 8;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const auto pi = FiberPolicy::uniform(n, spec.u_grid, spec.v_grid);
  const Trajectory yh =
      integrate_perturbed(spec, j, sigma, Adversary::of(pi), spec.b_hat_mid(), n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate_Z_hat(spec, j, sigma, Adversary::of(pi), yh));
  }
}
BENCHMARK(bm_adjoint_backward)->Unit(benchmark::kMillisecond);

void bm_solve_sweep(benchmark::State& state) {
  const ProblemSpec& spec = worked_spec();
  SolveConfig cfg;
  cfg.n_steps = 100;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_j_sweep(spec, {4, 8}, cfg));
  }
}
BENCHMARK(bm_solve_sweep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
