// Serial reference vs OpenMP for the hot kernels. Results are identical in
// both modes (checked by the unit tests); this only measures time.
#include "drbsde/execution.hpp"
#include "drbsde/kernels.hpp"
#include "drbsde/market.hpp"
#include "drbsde/neural.hpp"
#include "drbsde/oracle.hpp"
#include "drbsde/solver.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace drbsde;

Execution mode(const benchmark::State& s) { return s.range(0) ? Execution::parallel : Execution::serial; }

void label(benchmark::State& s) { s.SetLabel(s.range(0) ? "openmp" : "serial"); }

void BM_simulate_paths(benchmark::State& state) {
    const int d = 20;
    const OrnsteinUhlenbeck ou(OUParams::diagonal(Eigen::VectorXd::Constant(d, 2.0), Eigen::VectorXd::Zero(d),
                                                  Eigen::VectorXd::Ones(d)));
    const TimeGrid grid = build_time_grid(1.0, 50);
    for (auto _ : state) {
        PathBatch b = simulate_paths(ou, Eigen::VectorXd::Zero(d), grid, 4096, 7, mode(state));
        benchmark::DoNotOptimize(b.states.data());
    }
    label(state);
}
BENCHMARK(BM_simulate_paths)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_forward(benchmark::State& state) {
    const int d = 20;
    const MlpParams p = init_params(MlpSpec::stage_default(d), 3);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(1024, d + 1);
    for (auto _ : state) {
        Eigen::MatrixXd y = forward(p, x, nullptr, mode(state));
        benchmark::DoNotOptimize(y.data());
    }
    label(state);
}
BENCHMARK(BM_forward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_affine(benchmark::State& state) {
    const Eigen::MatrixXd in = Eigen::MatrixXd::Random(1024, 50);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Random(50, 50);
    const Eigen::VectorXd b = Eigen::VectorXd::Random(50);
    Eigen::MatrixXd out(1024, 50);
    for (auto _ : state) {
        kernels::affine(in, w, b, out, mode(state));
        benchmark::DoNotOptimize(out.data());
    }
    label(state);
}
BENCHMARK(BM_affine)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_tanh(benchmark::State& state) {
    const Eigen::MatrixXd src = Eigen::MatrixXd::Random(1024, 50);
    Eigen::MatrixXd m(1024, 50);
    for (auto _ : state) {
        m = src;
        kernels::tanh_inplace(m, mode(state));
        benchmark::DoNotOptimize(m.data());
    }
    label(state);
}
BENCHMARK(BM_tanh)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_rollout(benchmark::State& state) {
    const int d = 5;
    GameProblem p;
    p.ou = OUParams::diagonal(Eigen::VectorXd::Constant(d, 2.0), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d));
    p.x0 = Eigen::VectorXd::Zero(d);
    p.grid = build_time_grid(1.0, 20);
    p.barriers = BarrierSpec::constant(0.5, 0.5);
    p.payoff = PayoffSpec::symmetric_average(10.0);
    TrainingConfig t;
    t.epochs = EpochSchedule::uniform(1);
    t.batch = 64;
    const TrainedSolver s = train_backward(p, t);
    const PathBatch paths = simulate_paths(OrnsteinUhlenbeck(p.ou), p.x0, p.grid, 4096, 11);
    for (auto _ : state) {
        Rollout r = rollout(s, paths, false, mode(state));
        benchmark::DoNotOptimize(r.y_hat.data());
    }
    label(state);
}
BENCHMARK(BM_rollout)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_oracle(benchmark::State& state) {
    GameProblem p;
    p.ou = OUParams::scalar(2.0, 0.0, 1.0);
    p.x0 = Eigen::VectorXd::Constant(1, 0.1);
    p.grid = build_time_grid(1.0, 50);
    p.barriers = BarrierSpec::constant(0.5, 0.3);
    p.payoff = PayoffSpec::symmetric_average(10.0);
    const GridSpec spec = GridSpec::around(p.ou, 0.1);
    for (auto _ : state) {
        OracleSolution o = grid_dp_solve(p, spec, mode(state));
        benchmark::DoNotOptimize(o.y0);
    }
    label(state);
}
BENCHMARK(BM_oracle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
