#include <random>

#include <benchmark/benchmark.h>

#include "dicomo/harness.hpp"

using namespace dicomo;

namespace {

void BM_IntegrateDopri5(benchmark::State& state) {
  torch::set_num_threads(1);
  odeint::LambdaOde f([](const torch::Tensor& z, double) { return torch::stack({z[1], -z[0]}); }, {}, true);
  const auto z0 = torch::tensor({1.0, 0.0}, torch::kFloat64);
  const SolverConfig cfg{OdeMethod::dopri5, std::pow(10.0, -static_cast<double>(state.range(0))), 1e-9, 100000, 0.0};
  int64_t steps = 0;
  for (auto _ : state) {
    const auto sol = odeint::integrate(f, z0, {0.0, 10.0}, cfg);
    steps = sol.steps_taken;
    benchmark::DoNotOptimize(sol.states.data_ptr());
  }
  state.counters["steps"] = static_cast<double>(steps);
}
BENCHMARK(BM_IntegrateDopri5)->Arg(4)->Arg(7)->Arg(10);

void BM_LatentRollout(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(0);
  repnet::RepNet rep(Config{}, 32);
  const auto z0 = torch::randn({16, 1});
  const std::vector<std::vector<double>> times(16, {0.0, 0.2, 0.5, 1.0});
  const SolverConfig cfg{state.range(0) ? OdeMethod::dopri5 : OdeMethod::rk4, 1e-7, 1e-9, 20, 0.0};
  torch::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(rep->roll_dynamics(z0, times, cfg).data_ptr());
}
BENCHMARK(BM_LatentRollout)->Arg(0)->Arg(1);

void BM_MfmodForward(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(0);
  const auto c = state.range(0);
  tranet::Mfmod m(c, 512, 256, NormStatsMode::batch, 1e-5);
  const auto x = torch::randn({16, c, 8, 8});
  const auto wd = torch::randn({16, 512}), wc = torch::randn({16, 256});
  torch::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m->forward(x, wd, wc).data_ptr());
}
BENCHMARK(BM_MfmodForward)->Arg(128)->Arg(512);

void BM_EncodeClip(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(0);
  repnet::RepNet rep(Config{}, 32);
  scenes::ObservationSet obs;
  obs.frames = torch::rand({state.range(0), 3, 32, 32});
  for (int64_t i = 0; i < state.range(0); ++i) obs.times.push_back(static_cast<double>(i) / 14.0);
  const SolverConfig cfg{OdeMethod::dopri5, 1e-7, 1e-9, 10000, 0.0};
  torch::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(rep->encode_clip(obs, false, std::nullopt, cfg).z_dyn.data_ptr());
}
BENCHMARK(BM_EncodeClip)->Arg(4)->Arg(15);

void BM_Frechet(benchmark::State& state) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n;
  const auto d = state.range(0);
  Eigen::MatrixXd a(2000, d), b(2000, d);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      a(i, j) = n(rng);
      b(i, j) = 0.5 * n(rng) + 0.1;
    }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::frechet_distance(a, b));
}
BENCHMARK(BM_Frechet)->Arg(64)->Arg(256);

void BM_TrainStepToy(benchmark::State& state) {
  torch::set_num_threads(1);
  Config cfg = toy_config();
  harness::Trainer trainer(cfg, 10);
  torch::manual_seed(1);
  harness::Batch batch;
  batch.frames = torch::rand({2, 2, 3, 8, 8});
  batch.times = {{0.0, 0.5}, {0.0, 0.3}};
  batch.w_desc = torch::randn({2, cfg.tranet.w_desc_dim}) * 0.05;
  batch.descriptions = {"", ""};
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch).total);
}
BENCHMARK(BM_TrainStepToy);

}  // namespace

BENCHMARK_MAIN();
