#include <benchmark/benchmark.h>

#include "tabguide/diffusion.hpp"
#include "tabguide/guidance.hpp"
#include "tabguide/rng.hpp"
#include "tabguide/runtime.hpp"

namespace {

using namespace tabguide;

DenoiserNet make_net(std::size_t d, std::size_t hidden) {
  DenoiserConfig cfg;
  cfg.data_dim = d;
  cfg.hidden = hidden;
  cfg.time_hidden = hidden;
  return DenoiserNet(cfg, 7);
}

void BM_Forward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const auto batch = state.range(1);
  const DenoiserNet net = make_net(8, hidden);
  Rng rng(1);
  const Matrix x = standard_normal(rng, batch, 8);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x, 50));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Args({128, 1024})->Args({1024, 256});

void BM_TrainEpoch(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const auto batch = static_cast<std::size_t>(state.range(1));
  DenoiserNet net = make_net(8, hidden);
  const NoiseSchedule sched = build_schedule(200, 0.9999, 0.98);
  Rng rng(2);
  const Matrix data = standard_normal(rng, static_cast<Eigen::Index>(batch), 8);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = batch;
  for (auto _ : state) benchmark::DoNotOptimize(train(net, sched, data, tc));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_TrainEpoch)->Args({128, 1024})->Args({128, 256})->Unit(benchmark::kMillisecond);

void BM_GuidedStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const DenoiserNet net = make_net(8, hidden);
  const NoiseSchedule sched = build_schedule(200, 0.9999, 0.98);
  Rng rng(3);
  const Matrix x = standard_normal(rng, 512, 8);
  Matrix obs = Matrix::Zero(1, 8);
  obs.leftCols(4).setOnes();
  const ConstraintSpec spec{Imputation{obs, Matrix::Zero(1, 8), Norm::L1}};
  for (auto _ : state) benchmark::DoNotOptimize(guidance_gradient(net, sched, spec, x, 20));
  state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(BM_GuidedStep)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  tabguide::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
