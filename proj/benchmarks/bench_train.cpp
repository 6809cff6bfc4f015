#include <benchmark/benchmark.h>

#include "dcf/denoise.hpp"
#include "dcf/synthetic.hpp"

namespace {

void BM_DcfEpoch(benchmark::State& state) {
  const dcf::PlantedDataset planted =
      dcf::make_planted_dataset(dcf::PlantedConfig{200, 100, 8, 12, 1}, 0.2);
  dcf::DenoiseConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1024;
  cfg.patience = 100;
  dcf::OptimizerConfig opt;
  opt.embedding_dim = 16;

  for (auto _ : state) {
    const auto result = dcf::train_dcf(
        planted.dataset,
        dcf::GmfModel(planted.dataset.num_users, planted.dataset.num_items, 16, 1), cfg, opt);
    benchmark::DoNotOptimize(result.epochs_run);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(planted.dataset.train.size()));
}
BENCHMARK(BM_DcfEpoch)->Unit(benchmark::kMillisecond);

void BM_NormalEpoch(benchmark::State& state) {
  const dcf::PlantedDataset planted =
      dcf::make_planted_dataset(dcf::PlantedConfig{200, 100, 8, 12, 1}, 0.2);
  dcf::DenoiseConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1024;
  cfg.patience = 100;
  dcf::OptimizerConfig opt;
  opt.embedding_dim = 16;

  for (auto _ : state) {
    const auto result = dcf::train_baseline(
        planted.dataset,
        dcf::GmfModel(planted.dataset.num_users, planted.dataset.num_items, 16, 1),
        dcf::BaselineVariant::kNormal, cfg, opt);
    benchmark::DoNotOptimize(result.epochs_run);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(planted.dataset.train.size()));
}
BENCHMARK(BM_NormalEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
