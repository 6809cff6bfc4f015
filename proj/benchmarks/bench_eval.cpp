#include <benchmark/benchmark.h>

#include "dcf/metrics.hpp"
#include "dcf/synthetic.hpp"

namespace {

void BM_FullRankingEval(benchmark::State& state) {
  const auto users = static_cast<std::int32_t>(state.range(0));
  const auto items = static_cast<std::int32_t>(state.range(1));
  const dcf::PlantedDataset planted =
      dcf::make_planted_dataset(dcf::PlantedConfig{users, items, 8, 12, 3}, 0.0);
  const dcf::GmfModel model(users, items, 16, 3);

  for (auto _ : state) {
    const auto metrics =
        dcf::evaluate(model, planted.dataset, dcf::EvalSplit::kTest, {5, 20});
    benchmark::DoNotOptimize(metrics.recall.at(5));
  }
  state.SetItemsProcessed(state.iterations() * users * items);
}
BENCHMARK(BM_FullRankingEval)->Args({200, 100})->Args({943, 1682})->Unit(benchmark::kMillisecond);

}  // namespace
