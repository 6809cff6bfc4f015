#include <benchmark/benchmark.h>

#include "dcf/robust_loss.hpp"
#include "dcf/rng.hpp"

namespace {

void BM_Damp(benchmark::State& state) {
  dcf::Rng rng(1);
  std::vector<double> losses(1024);
  for (auto& l : losses) l = rng.real01() * 10.0;
  for (auto _ : state) {
    double sum = 0.0;
    for (const double l : losses) sum += dcf::damp(l);
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_Damp);

void BM_LedgerEpoch(benchmark::State& state) {
  const auto samples = static_cast<std::size_t>(state.range(0));
  dcf::LossLedger ledger(samples, 5);
  const dcf::BoundConfig cfg{0.01, 5};
  dcf::Rng rng(2);
  std::vector<double> losses(samples);
  for (auto& l : losses) l = rng.real01() * 3.0;

  int epoch = 1;
  for (auto _ : state) {
    for (std::size_t s = 0; s < samples; ++s) {
      ledger.record_loss(s, losses[s], epoch);
      benchmark::DoNotOptimize(ledger.lower_bound(s, epoch, cfg));
    }
    ++epoch;
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples));
}
BENCHMARK(BM_LedgerEpoch)->Arg(1024)->Arg(16384);

}  // namespace
