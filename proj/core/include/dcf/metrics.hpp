#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "dcf/dataset.hpp"
#include "dcf/gmf.hpp"

namespace dcf {

struct RelabelEvent;  // denoise.hpp

// Metrics for one trained model (one seed).
struct RunMetrics {
  std::vector<int> k_list;
  std::map<int, double> recall;  // keyed by K
  std::map<int, double> ndcg;
  std::optional<double> flip_precision;
};

// Per-seed metrics plus mean and sample standard deviation.
struct MetricsReport {
  std::vector<int> k_list;
  std::vector<RunMetrics> per_seed;
  RunMetrics mean;
  RunMetrics stddev;
};

double recall_at_k(std::span<const std::int32_t> ranked,
                   const std::unordered_set<std::int32_t>& relevant, int k);

// DCG discount 1/log2(p+1) with 1-based positions; IDCG over
// min(|relevant|, K) ideal hits.
double ndcg_at_k(std::span<const std::int32_t> ranked,
                 const std::unordered_set<std::int32_t>& relevant, int k);

enum class EvalSplit { kValidation, kTest };

// Ranks the full catalog minus each user's observed train items and
// averages per test user. Users without rows in the split are skipped.
// threads > 1 parallelizes across users; results are independent of the
// thread count.
RunMetrics evaluate(const GmfModel& model, const Dataset& dataset, EvalSplit split,
                    const std::vector<int>& k_list, int threads = 1);

// Fraction of relabel events that hit truly noisy samples; absent when
// there are no events.
std::optional<double> flip_precision(std::span<const RelabelEvent> events,
                                     const std::unordered_set<std::size_t>& noisy_ids);

MetricsReport aggregate_seeds(const std::vector<RunMetrics>& reports);

}  // namespace dcf
