#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "dcf/dataset.hpp"
#include "dcf/denoise.hpp"
#include "dcf/metrics.hpp"

namespace dcf {

enum class Method { kNormal, kTce, kDcf };

std::string method_name(Method method);
Method parse_method(const std::string& name);

struct SeedOutcome {
  std::uint64_t seed = 0;
  TrainResult train;
  RunMetrics test_metrics;
};

// Trains one (method, seed): model init and sampling streams derive from
// `seed`; test metrics include flip precision when noisy_ids is non-empty.
SeedOutcome run_training(const Dataset& dataset, Method method, DenoiseConfig cfg,
                         const OptimizerConfig& opt, std::uint64_t seed,
                         const std::unordered_set<std::size_t>& noisy_ids = {},
                         const std::vector<std::size_t>& protected_ids = {},
                         const TrainHooks& hooks = {}, int eval_threads = 1,
                         const std::vector<int>& k_list = {5, 20});

std::vector<std::uint64_t> seed_list(int count);

// Uniform draw of |dcf.hard_samples| ids from the dropped-but-not-hard
// pool; the RQ3 control group.
std::vector<std::size_t> draw_control_set(const TrainResult& dcf_run, std::uint64_t seed);

struct Rq3Report {
  struct Row {
    std::string variant;
    std::vector<RunMetrics> per_seed;
    RunMetrics mean;
  };
  std::vector<Row> rows;  // tce+hard, tce+random, tce
};

// Trains T-CE three ways: protecting the hard set, protecting the random
// control set, and unmodified.
Rq3Report run_rq3(const Dataset& dataset, const DenoiseConfig& cfg, const OptimizerConfig& opt,
                  const std::vector<std::size_t>& hard_set,
                  const std::vector<std::size_t>& control_set,
                  const std::vector<std::uint64_t>& seeds, const std::vector<int>& k_list,
                  int eval_threads = 1);

struct Rq4Series {
  std::vector<std::int64_t> flips_per_epoch;  // indexed by epoch-1
  std::vector<std::int64_t> hits_per_epoch;
  std::optional<double> cumulative_precision_first_o;
  std::optional<double> overall_precision;
};

struct Rq4Report {
  int saturation_epoch = 0;
  Rq4Series progressive;
  Rq4Series fixed;
};

// Runs DCF twice from the same seed: progressive schedule vs fixed ratio R.
Rq4Report run_rq4(const Dataset& dataset, DenoiseConfig cfg, const OptimizerConfig& opt,
                  std::uint64_t seed, const std::unordered_set<std::size_t>& noisy_ids);

struct SweepGrid {
  std::vector<double> relabel_ratios;  // R
  std::vector<double> sigma2s;
  std::vector<int> window_lens;        // v
};

struct SweepRow {
  double final_relabel_ratio = 0.0;
  double sigma2 = 0.0;
  int window_len = 0;
  std::uint64_t seed = 0;
  double best_val_ndcg5 = 0.0;
  RunMetrics test_metrics;
};

// One row per (cell, seed), sorted by validation NDCG@5 descending.
std::vector<SweepRow> run_sweep(const Dataset& dataset, const DenoiseConfig& base,
                                const OptimizerConfig& opt, const SweepGrid& grid,
                                const std::vector<std::uint64_t>& seeds,
                                const std::vector<int>& k_list, int eval_threads = 1);

// --- log writers --------------------------------------------------------

void write_epoch_reports_jsonl(const std::string& path,
                               const std::vector<EpochReport>& reports);
void write_relabel_events_jsonl(const std::string& path,
                                const std::vector<RelabelEvent>& events);
void append_metrics_jsonl(const std::string& path, const std::string& method,
                          std::uint64_t seed, const std::string& epoch_label,
                          const std::string& split, const RunMetrics& metrics);
void write_summary_csv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& summaries);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     const std::vector<int>& k_list);
void write_sample_ids_csv(const std::string& path, const std::vector<std::size_t>& ids);
std::vector<std::size_t> read_sample_ids_csv(const std::string& path);

}  // namespace dcf
