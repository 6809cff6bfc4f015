#include "dcf/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dcf/rng.hpp"

namespace dcf {

using nlohmann::json;

std::string method_name(Method method) {
  switch (method) {
    case Method::kNormal: return "normal";
    case Method::kTce: return "tce";
    case Method::kDcf: return "dcf";
  }
  throw std::logic_error("unknown method");
}

Method parse_method(const std::string& name) {
  if (name == "normal") return Method::kNormal;
  if (name == "tce") return Method::kTce;
  if (name == "dcf") return Method::kDcf;
  throw std::invalid_argument("unknown method '" + name + "' (expected dcf, normal or tce)");
}

SeedOutcome run_training(const Dataset& dataset, Method method, DenoiseConfig cfg,
                         const OptimizerConfig& opt, std::uint64_t seed,
                         const std::unordered_set<std::size_t>& noisy_ids,
                         const std::vector<std::size_t>& protected_ids, const TrainHooks& hooks,
                         int eval_threads, const std::vector<int>& k_list) {
  cfg.seed = seed;
  GmfModel model(dataset.num_users, dataset.num_items, opt.embedding_dim, seed);

  SeedOutcome out;
  out.seed = seed;
  switch (method) {
    case Method::kDcf:
      out.train = train_dcf(dataset, std::move(model), cfg, opt, hooks);
      break;
    case Method::kNormal:
      out.train = train_baseline(dataset, std::move(model), BaselineVariant::kNormal, cfg, opt,
                                 protected_ids, hooks);
      break;
    case Method::kTce:
      out.train = train_baseline(dataset, std::move(model), BaselineVariant::kTce, cfg, opt,
                                 protected_ids, hooks);
      break;
  }

  out.test_metrics = evaluate(out.train.model, dataset, EvalSplit::kTest, k_list, eval_threads);
  if (!noisy_ids.empty()) {
    out.test_metrics.flip_precision =
        flip_precision({out.train.events.data(), out.train.events.size()}, noisy_ids);
  }
  return out;
}

std::vector<std::uint64_t> seed_list(int count) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(std::max(0, count)));
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  return seeds;
}

std::vector<std::size_t> draw_control_set(const TrainResult& dcf_run, std::uint64_t seed) {
  std::unordered_set<std::size_t> hard(dcf_run.hard_samples.begin(), dcf_run.hard_samples.end());
  std::vector<std::size_t> pool;
  pool.reserve(dcf_run.dropped_samples.size());
  for (const std::size_t sid : dcf_run.dropped_samples) {
    if (!hard.count(sid)) pool.push_back(sid);
  }
  const std::size_t want = std::min(dcf_run.hard_samples.size(), pool.size());
  Rng rng(derive_seed(seed, RngStream::kControlDraw));
  rng.shuffle(pool);
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

RunMetrics mean_of(const std::vector<RunMetrics>& reports) {
  if (reports.size() == 1) return reports.front();
  return aggregate_seeds(reports).mean;
}

}  // namespace

Rq3Report run_rq3(const Dataset& dataset, const DenoiseConfig& cfg, const OptimizerConfig& opt,
                  const std::vector<std::size_t>& hard_set,
                  const std::vector<std::size_t>& control_set,
                  const std::vector<std::uint64_t>& seeds, const std::vector<int>& k_list,
                  int eval_threads) {
  if (seeds.empty()) throw std::invalid_argument("run_rq3: need at least one seed");

  Rq3Report report;
  const std::vector<std::pair<std::string, const std::vector<std::size_t>*>> variants = {
      {"tce+hard", &hard_set},
      {"tce+random", &control_set},
      {"tce", nullptr},
  };
  for (const auto& [name, protected_ids] : variants) {
    Rq3Report::Row row;
    row.variant = name;
    for (const std::uint64_t seed : seeds) {
      DenoiseConfig run_cfg = cfg;
      run_cfg.seed = seed;
      GmfModel model(dataset.num_users, dataset.num_items, opt.embedding_dim, seed);
      TrainResult train = train_baseline(
          dataset, std::move(model), BaselineVariant::kTce, run_cfg, opt,
          protected_ids ? *protected_ids : std::vector<std::size_t>{});
      row.per_seed.push_back(evaluate(train.model, dataset, EvalSplit::kTest, k_list,
                                      eval_threads));
    }
    row.mean = mean_of(row.per_seed);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

Rq4Series series_from_events(const std::vector<RelabelEvent>& events, int epochs_run,
                             int saturation_epoch,
                             const std::unordered_set<std::size_t>& noisy_ids) {
  Rq4Series series;
  series.flips_per_epoch.assign(static_cast<std::size_t>(epochs_run), 0);
  series.hits_per_epoch.assign(static_cast<std::size_t>(epochs_run), 0);
  for (const auto& ev : events) {
    const auto slot = static_cast<std::size_t>(ev.epoch - 1);
    series.flips_per_epoch[slot] += 1;
    series.hits_per_epoch[slot] += noisy_ids.count(static_cast<std::size_t>(ev.sample)) ? 1 : 0;
  }
  std::int64_t flips_o = 0, hits_o = 0, flips_all = 0, hits_all = 0;
  for (int e = 1; e <= epochs_run; ++e) {
    const auto slot = static_cast<std::size_t>(e - 1);
    flips_all += series.flips_per_epoch[slot];
    hits_all += series.hits_per_epoch[slot];
    if (e <= saturation_epoch) {
      flips_o += series.flips_per_epoch[slot];
      hits_o += series.hits_per_epoch[slot];
    }
  }
  if (flips_o > 0) {
    series.cumulative_precision_first_o =
        static_cast<double>(hits_o) / static_cast<double>(flips_o);
  }
  if (flips_all > 0) {
    series.overall_precision = static_cast<double>(hits_all) / static_cast<double>(flips_all);
  }
  return series;
}

}  // namespace

Rq4Report run_rq4(const Dataset& dataset, DenoiseConfig cfg, const OptimizerConfig& opt,
                  std::uint64_t seed, const std::unordered_set<std::size_t>& noisy_ids) {
  if (noisy_ids.empty()) throw std::invalid_argument("run_rq4: needs a noise mask");
  cfg.seed = seed;

  Rq4Report report;
  report.saturation_epoch = cfg.relabel_saturation_epoch;

  cfg.progressive = true;
  TrainResult progressive =
      train_dcf(dataset, GmfModel(dataset.num_users, dataset.num_items, opt.embedding_dim, seed),
                cfg, opt);
  report.progressive = series_from_events(progressive.events, progressive.epochs_run,
                                          cfg.relabel_saturation_epoch, noisy_ids);

  cfg.progressive = false;
  TrainResult fixed =
      train_dcf(dataset, GmfModel(dataset.num_users, dataset.num_items, opt.embedding_dim, seed),
                cfg, opt);
  report.fixed = series_from_events(fixed.events, fixed.epochs_run, cfg.relabel_saturation_epoch,
                                    noisy_ids);
  return report;
}

std::vector<SweepRow> run_sweep(const Dataset& dataset, const DenoiseConfig& base,
                                const OptimizerConfig& opt, const SweepGrid& grid,
                                const std::vector<std::uint64_t>& seeds,
                                const std::vector<int>& k_list, int eval_threads) {
  if (grid.relabel_ratios.empty() || grid.sigma2s.empty() || grid.window_lens.empty()) {
    throw std::invalid_argument("run_sweep: empty grid");
  }
  if (seeds.empty()) throw std::invalid_argument("run_sweep: need at least one seed");

  std::vector<SweepRow> rows;
  for (const double ratio : grid.relabel_ratios) {
    for (const double sigma2 : grid.sigma2s) {
      for (const int window : grid.window_lens) {
        for (const std::uint64_t seed : seeds) {
          DenoiseConfig cfg = base;
          cfg.final_relabel_ratio = ratio;
          cfg.sigma2 = sigma2;
          cfg.window_len = window;
          const SeedOutcome outcome =
              run_training(dataset, Method::kDcf, cfg, opt, seed, {}, {}, {}, eval_threads);
          SweepRow row;
          row.final_relabel_ratio = ratio;
          row.sigma2 = sigma2;
          row.window_len = window;
          row.seed = seed;
          row.best_val_ndcg5 = outcome.train.best_val_ndcg5;
          row.test_metrics = outcome.test_metrics;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) {
                     return a.best_val_ndcg5 > b.best_val_ndcg5;
                   });
  (void)k_list;
  return rows;
}

// --- log writers --------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

json metrics_to_json(const RunMetrics& metrics) {
  json j;
  for (const auto& [k, value] : metrics.recall) j["recall@" + std::to_string(k)] = value;
  for (const auto& [k, value] : metrics.ndcg) j["ndcg@" + std::to_string(k)] = value;
  if (metrics.flip_precision) j["flip_precision"] = *metrics.flip_precision;
  return j;
}

}  // namespace

void write_epoch_reports_jsonl(const std::string& path,
                               const std::vector<EpochReport>& reports) {
  auto out = open_out(path);
  for (const auto& r : reports) {
    json j{{"epoch", r.epoch},
           {"mean_retained_loss", r.mean_retained_loss},
           {"dropped", r.dropped},
           {"flipped", r.flipped},
           {"relabel_ratio", r.relabel_ratio},
           {"threshold", r.threshold},
           {"val_ndcg5", r.val_ndcg5}};
    out << j.dump() << '\n';
  }
}

void write_relabel_events_jsonl(const std::string& path,
                                const std::vector<RelabelEvent>& events) {
  auto out = open_out(path);
  for (const auto& ev : events) {
    json j{{"sample", ev.sample},
           {"epoch", ev.epoch},
           {"old", static_cast<int>(ev.old_label)},
           {"new", static_cast<int>(ev.new_label)},
           {"bound", ev.bound_at_flip}};
    out << j.dump() << '\n';
  }
}

void append_metrics_jsonl(const std::string& path, const std::string& method,
                          std::uint64_t seed, const std::string& epoch_label,
                          const std::string& split, const RunMetrics& metrics) {
  auto out = open_out(path, std::ios::app);
  json j = metrics_to_json(metrics);
  j["method"] = method;
  j["seed"] = seed;
  j["epoch"] = epoch_label;
  j["split"] = split;
  out << j.dump() << '\n';
}

void write_summary_csv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& summaries) {
  auto out = open_out(path);
  out << "method,metric,K,mean,std\n";
  for (const auto& [method, report] : summaries) {
    for (const int k : report.k_list) {
      out << method << ",recall," << k << ',' << report.mean.recall.at(k) << ','
          << report.stddev.recall.at(k) << '\n';
    }
    for (const int k : report.k_list) {
      out << method << ",ndcg," << k << ',' << report.mean.ndcg.at(k) << ','
          << report.stddev.ndcg.at(k) << '\n';
    }
    if (report.mean.flip_precision) {
      out << method << ",flip_precision,," << *report.mean.flip_precision << ','
          << (report.stddev.flip_precision ? *report.stddev.flip_precision : 0.0) << '\n';
    }
  }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     const std::vector<int>& k_list) {
  auto out = open_out(path);
  out << "R,sigma2,v,seed,val_ndcg5";
  for (const int k : k_list) out << ",recall@" << k;
  for (const int k : k_list) out << ",ndcg@" << k;
  out << '\n';
  for (const auto& row : rows) {
    out << row.final_relabel_ratio << ',' << row.sigma2 << ',' << row.window_len << ','
        << row.seed << ',' << row.best_val_ndcg5;
    for (const int k : k_list) out << ',' << row.test_metrics.recall.at(k);
    for (const int k : k_list) out << ',' << row.test_metrics.ndcg.at(k);
    out << '\n';
  }
}

void write_sample_ids_csv(const std::string& path, const std::vector<std::size_t>& ids) {
  auto out = open_out(path);
  out << "sample_id\n";
  for (const std::size_t sid : ids) out << sid << '\n';
}

std::vector<std::size_t> read_sample_ids_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::size_t> ids;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;
    }
    ids.push_back(std::stoull(line));
  }
  return ids;
}

}  // namespace dcf
