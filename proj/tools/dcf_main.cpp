// Experiment runner: dataset preparation, denoising training, ranking
// evaluation, hyperparameter sweeps, and the hard-sample / flip-precision
// study harnesses.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dcf/dataset.hpp"
#include "dcf/experiments.hpp"
#include "dcf/gmf.hpp"
#include "dcf/metrics.hpp"
#include "dcf/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int eval_threads() {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (const char* cap = std::getenv("DCF_THREADS")) {
    try {
      threads = std::max(1, std::min(threads, std::stoi(cap)));
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring unparsable DCF_THREADS='" << cap << "'\n";
    }
  }
  return threads;
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Every invocation owns one timestamped directory under --out.
std::string make_run_dir(const std::string& out_parent, const std::string& command) {
  fs::create_directories(out_parent);
  const std::string base = out_parent + "/" + utc_stamp() + "-" + command;
  std::string dir = base;
  for (int n = 1; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);
  fs::create_directories(dir);
  return dir;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_manifest(const std::string& dir, const KeyValues& entries) {
  std::ofstream out(dir + "/manifest", std::ios::trunc);
  for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct TrainFlags {
  std::string input;
  std::string method = "dcf";
  double relabel_ratio = 0.01;         // --R
  int saturation_epoch = 10;           // --O
  double sigma2 = 0.01;                // --sigma2
  int window_len = 3;                  // --v
  double drop_max = 0.1;
  int drop_warmup = 10;
  double lr = 0.001;
  int batch = 1024;
  int dim = 32;
  int epochs = 100;
  int seeds = 1;
  int negatives = 1;
  int patience = 10;
  bool plain_mf = false;
  bool dump_ledger = false;
  std::vector<int> k_list = {5, 20};
  std::string out = "runs";
};

void add_hyper_flags(CLI::App& cmd, TrainFlags& flags) {
  cmd.add_option("--input", flags.input, "prepared dataset directory")->required();
  cmd.add_option("--R", flags.relabel_ratio, "final relabel ratio");
  cmd.add_option("--O", flags.saturation_epoch, "epoch at which the relabel ratio saturates");
  cmd.add_option("--sigma2", flags.sigma2, "concentration-bound adjustment factor");
  cmd.add_option("--v", flags.window_len, "loss-history window length");
  cmd.add_option("--drop-max", flags.drop_max, "maximum drop fraction per epoch");
  cmd.add_option("--drop-warmup", flags.drop_warmup, "epochs to ramp the drop fraction");
  cmd.add_option("--lr", flags.lr, "Adam learning rate");
  cmd.add_option("--batch", flags.batch, "positives per batch");
  cmd.add_option("--dim", flags.dim, "embedding dimension");
  cmd.add_option("--epochs", flags.epochs, "maximum epochs");
  cmd.add_option("--seeds", flags.seeds, "number of seeds (0..n-1)");
  cmd.add_option("--negatives", flags.negatives, "sampled negatives per positive");
  cmd.add_option("--patience", flags.patience, "early-stopping patience on validation NDCG@5");
  cmd.add_flag("--plain-mf", flags.plain_mf, "freeze the output weights at all-ones");
  cmd.add_option("--K", flags.k_list, "metric cutoffs")->delimiter(',');
  cmd.add_option("--out", flags.out, "parent directory for run artifacts");
}

dcf::DenoiseConfig to_denoise_config(const TrainFlags& flags) {
  dcf::DenoiseConfig cfg;
  cfg.window_len = flags.window_len;
  cfg.sigma2 = flags.sigma2;
  cfg.final_relabel_ratio = flags.relabel_ratio;
  cfg.relabel_saturation_epoch = flags.saturation_epoch;
  cfg.drop_max = flags.drop_max;
  cfg.drop_warmup = flags.drop_warmup;
  cfg.epochs = flags.epochs;
  cfg.batch_size = flags.batch;
  cfg.negatives_per_positive = flags.negatives;
  cfg.patience = flags.patience;
  return cfg;
}

dcf::OptimizerConfig to_optimizer_config(const TrainFlags& flags) {
  dcf::OptimizerConfig opt;
  opt.learning_rate = flags.lr;
  opt.embedding_dim = flags.dim;
  opt.plain_mf = flags.plain_mf;
  return opt;
}

KeyValues hyper_manifest(const TrainFlags& flags) {
  KeyValues kv;
  kv.emplace_back("input", flags.input);
  kv.emplace_back("method", flags.method);
  kv.emplace_back("R", fmt(flags.relabel_ratio));
  kv.emplace_back("O", std::to_string(flags.saturation_epoch));
  kv.emplace_back("sigma2", fmt(flags.sigma2));
  kv.emplace_back("v", std::to_string(flags.window_len));
  kv.emplace_back("drop_max", fmt(flags.drop_max));
  kv.emplace_back("drop_warmup", std::to_string(flags.drop_warmup));
  kv.emplace_back("lr", fmt(flags.lr));
  kv.emplace_back("batch", std::to_string(flags.batch));
  kv.emplace_back("dim", std::to_string(flags.dim));
  kv.emplace_back("epochs", std::to_string(flags.epochs));
  kv.emplace_back("seeds", std::to_string(flags.seeds));
  kv.emplace_back("negatives", std::to_string(flags.negatives));
  kv.emplace_back("patience", std::to_string(flags.patience));
  kv.emplace_back("plain_mf", flags.plain_mf ? "true" : "false");
  std::string ks;
  for (const int k : flags.k_list) ks += (ks.empty() ? "" : ",") + std::to_string(k);
  kv.emplace_back("K", ks);
  return kv;
}

std::unordered_set<std::size_t> noisy_ids_of(const dcf::Dataset& dataset) {
  std::unordered_set<std::size_t> ids;
  for (std::size_t sid = 0; sid < dataset.train.size(); ++sid) {
    if (dataset.train[sid].truly_noisy) ids.insert(sid);
  }
  return ids;
}

void print_metrics(const std::string& label, const dcf::RunMetrics& metrics) {
  std::cout << label;
  for (const int k : metrics.k_list) {
    std::cout << "  recall@" << k << "=" << metrics.recall.at(k) << "  ndcg@" << k << "="
              << metrics.ndcg.at(k);
  }
  if (metrics.flip_precision) std::cout << "  flip_precision=" << *metrics.flip_precision;
  std::cout << '\n';
}

// --- subcommands --------------------------------------------------------

int cmd_prepare(const std::string& input, const std::string& format_name, std::uint64_t seed,
                double noise_rate, int clean_min_rating, const std::string& out) {
  const dcf::TripletFormat format = format_name == "movielens-100k"
                                        ? dcf::TripletFormat::kMovieLens100k
                                        : dcf::TripletFormat::kTsvTriplet;
  if (format_name != "movielens-100k" && format_name != "tsv-triplet") {
    std::cerr << "error: unknown format '" << format_name << "'\n";
    return 1;
  }

  const dcf::RawDataset raw = dcf::load_triplets(input, format);
  dcf::Dataset dataset = dcf::make_splits(raw, dcf::CleanTestRule{clean_min_rating}, seed);
  std::size_t injected = 0;
  if (noise_rate > 0.0) {
    injected = dcf::inject_noise(dataset, dcf::NoiseSpec{noise_rate, seed}).size();
  }

  const std::string dir = make_run_dir(out, "prepare");
  dcf::write_prepared(dataset, dir,
                      {{"source", input},
                       {"format", format_name},
                       {"seed", std::to_string(seed)},
                       {"noise_rate", fmt(noise_rate)},
                       {"clean_min_rating", std::to_string(clean_min_rating)}});
  std::cout << "run_dir: " << dir << '\n';
  std::cout << "users=" << dataset.num_users << " items=" << dataset.num_items
            << " train=" << dataset.train.size() << " val=" << dataset.validation.size()
            << " test=" << dataset.test.size() << " injected=" << injected << '\n';
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  const dcf::Dataset dataset = dcf::load_prepared(flags.input);
  const auto noisy = noisy_ids_of(dataset);
  const dcf::Method method = dcf::parse_method(flags.method);
  const dcf::DenoiseConfig cfg = to_denoise_config(flags);
  const dcf::OptimizerConfig opt = to_optimizer_config(flags);
  const int threads = eval_threads();

  const std::string dir = make_run_dir(flags.out, "train-" + flags.method);
  write_manifest(dir, hyper_manifest(flags));
  std::cout << "run_dir: " << dir << '\n';

  std::vector<dcf::RunMetrics> per_seed;
  for (const std::uint64_t seed : dcf::seed_list(flags.seeds)) {
    const std::string seed_dir = dir + "/seed" + std::to_string(seed);
    fs::create_directories(seed_dir);
    const std::string metrics_path = seed_dir + "/metrics.jsonl";
    std::ofstream(metrics_path, std::ios::trunc);  // start empty, hook appends

    std::ofstream ledger_csv;
    if (flags.dump_ledger) {
      ledger_csv.open(seed_dir + "/ledger.csv", std::ios::trunc);
      ledger_csv << "sample_id,epoch,d,mu_tilde,lower_bound\n";
    }

    dcf::TrainHooks hooks;
    hooks.on_epoch_end = [&](int epoch, const dcf::GmfModel& model,
                             const dcf::LossLedger& ledger, const dcf::Dataset& ds,
                             const dcf::EpochReport&) {
      if (!ds.validation.empty()) {
        const auto val = dcf::evaluate(model, ds, dcf::EvalSplit::kValidation, flags.k_list,
                                       threads);
        dcf::append_metrics_jsonl(metrics_path, flags.method, seed, std::to_string(epoch),
                                  "validation", val);
      }
      if (flags.dump_ledger) {
        for (std::size_t sid = 0; sid < ds.train.size(); ++sid) {
          if (ds.train[sid].label != 1) continue;
          ledger_csv << sid << ',' << epoch << ',' << ledger.survival_count(sid) << ','
                     << ledger.cached_mean(sid) << ',' << ledger.cached_bound(sid) << '\n';
        }
      }
    };

    const dcf::SeedOutcome outcome =
        dcf::run_training(dataset, method, cfg, opt, seed, noisy, {}, hooks, threads,
                          flags.k_list);

    dcf::save_checkpoint(outcome.train.model, seed_dir + "/model.ckpt");
    dcf::write_epoch_reports_jsonl(seed_dir + "/epochs.jsonl", outcome.train.reports);
    if (method == dcf::Method::kDcf) {
      dcf::write_relabel_events_jsonl(seed_dir + "/relabel_events.jsonl", outcome.train.events);
      dcf::write_sample_ids_csv(seed_dir + "/hard_samples.csv", outcome.train.hard_samples);
      dcf::write_sample_ids_csv(seed_dir + "/control_samples.csv",
                                dcf::draw_control_set(outcome.train, seed));
    }
    dcf::append_metrics_jsonl(metrics_path, flags.method, seed, "final", "test",
                              outcome.test_metrics);
    per_seed.push_back(outcome.test_metrics);

    std::cout << "seed " << seed << ": epochs_run=" << outcome.train.epochs_run
              << " best_epoch=" << outcome.train.best_epoch
              << " best_val_ndcg5=" << outcome.train.best_val_ndcg5 << '\n';
    print_metrics("  test:", outcome.test_metrics);
  }

  if (per_seed.size() >= 2) {
    const dcf::MetricsReport report = dcf::aggregate_seeds(per_seed);
    dcf::write_summary_csv(dir + "/summary.csv", {{flags.method, report}});
    print_metrics("mean over seeds:", report.mean);
  } else {
    dcf::MetricsReport report;
    report.k_list = per_seed.front().k_list;
    report.per_seed = per_seed;
    report.mean = per_seed.front();
    report.stddev.k_list = report.k_list;
    for (const int k : report.k_list) {
      report.stddev.recall[k] = 0.0;
      report.stddev.ndcg[k] = 0.0;
    }
    dcf::write_summary_csv(dir + "/summary.csv", {{flags.method, report}});
  }
  return 0;
}

int cmd_evaluate(const std::string& input, const std::string& ckpt,
                 const std::vector<int>& k_list) {
  const dcf::Dataset dataset = dcf::load_prepared(input);
  const dcf::GmfModel model = dcf::load_checkpoint(ckpt);
  const auto metrics = dcf::evaluate(model, dataset, dcf::EvalSplit::kTest, k_list,
                                     eval_threads());
  print_metrics("test:", metrics);
  return 0;
}

int cmd_sweep(const TrainFlags& flags, const std::vector<double>& r_grid,
              const std::vector<double>& sigma2_grid, const std::vector<int>& v_grid) {
  const dcf::Dataset dataset = dcf::load_prepared(flags.input);
  const dcf::DenoiseConfig base = to_denoise_config(flags);
  const dcf::OptimizerConfig opt = to_optimizer_config(flags);

  dcf::SweepGrid grid;
  grid.relabel_ratios = r_grid.empty() ? std::vector<double>{flags.relabel_ratio} : r_grid;
  grid.sigma2s = sigma2_grid.empty() ? std::vector<double>{flags.sigma2} : sigma2_grid;
  grid.window_lens = v_grid.empty() ? std::vector<int>{flags.window_len} : v_grid;

  const auto rows = dcf::run_sweep(dataset, base, opt, grid, dcf::seed_list(flags.seeds),
                                   flags.k_list, eval_threads());

  const std::string dir = make_run_dir(flags.out, "sweep");
  KeyValues manifest = hyper_manifest(flags);
  manifest.emplace_back("grid_rows", std::to_string(rows.size()));
  write_manifest(dir, manifest);
  dcf::write_sweep_csv(dir + "/sweep.csv", rows, flags.k_list);
  std::cout << "run_dir: " << dir << '\n';
  std::cout << rows.size() << " rows; best: R=" << rows.front().final_relabel_ratio
            << " sigma2=" << rows.front().sigma2 << " v=" << rows.front().window_len
            << " val_ndcg5=" << rows.front().best_val_ndcg5 << '\n';
  return 0;
}

int cmd_rq3(const TrainFlags& flags, const std::string& hard_path, std::string random_path) {
  const dcf::Dataset dataset = dcf::load_prepared(flags.input);
  if (!fs::exists(hard_path)) {
    std::cerr << "error: hard-sample export not found: " << hard_path
              << " (train a dcf run first)\n";
    return 1;
  }
  if (random_path.empty()) {
    random_path = (fs::path(hard_path).parent_path() / "control_samples.csv").string();
  }
  if (!fs::exists(random_path)) {
    std::cerr << "error: control-sample export not found: " << random_path << '\n';
    return 1;
  }
  const auto hard = dcf::read_sample_ids_csv(hard_path);
  const auto control = dcf::read_sample_ids_csv(random_path);

  const auto report = dcf::run_rq3(dataset, to_denoise_config(flags), to_optimizer_config(flags),
                                   hard, control, dcf::seed_list(flags.seeds), flags.k_list,
                                   eval_threads());

  const std::string dir = make_run_dir(flags.out, "rq3");
  KeyValues manifest = hyper_manifest(flags);
  manifest.emplace_back("hard_set", hard_path);
  manifest.emplace_back("control_set", random_path);
  manifest.emplace_back("hard_size", std::to_string(hard.size()));
  manifest.emplace_back("control_size", std::to_string(control.size()));
  write_manifest(dir, manifest);

  std::ofstream csv(dir + "/rq3.csv", std::ios::trunc);
  csv << "variant";
  for (const int k : flags.k_list) csv << ",recall@" << k << ",ndcg@" << k;
  csv << '\n';
  std::cout << "run_dir: " << dir << '\n';
  for (const auto& row : report.rows) {
    csv << row.variant;
    for (const int k : flags.k_list) {
      csv << ',' << row.mean.recall.at(k) << ',' << row.mean.ndcg.at(k);
    }
    csv << '\n';
    print_metrics(row.variant + ":", row.mean);
  }
  return 0;
}

int cmd_rq4(const TrainFlags& flags) {
  const dcf::Dataset dataset = dcf::load_prepared(flags.input);
  const auto noisy = noisy_ids_of(dataset);
  if (noisy.empty()) {
    std::cerr << "error: dataset has no noise mask; rerun prepare with --noise-rate\n";
    return 1;
  }

  const std::string dir = make_run_dir(flags.out, "rq4");
  write_manifest(dir, hyper_manifest(flags));
  std::cout << "run_dir: " << dir << '\n';

  std::ofstream jsonl(dir + "/rq4.jsonl", std::ios::trunc);
  for (const std::uint64_t seed : dcf::seed_list(flags.seeds)) {
    const auto report = dcf::run_rq4(dataset, to_denoise_config(flags),
                                     to_optimizer_config(flags), seed, noisy);
    const auto emit = [&](const char* schedule, const dcf::Rq4Series& series) {
      jsonl << "{\"seed\":" << seed << ",\"schedule\":\"" << schedule << "\",\"flips\":[";
      for (std::size_t e = 0; e < series.flips_per_epoch.size(); ++e) {
        jsonl << (e ? "," : "") << series.flips_per_epoch[e];
      }
      jsonl << "],\"hits\":[";
      for (std::size_t e = 0; e < series.hits_per_epoch.size(); ++e) {
        jsonl << (e ? "," : "") << series.hits_per_epoch[e];
      }
      jsonl << "],\"cumulative_precision_first_O\":";
      if (series.cumulative_precision_first_o) {
        jsonl << *series.cumulative_precision_first_o;
      } else {
        jsonl << "null";
      }
      jsonl << "}\n";
    };
    emit("progressive", report.progressive);
    emit("fixed", report.fixed);

    std::cout << "seed " << seed << ": progressive first-O precision=";
    if (report.progressive.cumulative_precision_first_o) {
      std::cout << *report.progressive.cumulative_precision_first_o;
    } else {
      std::cout << "n/a";
    }
    std::cout << "  fixed=";
    if (report.fixed.cumulative_precision_first_o) {
      std::cout << *report.fixed.cumulative_precision_first_o;
    } else {
      std::cout << "n/a";
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Denoising trainer for implicit-feedback recommendation"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "split a raw interaction file and inject noise");
  std::string prep_input, prep_format = "tsv-triplet", prep_out = "data/prepared";
  std::uint64_t prep_seed = 0;
  double prep_noise = 0.0;
  int prep_clean_min = 5;
  prepare->add_option("--input", prep_input, "raw interaction file")->required();
  prepare->add_option("--format", prep_format, "tsv-triplet | movielens-100k");
  prepare->add_option("--seed", prep_seed, "split/injection seed");
  prepare->add_option("--noise-rate", prep_noise, "injected false-positive fraction");
  prepare->add_option("--clean-min-rating", prep_clean_min, "minimum rating kept in the test split");
  prepare->add_option("--out", prep_out, "parent directory for the prepared dataset");
  prepare->set_config("--config");

  // train
  auto* train = app.add_subcommand("train", "train one method over seeds");
  TrainFlags train_flags;
  add_hyper_flags(*train, train_flags);
  train->add_option("--method", train_flags.method, "dcf | normal | tce");
  train->add_flag("--dump-ledger", train_flags.dump_ledger, "write per-epoch ledger CSV");
  train->set_config("--config");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "rank the catalog with a checkpoint");
  std::string eval_input, eval_ckpt;
  std::vector<int> eval_k = {5, 20};
  evaluate->add_option("--input", eval_input, "prepared dataset directory")->required();
  evaluate->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  evaluate->add_option("--K", eval_k, "metric cutoffs")->delimiter(',');
  evaluate->set_config("--config");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "grid search over R, sigma2 and v");
  TrainFlags sweep_flags;
  std::vector<double> sweep_r, sweep_sigma2;
  std::vector<int> sweep_v;
  sweep->add_option("--input", sweep_flags.input, "prepared dataset directory")->required();
  sweep->add_option("--R", sweep_r, "relabel-ratio grid")->delimiter(',');
  sweep->add_option("--sigma2", sweep_sigma2, "sigma2 grid")->delimiter(',');
  sweep->add_option("--v", sweep_v, "window-length grid")->delimiter(',');
  sweep->add_option("--O", sweep_flags.saturation_epoch, "relabel saturation epoch");
  sweep->add_option("--drop-max", sweep_flags.drop_max, "maximum drop fraction");
  sweep->add_option("--drop-warmup", sweep_flags.drop_warmup, "drop warmup epochs");
  sweep->add_option("--lr", sweep_flags.lr, "Adam learning rate");
  sweep->add_option("--batch", sweep_flags.batch, "positives per batch");
  sweep->add_option("--dim", sweep_flags.dim, "embedding dimension");
  sweep->add_option("--epochs", sweep_flags.epochs, "maximum epochs");
  sweep->add_option("--seeds", sweep_flags.seeds, "seeds per grid cell");
  sweep->add_option("--K", sweep_flags.k_list, "metric cutoffs")->delimiter(',');
  sweep->add_option("--out", sweep_flags.out, "parent directory for run artifacts");
  sweep->set_config("--config");

  // rq3
  auto* rq3 = app.add_subcommand("rq3", "hard-sample A/B study on T-CE");
  TrainFlags rq3_flags;
  std::string rq3_hard, rq3_random;
  add_hyper_flags(*rq3, rq3_flags);
  rq3->add_option("--hard", rq3_hard, "hard_samples.csv from a dcf run")->required();
  rq3->add_option("--random", rq3_random, "control_samples.csv (defaults to sibling of --hard)");
  rq3->set_config("--config");

  // rq4
  auto* rq4 = app.add_subcommand("rq4", "progressive vs fixed relabeling flip precision");
  TrainFlags rq4_flags;
  add_hyper_flags(*rq4, rq4_flags);
  rq4->set_config("--config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      return cmd_prepare(prep_input, prep_format, prep_seed, prep_noise, prep_clean_min, prep_out);
    }
    if (train->parsed()) return cmd_train(train_flags);
    if (evaluate->parsed()) return cmd_evaluate(eval_input, eval_ckpt, eval_k);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, sweep_r, sweep_sigma2, sweep_v);
    if (rq3->parsed()) return cmd_rq3(rq3_flags, rq3_hard, rq3_random);
    if (rq4->parsed()) return cmd_rq4(rq4_flags);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
