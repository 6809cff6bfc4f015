// Acceptance suite: one pass/fail line per criterion. Exit code 0 iff all
// criteria pass. Criterion 8 needs MovieLens-100K's u.data (set DCF_ML100K
// or place it at data/ml-100k/u.data); it fails with a diagnostic when the
// file is absent.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcf/dataset.hpp"
#include "dcf/denoise.hpp"
#include "dcf/experiments.hpp"
#include "dcf/gmf.hpp"
#include "dcf/metrics.hpp"
#include "dcf/robust_loss.hpp"
#include "dcf/rng.hpp"
#include "dcf/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dcf;

namespace {

struct CheckFailure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw CheckFailure{what};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// ----------------------------------------------------------------------
// shared harness pieces

// raw loss whose damped value is exactly (up to rounding) the target mean
double inverse_damp(double target) {
  return -1.0 + std::sqrt(1.0 + 2.0 * (std::exp(target) - 1.0));
}

DenoiseConfig harness_defaults(int epochs) {
  DenoiseConfig cfg;  // library defaults: v=3, sigma2=0.01, R=0.01, O=10,
                      // drop_max=0.1, drop_warmup=10, patience=10
  cfg.epochs = epochs;
  return cfg;
}

struct Harness {
  PlantedDataset planted;
  DenoiseConfig cfg;
  OptimizerConfig opt;
};

// Criterion 7/9 instance: 200 users x 100 items, planted rank-8 factors,
// 20% injected false positives, GMF k=16, 50 epochs.
Harness make_harness() {
  Harness h{make_planted_dataset(PlantedConfig{200, 100, 8, 12, 2024}, 0.2),
            harness_defaults(50), OptimizerConfig{}};
  h.opt.embedding_dim = 16;
  return h;
}

// ----------------------------------------------------------------------
// criteria

std::string criterion_formulas() {
  require(damp(0.0) == 0.0, "damp(0) != 0");
  require(std::abs(damp(1.0) - 0.9163) <= 1e-4, "damp(1) = " + fmt(damp(1.0)));

  // lower bound at damped mean 0.5, sigma2 0.01, epoch 10, survival 10
  LossLedger ledger(1, 5);
  const double level = inverse_damp(0.5);
  for (int e = 0; e < 5; ++e) ledger.record_loss(0, level, e);
  const std::vector<std::size_t> ids = {0};
  for (int e = 1; e <= 9; ++e) ledger.mark_survival({ids.data(), ids.size()}, e);
  require(ledger.survival_count(0) == 10, "survival bookkeeping broke");
  const double bound = ledger.lower_bound(0, 10, BoundConfig{0.01, 5});
  require(std::abs(bound - 0.489990) <= 1e-6,
          "lower bound = " + fmt(bound) + ", want 0.489990 +/- 1e-6");

  require(relabel_ratio(5, 0.27, 10) == 0.135, "relabel_ratio(5, 0.27, 10) != 0.135 exactly");

  for (const int y : {0, 1}) {
    for (const int ind : {0, 1}) {
      const int flipped = y + ind * (1 - 2 * y);
      require(flipped == (ind ? 1 - y : y), "flip table mismatch");
    }
  }
  return "damp(1)=" + fmt(damp(1.0)) + ", bound=" + fmt(bound) + ", r_5=0.135";
}

std::string criterion_gradients() {
  Rng rng(4242);
  constexpr int kDim = 8;
  constexpr double kStep = 1e-5;
  double max_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    GmfModel model(3, 3, kDim, rng.next_u64());
    const auto user = static_cast<std::int32_t>(rng.below(3));
    const auto item = static_cast<std::int32_t>(rng.below(3));
    for (int j = 0; j < kDim; ++j) {
      model.mutable_user_row(user)[static_cast<std::size_t>(j)] = rng.normal(0.0, 0.5);
      model.mutable_item_row(item)[static_cast<std::size_t>(j)] = rng.normal(0.0, 0.5);
      model.mutable_output_weights()[static_cast<std::size_t>(j)] = rng.normal(0.0, 0.5);
    }
    const double label = rng.below(2) ? 1.0 : 0.0;
    const auto grad = model.example_gradient(user, item, label);

    const auto central = [&](std::span<double> params, std::size_t j) {
      const double saved = params[j];
      params[j] = saved + kStep;
      const double up = bce_loss(model.predict(user, item), label);
      params[j] = saved - kStep;
      const double down = bce_loss(model.predict(user, item), label);
      params[j] = saved;
      return (up - down) / (2.0 * kStep);
    };
    const auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
    };
    for (int j = 0; j < kDim; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      max_rel = std::max({max_rel,
                          rel(grad.user[ju], central(model.mutable_user_row(user), ju)),
                          rel(grad.item[ju], central(model.mutable_item_row(item), ju)),
                          rel(grad.output[ju], central(model.mutable_output_weights(), ju))});
    }
  }
  require(max_rel < 1e-4, "max relative error " + fmt(max_rel));
  return "max relative error " + fmt(max_rel) + " over 100 draws";
}

std::string criterion_metric_oracle() {
  Rng rng(777);
  for (int instance = 0; instance < 200; ++instance) {
    const auto num_users = static_cast<std::int32_t>(1 + rng.below(5));
    const auto num_items = static_cast<std::int32_t>(2 + rng.below(9));
    const int k = 1 + static_cast<int>(rng.below(10));

    Dataset ds;
    ds.num_users = num_users;
    ds.num_items = num_items;
    for (std::int32_t u = 0; u < num_users; ++u) {
      std::vector<std::int32_t> items(static_cast<std::size_t>(num_items));
      for (std::int32_t i = 0; i < num_items; ++i) items[static_cast<std::size_t>(i)] = i;
      Rng shuffler(rng.next_u64());
      shuffler.shuffle(items);
      const std::size_t train_n = rng.below(static_cast<std::uint64_t>(num_items) - 1);
      const std::size_t test_n =
          1 + rng.below(std::min<std::uint64_t>(3, static_cast<std::uint64_t>(num_items) - train_n));
      for (std::size_t t = 0; t < train_n; ++t) {
        ds.train.push_back(Interaction{u, items[t], 1, 5, false});
      }
      for (std::size_t t = train_n; t < train_n + test_n; ++t) {
        ds.test.push_back(Interaction{u, items[t], 1, 5, false});
      }
    }
    ds.rebuild_indexes();

    GmfModel model(num_users, num_items, 4, rng.next_u64());
    const RunMetrics metrics = evaluate(model, ds, EvalSplit::kTest, {k});

    // independent recomputation straight from the definitions
    double recall_sum = 0.0, ndcg_sum = 0.0;
    for (std::int32_t u = 0; u < num_users; ++u) {
      std::unordered_set<std::int32_t> relevant;
      for (const auto& it : ds.test) {
        if (it.user == u) relevant.insert(it.item);
      }
      if (relevant.empty()) continue;
      const auto& excluded = ds.observed_train_items[static_cast<std::size_t>(u)];
      std::vector<std::int32_t> candidates;
      for (std::int32_t i = 0; i < num_items; ++i) {
        if (!std::binary_search(excluded.begin(), excluded.end(), i)) candidates.push_back(i);
      }
      std::sort(candidates.begin(), candidates.end(), [&](std::int32_t a, std::int32_t b) {
        const double la = model.logit(u, a);
        const double lb = model.logit(u, b);
        if (la != lb) return la > lb;
        return a < b;
      });
      std::size_t hits = 0;
      double dcg = 0.0;
      for (std::size_t pos = 0; pos < candidates.size() && pos < static_cast<std::size_t>(k);
           ++pos) {
        if (relevant.count(candidates[pos])) {
          ++hits;
          dcg += 1.0 / std::log2(static_cast<double>(pos + 2));
        }
      }
      double idcg = 0.0;
      for (std::size_t pos = 0;
           pos < std::min<std::size_t>(relevant.size(), static_cast<std::size_t>(k)); ++pos) {
        idcg += 1.0 / std::log2(static_cast<double>(pos + 2));
      }
      recall_sum += static_cast<double>(hits) / static_cast<double>(relevant.size());
      ndcg_sum += dcg / idcg;
    }
    const double users_with_test = static_cast<double>(num_users);
    const double oracle_recall = recall_sum / users_with_test;
    const double oracle_ndcg = ndcg_sum / users_with_test;
    require(metrics.recall.at(k) == oracle_recall,
            "recall mismatch on instance " + std::to_string(instance));
    require(metrics.ndcg.at(k) == oracle_ndcg,
            "ndcg mismatch on instance " + std::to_string(instance));
  }
  return "exact match on 200 random instances";
}

std::string criterion_degeneracy() {
  const PlantedDataset planted = make_planted_dataset(PlantedConfig{50, 60, 4, 10, 99}, 0.1);
  DenoiseConfig cfg;
  cfg.final_relabel_ratio = 0.0;
  cfg.drop_max = 0.0;
  cfg.sigma2 = 0.0;
  cfg.window_len = 1;
  cfg.epochs = 20;
  cfg.batch_size = 256;
  cfg.patience = 1000;  // compare the full 20-epoch trajectory
  cfg.seed = 7;
  OptimizerConfig opt;
  opt.embedding_dim = 8;

  using Trail = std::vector<std::vector<double>>;
  const auto capture = [](Trail& trail) {
    TrainHooks hooks;
    hooks.on_epoch_end = [&trail](int, const GmfModel& m, const LossLedger&, const Dataset&,
                                  const EpochReport&) {
      std::vector<double> snap = m.raw_user_embeddings();
      const auto& q = m.raw_item_embeddings();
      snap.insert(snap.end(), q.begin(), q.end());
      const auto h = m.output_weights();
      snap.insert(snap.end(), h.begin(), h.end());
      trail.push_back(std::move(snap));
    };
    return hooks;
  };

  Trail dcf_trail, normal_trail;
  const GmfModel init(planted.dataset.num_users, planted.dataset.num_items, opt.embedding_dim,
                      cfg.seed);
  train_dcf(planted.dataset, init, cfg, opt, capture(dcf_trail));
  train_baseline(planted.dataset, init, BaselineVariant::kNormal, cfg, opt, {},
                 capture(normal_trail));

  require(dcf_trail.size() == 20 && normal_trail.size() == 20, "expected 20 epochs");
  for (std::size_t e = 0; e < 20; ++e) {
    require(dcf_trail[e] == normal_trail[e],
            "trajectories diverge at epoch " + std::to_string(e + 1));
  }
  return "20-epoch parameter trajectories bitwise identical";
}

std::string criterion_robustness() {
  LossLedger base(1, 5), outlier(1, 5);
  for (int e = 0; e < 5; ++e) base.record_loss(0, 0.1, e);
  for (int e = 0; e < 4; ++e) outlier.record_loss(0, 0.1, e);
  outlier.record_loss(0, 100.0, 4);

  const double damped_shift = outlier.confirmed_mean(0) - base.confirmed_mean(0);
  const double raw_shift = (4 * 0.1 + 100.0) / 5.0 - 0.1;
  require(damped_shift < 1.70, "damped perturbation " + fmt(damped_shift));
  require(raw_shift > 19.9, "raw perturbation " + fmt(raw_shift));
  require(damped_shift < raw_shift / 10.0, "damped must be under a tenth of raw");
  return "damped shift " + fmt(damped_shift) + " vs raw " + fmt(raw_shift);
}

std::string criterion_bound_ordering() {
  Rng rng(31337);
  const double sigma2_grid[] = {0.001, 0.01, 0.1};
  for (int trial = 0; trial < 10000; ++trial) {
    const double sigma2 = sigma2_grid[rng.below(3)];
    const int epoch = 1 + static_cast<int>(rng.below(200));
    LossLedger ledger(1, 1);
    ledger.record_loss(0, rng.real01() * 5.0, epoch);

    const int d_small = 1 + static_cast<int>(rng.below(60));
    const int d_large = d_small + 1 + static_cast<int>(rng.below(60));
    const std::vector<std::size_t> ids = {0};
    for (int e = 1; e < d_small; ++e) ledger.mark_survival({ids.data(), ids.size()}, e);

    const double mean = ledger.confirmed_mean(0);
    const double at_small = ledger.lower_bound(0, epoch, BoundConfig{sigma2, 1});
    require(at_small < mean, "bound not strictly below mean");
    require(ledger.lower_bound(0, epoch, BoundConfig{0.0, 1}) == mean,
            "sigma2=0 must equal the mean");

    for (int e = d_small; e < d_large; ++e) ledger.mark_survival({ids.data(), ids.size()}, e);
    const double at_large = ledger.lower_bound(0, epoch, BoundConfig{sigma2, 1});
    require(at_large > at_small, "bound not strictly increasing in d");
  }
  return "0 violations over 10000 draws";
}

std::string criterion_synthetic_harness() {
  const Harness h = make_harness();
  const int saturation = h.cfg.relabel_saturation_epoch;

  int late_precision_wins = 0;
  int recall_wins = 0;
  int schedule_wins = 0;
  std::ostringstream detail;

  for (const std::uint64_t seed : seed_list(5)) {
    const SeedOutcome dcf =
        run_training(h.planted.dataset, Method::kDcf, h.cfg, h.opt, seed, h.planted.noisy_set);
    const SeedOutcome normal =
        run_training(h.planted.dataset, Method::kNormal, h.cfg, h.opt, seed, h.planted.noisy_set);

    // (i) precision of flips after the schedule saturates
    std::vector<RelabelEvent> late;
    for (const auto& ev : dcf.train.events) {
      if (ev.epoch > saturation) late.push_back(ev);
    }
    const auto late_precision =
        flip_precision({late.data(), late.size()}, h.planted.noisy_set);
    if (late_precision && *late_precision >= 2.0 * 0.2) ++late_precision_wins;

    // (ii) clean-test recall@5 against the normal baseline
    if (dcf.test_metrics.recall.at(5) >= normal.test_metrics.recall.at(5)) ++recall_wins;

    // (iii) progressive vs fixed cumulative precision over the first O epochs
    const Rq4Report rq4 = run_rq4(h.planted.dataset, h.cfg, h.opt, seed, h.planted.noisy_set);
    const double prog = rq4.progressive.cumulative_precision_first_o.value_or(0.0);
    const double fix = rq4.fixed.cumulative_precision_first_o.value_or(0.0);
    if (prog >= fix) ++schedule_wins;

    detail << " s" << seed << "[lateP=" << (late_precision ? fmt(*late_precision) : "n/a")
           << " R5 " << fmt(dcf.test_metrics.recall.at(5)) << " vs "
           << fmt(normal.test_metrics.recall.at(5)) << " sched " << fmt(prog) << ">=" << fmt(fix)
           << "]";
  }

  require(late_precision_wins >= 4,
          "late flip precision >= 0.4 in only " + std::to_string(late_precision_wins) +
              "/5 seeds;" + detail.str());
  require(recall_wins >= 4, "dcf recall@5 >= normal in only " + std::to_string(recall_wins) +
                                "/5 seeds;" + detail.str());
  require(schedule_wins >= 4, "progressive >= fixed in only " + std::to_string(schedule_wins) +
                                  "/5 seeds;" + detail.str());
  return "late-precision " + std::to_string(late_precision_wins) + "/5, recall " +
         std::to_string(recall_wins) + "/5, schedule " + std::to_string(schedule_wins) + "/5";
}

std::string find_ml100k() {
  if (const char* env = std::getenv("DCF_ML100K")) {
    if (fs::exists(env)) return env;
  }
  fs::path probe = "data/ml-100k/u.data";
  for (int up = 0; up < 4; ++up) {
    if (fs::exists(probe)) return probe.string();
    probe = ".." / probe;
  }
  return {};
}

std::string criterion_movielens() {
  const std::string path = find_ml100k();
  require(!path.empty(),
          "MovieLens-100K u.data not found; set DCF_ML100K or place it at data/ml-100k/u.data");

  const RawDataset raw = load_triplets(path, TripletFormat::kMovieLens100k);
  require(raw.num_users == 943 && raw.num_items == 1682 &&
              raw.interactions.size() == 100000,
          "unexpected MovieLens statistics");
  Dataset ds = make_splits(raw, CleanTestRule{5}, 2024);

  DenoiseConfig cfg;  // Appendix defaults: batch 1024, one negative per positive
  cfg.epochs = 100;
  OptimizerConfig opt;  // lr 0.001, k 32

  std::vector<double> normal_n5, dcf_n5, normal_r5, dcf_r5, tce_n5;
  for (const std::uint64_t seed : seed_list(5)) {
    const auto normal = run_training(ds, Method::kNormal, cfg, opt, seed);
    const auto tce = run_training(ds, Method::kTce, cfg, opt, seed);
    const auto dcf = run_training(ds, Method::kDcf, cfg, opt, seed);
    normal_n5.push_back(normal.test_metrics.ndcg.at(5));
    normal_r5.push_back(normal.test_metrics.recall.at(5));
    tce_n5.push_back(tce.test_metrics.ndcg.at(5));
    dcf_n5.push_back(dcf.test_metrics.ndcg.at(5));
    dcf_r5.push_back(dcf.test_metrics.recall.at(5));
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double normal_mean = mean(normal_n5);
  const double dcf_mean = mean(dcf_n5);
  const std::string detail = "N@5 normal=" + fmt(normal_mean) + " tce=" + fmt(mean(tce_n5)) +
                             " dcf=" + fmt(dcf_mean) + "; R@5 normal=" + fmt(mean(normal_r5)) +
                             " dcf=" + fmt(mean(dcf_r5));

  require(dcf_mean >= 1.05 * normal_mean, "dcf N@5 not >= 5% over normal: " + detail);
  require(normal_mean >= 0.0482 / 2 && normal_mean <= 0.0482 * 2,
          "normal N@5 outside 2x band of 0.0482: " + detail);
  require(dcf_mean >= 0.0543 / 2 && dcf_mean <= 0.0543 * 2,
          "dcf N@5 outside 2x band of 0.0543: " + detail);
  return detail;
}

double mean_ndcg5(const Rq3Report::Row& row) {
  double s = 0.0;
  for (const auto& m : row.per_seed) s += m.ndcg.at(5);
  return s / static_cast<double>(row.per_seed.size());
}

std::string criterion_rq3_direction() {
  const Harness h = make_harness();

  const SeedOutcome dcf =
      run_training(h.planted.dataset, Method::kDcf, h.cfg, h.opt, 0, h.planted.noisy_set);
  require(!dcf.train.hard_samples.empty(), "dcf run found no hard samples");
  const auto control = draw_control_set(dcf.train, 0);

  int hard_wins = 0;
  double hard_sum = 0.0, random_sum = 0.0;
  std::ostringstream detail;
  const auto report = run_rq3(h.planted.dataset, h.cfg, h.opt, dcf.train.hard_samples, control,
                              seed_list(5), {5});
  const auto& hard_row = report.rows[0];
  const auto& random_row = report.rows[1];
  const auto& plain_row = report.rows[2];
  for (std::size_t s = 0; s < 5; ++s) {
    const double with_hard = hard_row.per_seed[s].ndcg.at(5);
    const double plain = plain_row.per_seed[s].ndcg.at(5);
    if (with_hard >= plain) ++hard_wins;
    hard_sum += with_hard;
    random_sum += random_row.per_seed[s].ndcg.at(5);
    detail << " s" << s << "[" << fmt(with_hard) << " vs " << fmt(plain) << "]";
  }
  require(hard_wins >= 4,
          "tce+hard >= tce in only " + std::to_string(hard_wins) + "/5 seeds;" + detail.str());
  require(hard_sum >= random_sum, "tce+hard mean below tce+random mean;" + detail.str());
  return "hard-set wins " + std::to_string(hard_wins) + "/5, mean N@5 " + fmt(hard_sum / 5) +
         " vs random " + fmt(random_sum / 5) + " vs plain " + fmt(mean_ndcg5(plain_row));
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "formula unit suite", criterion_formulas},
      {2, "gradient finite-difference check", criterion_gradients},
      {3, "ranking metric oracle", criterion_metric_oracle},
      {4, "degeneracy equivalence dcf==normal", criterion_degeneracy},
      {5, "damped-mean outlier robustness", criterion_robustness},
      {6, "bound ordering properties", criterion_bound_ordering},
      {7, "synthetic denoising harness", criterion_synthetic_harness},
      {8, "MovieLens-100K directional reproduction", criterion_movielens},
      {9, "hard-sample study direction", criterion_rq3_direction},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = criterion.run();
    } catch (const CheckFailure& f) {
      ok = false;
      detail = f.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion.id << " ("
              << criterion.name << ", " << fmt(secs) << "s): " << detail << std::endl;
    failures += ok ? 0 : 1;
  }
  if (failures) {
    std::cout << failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
