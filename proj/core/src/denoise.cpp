#include "dcf/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "dcf/batch.hpp"
#include "dcf/metrics.hpp"

namespace dcf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void DenoiseConfig::validate() const {
  BoundConfig{sigma2, window_len}.validate();
  if (final_relabel_ratio < 0.0 || final_relabel_ratio >= 1.0) {
    throw std::invalid_argument("final relabel ratio must lie in [0, 1)");
  }
  if (relabel_saturation_epoch < 1) throw std::invalid_argument("saturation epoch must be >= 1");
  if (drop_max < 0.0 || drop_max >= 1.0) throw std::invalid_argument("drop_max must lie in [0, 1)");
  if (drop_warmup < 1) throw std::invalid_argument("drop_warmup must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (negatives_per_positive < 0) throw std::invalid_argument("negatives_per_positive must be >= 0");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

double relabel_ratio(int epoch, double final_ratio, int saturation_epoch) {
  if (epoch < 0) throw std::invalid_argument("relabel_ratio: epoch must be >= 0");
  return std::min(final_ratio * static_cast<double>(epoch) / static_cast<double>(saturation_epoch),
                  final_ratio);
}

double drop_fraction(int epoch, const DenoiseConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("drop_fraction: epoch must be >= 0");
  if (epoch >= cfg.drop_warmup) return cfg.drop_max;
  return cfg.drop_max * static_cast<double>(epoch) / static_cast<double>(cfg.drop_warmup);
}

Retention select_retained(std::span<const std::pair<std::size_t, double>> bounds,
                          double fraction) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("select_retained: fraction must lie in [0, 1)");
  }
  Retention result;
  const std::size_t n = bounds.size();
  if (n == 0) return result;
  const auto drop_count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));
  if (drop_count == 0) {
    result.retained.reserve(n);
    for (const auto& [sid, bound] : bounds) result.retained.push_back(sid);
    return result;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (bounds[a].second != bounds[b].second) return bounds[a].second > bounds[b].second;
    return bounds[a].first < bounds[b].first;
  });
  std::vector<char> is_dropped(n, 0);
  for (std::size_t i = 0; i < drop_count; ++i) is_dropped[order[i]] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    (is_dropped[i] ? result.dropped : result.retained).push_back(bounds[i].first);
  }
  return result;
}

double relabel_threshold(std::span<const double> sorted_bounds, double ratio) {
  if (sorted_bounds.empty()) throw std::invalid_argument("relabel_threshold: empty bound list");
  const auto b = static_cast<double>(sorted_bounds.size());
  const auto index = static_cast<std::size_t>(std::floor(b * (1.0 - ratio)));
  if (index >= sorted_bounds.size()) return kInf;
  return sorted_bounds[index];
}

std::vector<RelabelEvent> apply_relabel(Dataset& dataset,
                                        std::span<const std::pair<std::size_t, double>> bounds,
                                        double threshold, int epoch, std::size_t max_flips) {
  std::vector<RelabelEvent> events;
  if (max_flips == 0 || threshold == kInf) return events;

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (bounds[i].second >= threshold) eligible.push_back(i);
  }
  std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
    if (bounds[a].second != bounds[b].second) return bounds[a].second > bounds[b].second;
    return bounds[a].first < bounds[b].first;
  });
  if (eligible.size() > max_flips) eligible.resize(max_flips);

  events.reserve(eligible.size());
  for (const std::size_t i : eligible) {
    const auto [sid, bound] = bounds[i];
    dataset.flip_to_negative(sid);
    events.push_back(RelabelEvent{static_cast<std::int64_t>(sid), epoch, 1, 0, bound});
  }
  return events;
}

std::vector<std::size_t> hard_sample_set(const LossLedger& ledger,
                                         std::span<const std::size_t> positive_ids,
                                         double fraction) {
  std::vector<std::size_t> hard;
  if (fraction <= 0.0 || positive_ids.empty()) return hard;

  const auto drop_count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(positive_ids.size())));
  if (drop_count == 0) return hard;

  std::vector<double> bounds;
  bounds.reserve(positive_ids.size());
  for (const std::size_t sid : positive_ids) bounds.push_back(ledger.cached_bound(sid));
  std::nth_element(bounds.begin(), bounds.begin() + static_cast<std::ptrdiff_t>(drop_count - 1),
                   bounds.end(), std::greater<double>());
  const double cutoff = bounds[drop_count - 1];

  for (const std::size_t sid : positive_ids) {
    if (ledger.cached_mean(sid) >= cutoff && ledger.cached_bound(sid) < cutoff) {
      hard.push_back(sid);
    }
  }
  return hard;
}

namespace {

enum class TrainMode { kDcf, kNormal, kTce };

struct EarlyStop {
  double best = -kInf;
  int best_epoch = 0;
  int bad_epochs = 0;

  // Returns true when this epoch improved the metric.
  bool observe(double value, int epoch) {
    if (value > best) {
      best = value;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }
};

std::vector<std::size_t> sorted_unique(std::unordered_set<std::size_t> set) {
  std::vector<std::size_t> out(set.begin(), set.end());
  std::sort(out.begin(), out.end());
  return out;
}

TrainResult train_loop(Dataset dataset, GmfModel model, TrainMode mode, const DenoiseConfig& cfg,
                       const OptimizerConfig& opt,
                       const std::vector<std::size_t>& protected_ids, const TrainHooks& hooks) {
  cfg.validate();
  opt.validate();
  const BoundConfig bound_cfg{cfg.sigma2, cfg.window_len};

  LossLedger ledger(dataset.train.size(), cfg.window_len);
  std::unordered_set<std::size_t> protect(protected_ids.begin(), protected_ids.end());
  std::unordered_set<std::size_t> dropped_union;
  std::unordered_set<std::size_t> hard_union;

  TrainResult result{std::move(model), {}, {}, {}, {}, 0, 0.0, 0};
  GmfModel best_model = result.model;
  EarlyStop stopper;

  std::vector<BatchExample> batch;
  std::vector<std::uint8_t> weights;
  std::vector<std::pair<std::size_t, double>> candidates;  // (sample id, selection score)
  std::vector<std::size_t> candidate_pos;                  // position of candidate in batch

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double fraction = drop_fraction(epoch, cfg);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::int64_t dropped_this_epoch = 0;

    BatchStream stream(dataset,
                       BatchStreamConfig{cfg.batch_size, cfg.negatives_per_positive, cfg.seed},
                       epoch);
    while (stream.next(batch)) {
      weights.assign(batch.size(), 1);
      candidates.clear();
      candidate_pos.clear();

      if (mode != TrainMode::kNormal) {
        for (std::size_t pos = 0; pos < batch.size(); ++pos) {
          const auto& ex = batch[pos];
          if (ex.sample_id == kTransientSampleId || ex.label != 1) continue;
          const auto sid = static_cast<std::size_t>(ex.sample_id);
          if (mode == TrainMode::kTce) {
            if (protect.count(sid)) continue;
            const double raw_loss = bce_loss(result.model.predict(ex.user, ex.item), 1.0);
            candidates.emplace_back(sid, raw_loss);
            candidate_pos.push_back(pos);
          } else {
            const double raw_loss = bce_loss(result.model.predict(ex.user, ex.item), 1.0);
            ledger.record_loss(sid, raw_loss, epoch);
            const double bound = ledger.lower_bound(sid, epoch, bound_cfg);
            candidates.emplace_back(sid, bound);
            candidate_pos.push_back(pos);
          }
        }

        const Retention retention =
            select_retained({candidates.data(), candidates.size()}, fraction);
        if (!retention.dropped.empty()) {
          std::unordered_set<std::size_t> dropped_set(retention.dropped.begin(),
                                                      retention.dropped.end());
          for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
            if (dropped_set.count(candidates[ci].first)) weights[candidate_pos[ci]] = 0;
          }
          dropped_this_epoch += static_cast<std::int64_t>(retention.dropped.size());
          dropped_union.insert(retention.dropped.begin(), retention.dropped.end());
        }
        if (mode == TrainMode::kDcf) {
          ledger.mark_survival({retention.retained.data(), retention.retained.size()}, epoch);
        }
      }

      const auto batch_loss = result.model.backward_and_step(
          {batch.data(), batch.size()}, {weights.data(), weights.size()}, opt);
      if (batch_loss) {
        std::size_t retained_count = 0;
        for (const auto w : weights) retained_count += (w != 0);
        loss_sum += *batch_loss * static_cast<double>(retained_count);
        loss_count += retained_count;
      }
    }

    EpochReport report;
    report.epoch = epoch;
    report.mean_retained_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    report.dropped = dropped_this_epoch;
    report.threshold = kInf;

    if (mode == TrainMode::kDcf) {
      std::vector<std::size_t> positive_ids;
      positive_ids.reserve(dataset.train.size());
      for (std::size_t sid = 0; sid < dataset.train.size(); ++sid) {
        if (dataset.train[sid].label == 1) positive_ids.push_back(sid);
      }

      for (const std::size_t sid : hard_sample_set(
               ledger, {positive_ids.data(), positive_ids.size()}, fraction)) {
        hard_union.insert(sid);
      }

      const double ratio = cfg.progressive
                               ? relabel_ratio(epoch, cfg.final_relabel_ratio,
                                               cfg.relabel_saturation_epoch)
                               : cfg.final_relabel_ratio;
      report.relabel_ratio = ratio;
      if (!positive_ids.empty() && ratio > 0.0) {
        std::vector<std::pair<std::size_t, double>> bound_by_sample;
        bound_by_sample.reserve(positive_ids.size());
        std::vector<double> sorted_bounds;
        sorted_bounds.reserve(positive_ids.size());
        for (const std::size_t sid : positive_ids) {
          const double bound = ledger.cached_bound(sid);
          bound_by_sample.emplace_back(sid, bound);
          sorted_bounds.push_back(bound);
        }
        std::sort(sorted_bounds.begin(), sorted_bounds.end());
        const double threshold =
            relabel_threshold({sorted_bounds.data(), sorted_bounds.size()}, ratio);
        report.threshold = threshold;

        const auto b = static_cast<double>(positive_ids.size());
        const auto keep = static_cast<std::size_t>(std::floor(b * (1.0 - ratio)));
        const std::size_t max_flips = positive_ids.size() - keep;
        auto events = apply_relabel(dataset, {bound_by_sample.data(), bound_by_sample.size()},
                                    threshold, epoch, max_flips);
        report.flipped = static_cast<std::int64_t>(events.size());
        for (const auto& ev : events) {
          ledger.clear_window(static_cast<std::size_t>(ev.sample));
        }
        result.events.insert(result.events.end(), events.begin(), events.end());
      }
    }

    const bool has_validation = !dataset.validation.empty();
    if (has_validation) {
      const RunMetrics val = evaluate(result.model, dataset, EvalSplit::kValidation, {5});
      report.val_ndcg5 = val.ndcg.at(5);
    }
    result.reports.push_back(report);
    result.epochs_run = epoch;

    if (hooks.on_epoch_end) {
      hooks.on_epoch_end(epoch, result.model, ledger, dataset, report);
    }

    if (!has_validation) {
      // no early-stopping signal: keep training, final model wins
      best_model = result.model;
      stopper.best_epoch = epoch;
      continue;
    }
    if (stopper.observe(report.val_ndcg5, epoch)) {
      best_model = result.model;
    } else if (stopper.bad_epochs >= cfg.patience) {
      break;
    }
  }

  result.model = std::move(best_model);
  result.best_epoch = stopper.best_epoch;
  result.best_val_ndcg5 = stopper.best;
  result.dropped_samples = sorted_unique(std::move(dropped_union));
  result.hard_samples = sorted_unique(std::move(hard_union));
  return result;
}

}  // namespace

TrainResult train_dcf(Dataset dataset, GmfModel model, const DenoiseConfig& cfg,
                      const OptimizerConfig& opt, const TrainHooks& hooks) {
  return train_loop(std::move(dataset), std::move(model), TrainMode::kDcf, cfg, opt, {}, hooks);
}

TrainResult train_baseline(Dataset dataset, GmfModel model, BaselineVariant variant,
                           const DenoiseConfig& cfg, const OptimizerConfig& opt,
                           const std::vector<std::size_t>& protected_ids,
                           const TrainHooks& hooks) {
  const TrainMode mode =
      variant == BaselineVariant::kNormal ? TrainMode::kNormal : TrainMode::kTce;
  return train_loop(std::move(dataset), std::move(model), mode, cfg, opt, protected_ids, hooks);
}

}  // namespace dcf
