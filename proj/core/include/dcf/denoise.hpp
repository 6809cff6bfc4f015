#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "dcf/dataset.hpp"
#include "dcf/gmf.hpp"
#include "dcf/robust_loss.hpp"

namespace dcf {

struct DenoiseConfig {
  int window_len = 3;                  // --v
  double sigma2 = 0.01;                // --sigma2
  double final_relabel_ratio = 0.01;   // --R
  int relabel_saturation_epoch = 10;   // --O
  double drop_max = 0.1;
  int drop_warmup = 10;
  int epochs = 100;
  int batch_size = 1024;
  int negatives_per_positive = 1;
  std::uint64_t seed = 0;
  bool progressive = true;  // false: relabel ratio fixed at R from epoch 1
  int patience = 10;        // early stopping on validation NDCG@5

  void validate() const;
};

struct RelabelEvent {
  std::int64_t sample = 0;
  int epoch = 0;
  std::int8_t old_label = 1;
  std::int8_t new_label = 0;
  double bound_at_flip = 0.0;
};

struct EpochReport {
  int epoch = 0;
  double mean_retained_loss = 0.0;
  std::int64_t dropped = 0;
  std::int64_t flipped = 0;
  double relabel_ratio = 0.0;
  double threshold = 0.0;  // +inf when nothing is eligible
  double val_ndcg5 = 0.0;
};

// min(epoch * R / O, R); saturates at R from epoch O on.
double relabel_ratio(int epoch, double final_ratio, int saturation_epoch);

// Linear warmup min(drop_max * epoch / drop_warmup, drop_max).
double drop_fraction(int epoch, const DenoiseConfig& cfg);

struct Retention {
  std::vector<std::size_t> retained;
  std::vector<std::size_t> dropped;
};

// Drops the ceil(fraction * candidates) samples with the largest bound,
// ties broken by ascending sample id.
Retention select_retained(std::span<const std::pair<std::size_t, double>> bounds,
                          double fraction);

// sorted_bounds ascending; returns the element at floor(B*(1-ratio)), or
// +inf when the index falls past the end (ratio == 0).
double relabel_threshold(std::span<const double> sorted_bounds, double ratio);

// Flips positives with bound >= threshold to label 0, at most max_flips of
// them (ties resolved by bound desc, then ascending sample id). Flips
// persist in the dataset.
std::vector<RelabelEvent> apply_relabel(Dataset& dataset,
                                        std::span<const std::pair<std::size_t, double>> bounds,
                                        double threshold, int epoch, std::size_t max_flips);

// Samples whose damped mean clears the epoch's drop cutoff but whose lower
// bound does not: dropped by mean-loss ranking, retained by the bound.
// The cutoff is the k-th largest cached bound with k = ceil(fraction * n).
std::vector<std::size_t> hard_sample_set(const LossLedger& ledger,
                                         std::span<const std::size_t> positive_ids,
                                         double fraction);

struct TrainHooks {
  // Called after each epoch (post relabel, pre early-stop bookkeeping).
  std::function<void(int epoch, const GmfModel& model, const LossLedger& ledger,
                     const Dataset& dataset, const EpochReport& report)>
      on_epoch_end;
};

struct TrainResult {
  GmfModel model;  // parameters of the best validation epoch
  std::vector<EpochReport> reports;
  std::vector<RelabelEvent> events;
  std::vector<std::size_t> hard_samples;     // union over epochs, sorted
  std::vector<std::size_t> dropped_samples;  // union over epochs, sorted
  int best_epoch = 0;
  double best_val_ndcg5 = 0.0;
  int epochs_run = 0;
};

enum class BaselineVariant { kNormal, kTce };

// Algorithm: per epoch, record damped losses, gate gradients by the
// concentration lower bound, mark survivals, then progressively relabel
// the highest-bound positives. Early-stops on validation NDCG@5.
TrainResult train_dcf(Dataset dataset, GmfModel model, const DenoiseConfig& cfg,
                      const OptimizerConfig& opt, const TrainHooks& hooks = {});

// normal: plain BCE over every sample. tce: per-batch truncation of the
// drop_fraction share of positives with the largest instantaneous raw
// loss. protected_ids are exempt from truncation and excluded from the
// truncation quota.
TrainResult train_baseline(Dataset dataset, GmfModel model, BaselineVariant variant,
                           const DenoiseConfig& cfg, const OptimizerConfig& opt,
                           const std::vector<std::size_t>& protected_ids = {},
                           const TrainHooks& hooks = {});

}  // namespace dcf
