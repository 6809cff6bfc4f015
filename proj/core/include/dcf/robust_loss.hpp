#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dcf {

// Damping function log(1 + l + l^2/2): near-linear at small losses,
// logarithmic compression of outliers. Non-decreasing, damp(l) <= l.
double damp(double loss);

struct BoundConfig {
  double sigma2 = 0.01;  // adjustment factor, must stay below the minimum survival count
  int window_len = 3;    // epochs of loss history kept per sample

  void validate() const;
};

// Per-sample ring buffers of damped losses plus survival counters. The
// confirmed mean averages the stored damped values (over a partial window
// while history is short); the lower bound subtracts the concentration
// penalty sigma2*(i + sigma2*log(2i)/i^2)/(d - sigma2), which shrinks as
// the survival count d grows.
class LossLedger {
 public:
  LossLedger(std::size_t num_samples, int window_len);

  std::size_t size() const { return len_.size(); }
  int window_len() const { return window_len_; }

  // Pushes damp(loss), evicting the oldest entry once the window is full.
  void record_loss(std::size_t sample, double loss, int epoch);

  // Mean of the stored damped values, oldest to newest. Caches the result.
  double confirmed_mean(std::size_t sample);

  // epoch is the 1-based global epoch counter. Requires a non-empty
  // window and survival count > sigma2. Caches the result.
  double lower_bound(std::size_t sample, int epoch, const BoundConfig& cfg);

  // Increments d for every retained sample; at most once per epoch each.
  void mark_survival(std::span<const std::size_t> retained, int epoch);

  // Forgets the sample's loss history (used when its label flips).
  void clear_window(std::size_t sample);

  int survival_count(std::size_t sample) const;
  int window_size(std::size_t sample) const;
  double cached_mean(std::size_t sample) const;
  double cached_bound(std::size_t sample) const;

 private:
  int window_len_ = 0;
  std::vector<double> window_;       // num_samples * window_len, ring storage
  std::vector<std::int32_t> head_;
  std::vector<std::int32_t> len_;
  std::vector<std::int32_t> survived_;
  std::vector<std::int32_t> last_marked_epoch_;
  std::vector<double> mean_cache_;
  std::vector<double> bound_cache_;

  void check_sample(std::size_t sample) const;
};

}  // namespace dcf
