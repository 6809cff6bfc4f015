#include "dcf/robust_loss.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dcf {

double damp(double loss) {
  if (loss < 0.0 || std::isnan(loss)) {
    throw std::invalid_argument("damp: loss must be non-negative");
  }
  return std::log1p(loss + 0.5 * loss * loss);
}

void BoundConfig::validate() const {
  if (sigma2 < 0.0 || sigma2 >= 1.0) {
    throw std::invalid_argument("sigma2 must lie in [0, 1) so that d - sigma2 stays positive");
  }
  if (window_len < 1) throw std::invalid_argument("window_len must be >= 1");
}

LossLedger::LossLedger(std::size_t num_samples, int window_len) : window_len_(window_len) {
  if (window_len < 1) throw std::invalid_argument("window_len must be >= 1");
  window_.assign(num_samples * static_cast<std::size_t>(window_len), 0.0);
  head_.assign(num_samples, 0);
  len_.assign(num_samples, 0);
  survived_.assign(num_samples, 1);  // d starts at 1
  last_marked_epoch_.assign(num_samples, -1);
  mean_cache_.assign(num_samples, std::numeric_limits<double>::quiet_NaN());
  bound_cache_.assign(num_samples, std::numeric_limits<double>::quiet_NaN());
}

void LossLedger::check_sample(std::size_t sample) const {
  if (sample >= len_.size()) throw std::invalid_argument("ledger: sample id out of range");
}

void LossLedger::record_loss(std::size_t sample, double loss, int /*epoch*/) {
  check_sample(sample);
  const double value = damp(loss);
  double* ring = window_.data() + sample * static_cast<std::size_t>(window_len_);
  auto& head = head_[sample];
  auto& len = len_[sample];
  if (len < window_len_) {
    ring[(head + len) % window_len_] = value;
    ++len;
  } else {
    ring[head] = value;
    head = (head + 1) % window_len_;
  }
}

double LossLedger::confirmed_mean(std::size_t sample) {
  check_sample(sample);
  const int len = len_[sample];
  if (len == 0) throw std::runtime_error("confirmed_mean: sample has no loss history");
  const double* ring = window_.data() + sample * static_cast<std::size_t>(window_len_);
  const int head = head_[sample];
  double sum = 0.0;
  for (int j = 0; j < len; ++j) sum += ring[(head + j) % window_len_];
  const double mean = sum / static_cast<double>(len);
  mean_cache_[sample] = mean;
  return mean;
}

double LossLedger::lower_bound(std::size_t sample, int epoch, const BoundConfig& cfg) {
  check_sample(sample);
  if (epoch < 1) throw std::invalid_argument("lower_bound: epoch must be >= 1");
  const double mean = confirmed_mean(sample);
  const double d = static_cast<double>(survived_[sample]);
  if (d <= cfg.sigma2) throw std::invalid_argument("lower_bound: survival count must exceed sigma2");
  const double i = static_cast<double>(epoch);
  const double penalty =
      cfg.sigma2 * (i + cfg.sigma2 * std::log(2.0 * i) / (i * i)) / (d - cfg.sigma2);
  const double bound = mean - penalty;
  bound_cache_[sample] = bound;
  return bound;
}

void LossLedger::mark_survival(std::span<const std::size_t> retained, int epoch) {
  for (const std::size_t sample : retained) {
    check_sample(sample);
    if (last_marked_epoch_[sample] == epoch) {
      throw std::logic_error("mark_survival: sample already marked this epoch");
    }
    last_marked_epoch_[sample] = epoch;
    ++survived_[sample];
  }
}

void LossLedger::clear_window(std::size_t sample) {
  check_sample(sample);
  len_[sample] = 0;
  head_[sample] = 0;
  mean_cache_[sample] = std::numeric_limits<double>::quiet_NaN();
  bound_cache_[sample] = std::numeric_limits<double>::quiet_NaN();
}

int LossLedger::survival_count(std::size_t sample) const {
  check_sample(sample);
  return survived_[sample];
}

int LossLedger::window_size(std::size_t sample) const {
  check_sample(sample);
  return len_[sample];
}

double LossLedger::cached_mean(std::size_t sample) const {
  check_sample(sample);
  return mean_cache_[sample];
}

double LossLedger::cached_bound(std::size_t sample) const {
  check_sample(sample);
  return bound_cache_[sample];
}

}  // namespace dcf
