#include "dcf/batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace dcf {

BatchStream::BatchStream(const Dataset& dataset, const BatchStreamConfig& config, int epoch)
    : dataset_(dataset),
      config_(config),
      rng_(derive_seed(config.seed, RngStream::kBatch, static_cast<std::uint64_t>(epoch))) {
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config.negatives_per_positive < 0) {
    throw std::invalid_argument("negatives_per_positive must be >= 0");
  }
  order_.resize(dataset.train.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
}

bool BatchStream::next(std::vector<BatchExample>& out) {
  out.clear();
  if (cursor_ >= order_.size()) return false;

  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), order_.size() - cursor_);
  const std::size_t begin = cursor_;
  cursor_ += take;

  for (std::size_t pos = begin; pos < begin + take; ++pos) {
    const std::uint32_t sid = order_[pos];
    const Interaction& it = dataset_.train[sid];
    out.push_back(BatchExample{static_cast<std::int64_t>(sid), it.user, it.item, it.label});
  }
  const auto num_items = static_cast<std::uint64_t>(dataset_.num_items);
  for (std::size_t pos = begin; pos < begin + take; ++pos) {
    const std::uint32_t sid = order_[pos];
    const Interaction& it = dataset_.train[sid];
    const auto& observed = dataset_.observed_train_items[static_cast<std::size_t>(it.user)];
    if (observed.size() >= static_cast<std::size_t>(dataset_.num_items) &&
        config_.negatives_per_positive > 0) {
      throw std::runtime_error("cannot sample negatives: user has interacted with every item");
    }
    for (int n = 0; n < config_.negatives_per_positive; ++n) {
      std::int32_t item;
      do {
        item = static_cast<std::int32_t>(rng_.below(num_items));
      } while (std::binary_search(observed.begin(), observed.end(), item));
      out.push_back(BatchExample{kTransientSampleId, it.user, item, 0});
    }
  }
  return true;
}

}  // namespace dcf
