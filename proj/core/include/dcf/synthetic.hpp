#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "dcf/dataset.hpp"

namespace dcf {

// Planted low-rank preference instance: user/item factors are drawn i.i.d.
// standard normal and each user's top-scoring items become rating-5
// positives, so the clean test split carries real signal by construction.
struct PlantedConfig {
  std::int32_t num_users = 200;
  std::int32_t num_items = 100;
  int rank = 8;
  int positives_per_user = 12;
  std::uint64_t seed = 0;
};

RawDataset make_planted_instance(const PlantedConfig& cfg);

struct PlantedDataset {
  Dataset dataset;
  std::vector<std::size_t> noisy_ids;
  std::unordered_set<std::size_t> noisy_set;
};

// Splits the planted instance 8:1:1 and injects noise_rate false positives
// with ground truth. Split and injection seeds derive from cfg.seed.
PlantedDataset make_planted_dataset(const PlantedConfig& cfg, double noise_rate);

}  // namespace dcf
