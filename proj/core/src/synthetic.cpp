#include "dcf/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "dcf/rng.hpp"

namespace dcf {

RawDataset make_planted_instance(const PlantedConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, RngStream::kPlanted));

  const auto users = static_cast<std::size_t>(cfg.num_users);
  const auto items = static_cast<std::size_t>(cfg.num_items);
  const auto rank = static_cast<std::size_t>(cfg.rank);

  std::vector<double> user_factors(users * rank);
  std::vector<double> item_factors(items * rank);
  for (auto& x : user_factors) x = rng.normal();
  for (auto& x : item_factors) x = rng.normal();

  RawDataset raw;
  raw.num_users = cfg.num_users;
  raw.num_items = cfg.num_items;

  std::vector<std::pair<double, std::int32_t>> scored(items);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rank));
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < rank; ++r) {
        s += user_factors[u * rank + r] * item_factors[i * rank + r];
      }
      scored[i] = {s * scale, static_cast<std::int32_t>(i)};
    }
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(cfg.positives_per_user), items);
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    for (std::size_t t = 0; t < take; ++t) {
      raw.interactions.push_back(
          Interaction{static_cast<std::int32_t>(u), scored[t].second, 1, 5, false});
    }
  }
  return raw;
}

PlantedDataset make_planted_dataset(const PlantedConfig& cfg, double noise_rate) {
  const RawDataset raw = make_planted_instance(cfg);
  PlantedDataset out;
  out.dataset = make_splits(raw, CleanTestRule{5}, derive_seed(cfg.seed, RngStream::kSplit));
  out.noisy_ids = inject_noise(out.dataset, NoiseSpec{noise_rate, cfg.seed});
  out.noisy_set.insert(out.noisy_ids.begin(), out.noisy_ids.end());
  return out;
}

}  // namespace dcf
