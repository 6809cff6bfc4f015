#include "dcf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dcf/denoise.hpp"

namespace dcf {

double recall_at_k(std::span<const std::int32_t> ranked,
                   const std::unordered_set<std::int32_t>& relevant, int k) {
  if (relevant.empty()) throw std::invalid_argument("recall_at_k: empty relevant set");
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  std::size_t hits = 0;
  for (std::size_t pos = 0; pos < top; ++pos) hits += relevant.count(ranked[pos]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const std::int32_t> ranked,
                 const std::unordered_set<std::int32_t>& relevant, int k) {
  if (relevant.empty()) throw std::invalid_argument("ndcg_at_k: empty relevant set");
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  double dcg = 0.0;
  for (std::size_t pos = 0; pos < top; ++pos) {
    if (relevant.count(ranked[pos])) {
      dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);  // 1-based position pos+1
    }
  }
  const std::size_t ideal_hits = std::min<std::size_t>(relevant.size(), static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t pos = 0; pos < ideal_hits; ++pos) {
    idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  }
  return dcg / idcg;
}

namespace {

// Top-K by (logit desc, item asc); equivalent to the prefix of
// score_all_items but avoids sorting the full catalog.
std::vector<std::int32_t> top_k_items(const GmfModel& model, std::int32_t user,
                                      std::span<const std::int32_t> exclude_sorted,
                                      std::size_t k) {
  std::vector<std::int32_t> items;
  items.reserve(static_cast<std::size_t>(model.num_items()));
  for (std::int32_t item = 0; item < model.num_items(); ++item) {
    if (!std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), item)) {
      items.push_back(item);
    }
  }
  std::vector<double> logits(static_cast<std::size_t>(model.num_items()));
  for (const std::int32_t item : items) {
    logits[static_cast<std::size_t>(item)] = model.logit(user, item);
  }
  const auto better = [&](std::int32_t a, std::int32_t b) {
    const double la = logits[static_cast<std::size_t>(a)];
    const double lb = logits[static_cast<std::size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;
  };
  const std::size_t top = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(top), items.end(),
                    better);
  items.resize(top);
  return items;
}

}  // namespace

RunMetrics evaluate(const GmfModel& model, const Dataset& dataset, EvalSplit split,
                    const std::vector<int>& k_list, int threads) {
  if (k_list.empty()) throw std::invalid_argument("evaluate: empty K list");
  const auto& rows = split == EvalSplit::kTest ? dataset.test : dataset.validation;

  std::vector<std::unordered_set<std::int32_t>> relevant(static_cast<std::size_t>(dataset.num_users));
  for (const auto& it : rows) relevant[static_cast<std::size_t>(it.user)].insert(it.item);

  std::vector<std::int32_t> users;
  for (std::int32_t u = 0; u < dataset.num_users; ++u) {
    if (!relevant[static_cast<std::size_t>(u)].empty()) users.push_back(u);
  }
  if (users.empty()) throw std::runtime_error("evaluate: no users with relevant items in split");

  const int max_k = *std::max_element(k_list.begin(), k_list.end());
  // per-user metric rows, reduced sequentially so results do not depend
  // on the thread count
  std::vector<std::vector<double>> recall_rows(users.size());
  std::vector<std::vector<double>> ndcg_rows(users.size());

  const auto eval_user = [&](std::size_t slot) {
    const std::int32_t user = users[slot];
    const auto& exclude = dataset.observed_train_items[static_cast<std::size_t>(user)];
    const auto ranked = top_k_items(model, user, {exclude.data(), exclude.size()},
                                    static_cast<std::size_t>(max_k));
    const auto& rel = relevant[static_cast<std::size_t>(user)];
    recall_rows[slot].reserve(k_list.size());
    ndcg_rows[slot].reserve(k_list.size());
    for (const int k : k_list) {
      recall_rows[slot].push_back(recall_at_k({ranked.data(), ranked.size()}, rel, k));
      ndcg_rows[slot].push_back(ndcg_at_k({ranked.data(), ranked.size()}, rel, k));
    }
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(users.size())));
  if (workers == 1) {
    for (std::size_t slot = 0; slot < users.size(); ++slot) eval_user(slot);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t slot = static_cast<std::size_t>(w); slot < users.size();
             slot += static_cast<std::size_t>(workers)) {
          eval_user(slot);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  RunMetrics out;
  out.k_list = k_list;
  for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
    double recall_sum = 0.0;
    double ndcg_sum = 0.0;
    for (std::size_t slot = 0; slot < users.size(); ++slot) {
      recall_sum += recall_rows[slot][ki];
      ndcg_sum += ndcg_rows[slot][ki];
    }
    out.recall[k_list[ki]] = recall_sum / static_cast<double>(users.size());
    out.ndcg[k_list[ki]] = ndcg_sum / static_cast<double>(users.size());
  }
  return out;
}

std::optional<double> flip_precision(std::span<const RelabelEvent> events,
                                     const std::unordered_set<std::size_t>& noisy_ids) {
  if (events.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (const auto& ev : events) hits += noisy_ids.count(static_cast<std::size_t>(ev.sample));
  return static_cast<double>(hits) / static_cast<double>(events.size());
}

MetricsReport aggregate_seeds(const std::vector<RunMetrics>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("aggregate_seeds: need at least 2 reports");
  const auto& k_list = reports.front().k_list;
  for (const auto& r : reports) {
    if (r.k_list != k_list) throw std::invalid_argument("aggregate_seeds: mismatched K sets");
  }

  MetricsReport out;
  out.k_list = k_list;
  out.per_seed = reports;
  out.mean.k_list = k_list;
  out.stddev.k_list = k_list;

  const double n = static_cast<double>(reports.size());
  const auto reduce = [&](auto getter, std::map<int, double>& mean_map,
                          std::map<int, double>& std_map) {
    for (const int k : k_list) {
      double sum = 0.0;
      for (const auto& r : reports) sum += getter(r).at(k);
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& r : reports) {
        const double d = getter(r).at(k) - mean;
        ss += d * d;
      }
      mean_map[k] = mean;
      std_map[k] = std::sqrt(ss / (n - 1.0));
    }
  };
  reduce([](const RunMetrics& r) -> const std::map<int, double>& { return r.recall; },
         out.mean.recall, out.stddev.recall);
  reduce([](const RunMetrics& r) -> const std::map<int, double>& { return r.ndcg; },
         out.mean.ndcg, out.stddev.ndcg);

  const bool all_fp = std::all_of(reports.begin(), reports.end(),
                                  [](const RunMetrics& r) { return r.flip_precision.has_value(); });
  if (all_fp) {
    double sum = 0.0;
    for (const auto& r : reports) sum += *r.flip_precision;
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : reports) {
      const double d = *r.flip_precision - mean;
      ss += d * d;
    }
    out.mean.flip_precision = mean;
    out.stddev.flip_precision = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace dcf
