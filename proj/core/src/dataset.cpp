#include "dcf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "dcf/rng.hpp"

namespace dcf {
namespace {

std::uint64_t pair_key(std::int64_t user, std::int64_t item) {
  return (static_cast<std::uint64_t>(user) << 32) | static_cast<std::uint32_t>(item);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::int64_t parse_int(std::string_view text, const std::string& path, std::size_t line_no) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": expected integer, got '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::size_t Dataset::train_positive_count() const {
  std::size_t count = 0;
  for (const auto& it : train) count += (it.label == 1);
  return count;
}

void Dataset::flip_to_negative(std::size_t sample_id) {
  if (sample_id >= train.size()) throw std::invalid_argument("flip_to_negative: sample id out of range");
  Interaction& it = train[sample_id];
  if (it.label != 1) throw std::invalid_argument("flip_to_negative: sample is not a positive");
  it.label = 0;
  auto& items = train_positive_index[static_cast<std::size_t>(it.user)];
  const auto pos = std::lower_bound(items.begin(), items.end(), it.item);
  if (pos != items.end() && *pos == it.item) items.erase(pos);
}

void Dataset::rebuild_indexes() {
  train_positive_index.assign(static_cast<std::size_t>(num_users), {});
  observed_train_items.assign(static_cast<std::size_t>(num_users), {});
  for (const auto& it : train) {
    observed_train_items[static_cast<std::size_t>(it.user)].push_back(it.item);
    if (it.label == 1) train_positive_index[static_cast<std::size_t>(it.user)].push_back(it.item);
  }
  for (auto& v : train_positive_index) std::sort(v.begin(), v.end());
  for (auto& v : observed_train_items) std::sort(v.begin(), v.end());
}

RawDataset load_triplets(const std::string& path, TripletFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);

  RawDataset raw;
  std::unordered_map<std::string, std::int32_t> user_ids;
  std::unordered_map<std::string, std::int32_t> item_ids;
  std::unordered_map<std::uint64_t, std::size_t> seen;  // (user,item) -> interaction index

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 3) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected at least 3 tab-separated fields");
    }

    std::int32_t user = 0;
    std::int32_t item = 0;
    if (format == TripletFormat::kMovieLens100k) {
      const std::int64_t u = parse_int(fields[0], path, line_no);
      const std::int64_t i = parse_int(fields[1], path, line_no);
      if (u < 1 || i < 1) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": ids must be 1-based");
      }
      user = static_cast<std::int32_t>(u - 1);
      item = static_cast<std::int32_t>(i - 1);
      raw.num_users = std::max(raw.num_users, user + 1);
      raw.num_items = std::max(raw.num_items, item + 1);
    } else {
      const auto assign = [](std::unordered_map<std::string, std::int32_t>& ids,
                             std::string_view token) {
        const auto [pos, inserted] = ids.try_emplace(std::string(token),
                                                     static_cast<std::int32_t>(ids.size()));
        (void)inserted;
        return pos->second;
      };
      user = assign(user_ids, fields[0]);
      item = assign(item_ids, fields[1]);
      raw.num_users = static_cast<std::int32_t>(user_ids.size());
      raw.num_items = static_cast<std::int32_t>(item_ids.size());
    }
    const auto rating = static_cast<std::int32_t>(parse_int(fields[2], path, line_no));

    const std::uint64_t key = pair_key(user, item);
    const auto found = seen.find(key);
    if (found != seen.end()) {
      // duplicate pair: keep the strongest signal
      auto& existing = raw.interactions[found->second];
      existing.rating = std::max(existing.rating, rating);
      continue;
    }
    seen.emplace(key, raw.interactions.size());
    raw.interactions.push_back(Interaction{user, item, 1, rating, false});
  }

  if (raw.interactions.empty()) throw std::runtime_error("empty dataset: " + path);
  return raw;
}

Dataset make_splits(const RawDataset& raw, const CleanTestRule& rule, std::uint64_t seed) {
  if (raw.interactions.empty()) throw std::runtime_error("make_splits: empty input");

  Dataset ds;
  ds.num_users = raw.num_users;
  ds.num_items = raw.num_items;

  std::vector<std::vector<std::size_t>> by_user(static_cast<std::size_t>(raw.num_users));
  for (std::size_t idx = 0; idx < raw.interactions.size(); ++idx) {
    by_user[static_cast<std::size_t>(raw.interactions[idx].user)].push_back(idx);
  }

  Rng rng(derive_seed(seed, RngStream::kSplit));
  for (std::size_t user = 0; user < by_user.size(); ++user) {
    auto& indices = by_user[user];
    const std::size_t n = indices.size();
    if (n == 0) continue;
    if (n < 3) {
      for (const std::size_t idx : indices) ds.train.push_back(raw.interactions[idx]);
      continue;
    }
    rng.shuffle(indices);
    const std::size_t holdout = std::max<std::size_t>(1, n / 10);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const Interaction& it = raw.interactions[indices[pos]];
      if (pos < holdout) {
        if (it.rating >= rule.min_rating) ds.test.push_back(it);
      } else if (pos < 2 * holdout) {
        ds.validation.push_back(it);
      } else {
        ds.train.push_back(it);
      }
    }
  }

  ds.rebuild_indexes();
  return ds;
}

std::vector<std::size_t> inject_noise(Dataset& dataset, const NoiseSpec& spec) {
  if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
    throw std::invalid_argument("inject_noise: noise_rate must be in [0, 1)");
  }
  const std::size_t positives = dataset.train_positive_count();
  const auto target = static_cast<std::size_t>(spec.noise_rate * static_cast<double>(positives));
  if (target == 0) return {};

  std::unordered_set<std::uint64_t> observed;
  observed.reserve(dataset.train.size() + dataset.validation.size() + dataset.test.size());
  for (const auto& it : dataset.train) observed.insert(pair_key(it.user, it.item));
  for (const auto& it : dataset.validation) observed.insert(pair_key(it.user, it.item));
  for (const auto& it : dataset.test) observed.insert(pair_key(it.user, it.item));

  const auto total_pairs = static_cast<std::uint64_t>(dataset.num_users) *
                           static_cast<std::uint64_t>(dataset.num_items);
  if (total_pairs - observed.size() < target) {
    throw std::runtime_error("inject_noise: not enough non-interacted pairs");
  }

  Rng rng(derive_seed(spec.seed, RngStream::kNoiseInject));
  std::vector<std::size_t> injected_ids;
  injected_ids.reserve(target);
  while (injected_ids.size() < target) {
    const auto user = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(dataset.num_users)));
    const auto item = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(dataset.num_items)));
    const std::uint64_t key = pair_key(user, item);
    if (!observed.insert(key).second) continue;
    injected_ids.push_back(dataset.train.size());
    dataset.train.push_back(Interaction{user, item, 1, 0, true});

    auto& pos_index = dataset.train_positive_index[static_cast<std::size_t>(user)];
    pos_index.insert(std::lower_bound(pos_index.begin(), pos_index.end(), item), item);
    auto& obs_index = dataset.observed_train_items[static_cast<std::size_t>(user)];
    obs_index.insert(std::lower_bound(obs_index.begin(), obs_index.end(), item), item);
  }
  return injected_ids;
}

namespace {

void write_split(const std::string& path, const std::vector<Interaction>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& it : rows) {
    out << it.user << '\t' << it.item << '\t' << it.rating << '\n';
  }
}

std::vector<Interaction> read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Interaction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 3) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    rows.push_back(Interaction{
        static_cast<std::int32_t>(parse_int(fields[0], path, line_no)),
        static_cast<std::int32_t>(parse_int(fields[1], path, line_no)),
        1,
        static_cast<std::int32_t>(parse_int(fields[2], path, line_no)),
        false});
  }
  return rows;
}

}  // namespace

void write_prepared(const Dataset& dataset, const std::string& dir,
                    const std::vector<std::pair<std::string, std::string>>& manifest_extra) {
  std::filesystem::create_directories(dir);
  write_split(dir + "/train.tsv", dataset.train);
  write_split(dir + "/validation.tsv", dataset.validation);
  write_split(dir + "/test.tsv", dataset.test);

  bool any_noise = false;
  for (const auto& it : dataset.train) any_noise = any_noise || it.truly_noisy;
  if (any_noise) write_noise_mask(dataset, dir + "/noise_mask.csv");

  std::ofstream manifest(dir + "/manifest", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  manifest << "num_users = " << dataset.num_users << '\n';
  manifest << "num_items = " << dataset.num_items << '\n';
  manifest << "train_rows = " << dataset.train.size() << '\n';
  manifest << "validation_rows = " << dataset.validation.size() << '\n';
  manifest << "test_rows = " << dataset.test.size() << '\n';
  for (const auto& [key, value] : manifest_extra) {
    manifest << key << " = " << value << '\n';
  }
}

Dataset load_prepared(const std::string& dir) {
  std::ifstream manifest(dir + "/manifest");
  if (!manifest) throw std::runtime_error("no manifest in " + dir + "; run `prepare` first");
  Dataset ds;
  std::string line;
  while (std::getline(manifest, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "num_users") ds.num_users = std::stoi(value);
    if (key == "num_items") ds.num_items = std::stoi(value);
  }
  if (ds.num_users <= 0 || ds.num_items <= 0) {
    throw std::runtime_error("manifest in " + dir + " lacks num_users/num_items");
  }

  ds.train = read_split(dir + "/train.tsv");
  ds.validation = read_split(dir + "/validation.tsv");
  ds.test = read_split(dir + "/test.tsv");

  if (std::filesystem::exists(dir + "/noise_mask.csv")) {
    for (const std::size_t sid : load_noise_mask(dir + "/noise_mask.csv")) {
      if (sid >= ds.train.size()) throw std::runtime_error("noise mask references unknown sample id");
      ds.train[sid].truly_noisy = true;
    }
  }

  ds.rebuild_indexes();
  return ds;
}

void write_noise_mask(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "sample_id,user,item\n";
  for (std::size_t sid = 0; sid < dataset.train.size(); ++sid) {
    const auto& it = dataset.train[sid];
    if (it.truly_noisy) out << sid << ',' << it.user << ',' << it.item << '\n';
  }
}

std::vector<std::size_t> load_noise_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::size_t> ids;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {  // header
      first = false;
      continue;
    }
    const auto comma = line.find(',');
    ids.push_back(std::stoull(line.substr(0, comma)));
  }
  return ids;
}

}  // namespace dcf
