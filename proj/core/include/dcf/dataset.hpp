#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dcf {

// One observed (user, item) interaction. All observed interactions enter
// with label 1; progressive label correction may flip a train label to 0.
struct Interaction {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int8_t label = 1;
  std::int32_t rating = 0;     // rating or dwell seconds; used only by the clean-test filter
  bool truly_noisy = false;    // ground truth, set by inject_noise only
};

enum class TripletFormat {
  kTsvTriplet,     // user \t item \t rating [\t timestamp], arbitrary tokens
  kMovieLens100k,  // 1-based integer ids remapped to 0-based
};

struct RawDataset {
  std::int32_t num_users = 0;
  std::int32_t num_items = 0;
  std::vector<Interaction> interactions;
};

// Test rows must have rating >= min_rating to count as clean ground truth
// (rating == 5 for MovieLens-style data, dwell >= 10 s for news-style data).
struct CleanTestRule {
  std::int32_t min_rating = 5;
};

struct Dataset {
  std::int32_t num_users = 0;
  std::int32_t num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;

  // Items with a current label-1 train interaction, per user, sorted.
  // Kept consistent with train labels when flips happen.
  std::vector<std::vector<std::int32_t>> train_positive_index;

  // All observed train items per user, sorted, frozen at construction.
  // Negative sampling and ranking exclusion use this set so that label
  // flips change neither sampling streams nor evaluation candidates.
  std::vector<std::vector<std::int32_t>> observed_train_items;

  std::size_t train_positive_count() const;

  // Flip train[sample_id] from label 1 to 0 and drop the item from the
  // user's train_positive_index.
  void flip_to_negative(std::size_t sample_id);

  void rebuild_indexes();
};

struct NoiseSpec {
  double noise_rate = 0.0;  // fraction of injected false positives relative to current train positives
  std::uint64_t seed = 0;
};

RawDataset load_triplets(const std::string& path, TripletFormat format);

// Per-user 8:1:1 split of positives. Users with fewer than 3 positives
// keep everything in train and are absent from validation/test. Test rows
// failing the clean rule are removed.
Dataset make_splits(const RawDataset& raw, const CleanTestRule& rule, std::uint64_t seed);

// Adds floor(noise_rate * train positives) label-1 interactions at pairs
// unobserved in any split, flagged truly_noisy. Returns injected sample ids.
std::vector<std::size_t> inject_noise(Dataset& dataset, const NoiseSpec& spec);

// --- prepared-dataset directory I/O -----------------------------------

// Writes train.tsv / validation.tsv / test.tsv / manifest (and
// noise_mask.csv when any train row is flagged truly_noisy) into dir.
void write_prepared(const Dataset& dataset, const std::string& dir,
                    const std::vector<std::pair<std::string, std::string>>& manifest_extra = {});

Dataset load_prepared(const std::string& dir);

void write_noise_mask(const Dataset& dataset, const std::string& path);

// Returns sample ids (indices into train order as written).
std::vector<std::size_t> load_noise_mask(const std::string& path);

}  // namespace dcf
