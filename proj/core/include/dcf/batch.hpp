#pragma once

#include <cstdint>
#include <vector>

#include "dcf/dataset.hpp"
#include "dcf/rng.hpp"

namespace dcf {

// Sample id carried by transient sampled negatives.
inline constexpr std::int64_t kTransientSampleId = -1;

struct BatchExample {
  std::int64_t sample_id = kTransientSampleId;  // index into Dataset::train for persistent samples
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int8_t label = 0;
};

struct BatchStreamConfig {
  int batch_size = 1024;             // persistent samples per batch
  int negatives_per_positive = 1;
  std::uint64_t seed = 0;
};

// Single-epoch, single-consumer stream. Persistent train samples are
// shuffled deterministically from (seed, epoch) and emitted exactly once,
// each followed by freshly sampled unobserved items labeled 0. Labels are
// read at emission time so flips applied at the end of epoch i take
// effect from epoch i+1.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, const BatchStreamConfig& config, int epoch);

  // Fills `out` with the next batch; layout is all persistent examples
  // first (shuffled order), then negatives grouped per persistent sample
  // in the same order. Returns false when the epoch is exhausted.
  bool next(std::vector<BatchExample>& out);

 private:
  const Dataset& dataset_;
  BatchStreamConfig config_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

}  // namespace dcf
