#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "recgraph/ego.hpp"
#include "recgraph/graph.hpp"
#include "recgraph/walk.hpp"

namespace recgraph {

// All ordered position pairs (i, j) with 1 <= |i - j| <= win_size, ascending
// by i then j. A path of length <= 1 yields no pairs.
std::vector<std::pair<std::uint32_t, std::uint32_t>> gen_pairs(
    std::size_t path_len, std::uint32_t win_size);

enum class PipelineOrder {
  PairFirst,  // pairs first, then one ego per pair endpoint (2 per pair)
  EgoFirst,   // one ego per path position, pairs share them
};

// One positive training sample. Ego pointers are null when ego sampling is
// skipped for walk-based models; pairs then carry bare node keys.
struct TrainPair {
  NodeKey center = 0;
  NodeKey context = 0;
  std::shared_ptr<EgoGraph> center_ego;
  std::shared_ptr<EgoGraph> context_ego;
  std::uint64_t path_id = 0;
  std::uint32_t i = 0;
  std::uint32_t j = 0;
};

struct PipelineConfig {
  std::uint32_t win_size = 2;
  std::vector<std::uint32_t> fanouts = {10, 10};
  PipelineOrder order = PipelineOrder::EgoFirst;
  std::uint32_t batch_size = 1000;
  bool skip_ego = false;  // walk-based models need no ego graphs
  std::vector<std::uint32_t> relations;  // relations sampled per ego
  std::uint64_t seed = 1;
};

// Shared instrumentation; counters use relaxed atomics so parallel pipeline
// instances can share one sink.
struct PipelineCounters {
  std::atomic<std::uint64_t> ego_samples{0};
  std::atomic<std::uint64_t> paths_consumed{0};
  std::atomic<std::uint64_t> sum_path_len{0};
  std::atomic<std::uint64_t> pairs_emitted{0};
};

// Converts a walk source into batches of TrainPairs. Both orders emit the
// identical multiset of (center, context) key pairs for the same walk
// stream; only the number of ego sampling invocations differs:
// EgoFirst performs |path| per path, PairFirst 2 * |pairs|.
class PairBatchStream {
 public:
  using WalkSource = std::function<std::optional<Path>()>;

  PairBatchStream(const HetGraph& g, WalkSource source, PipelineConfig cfg,
                  PipelineCounters* counters = nullptr);

  // Next batch of exactly batch_size pairs; the final batch may be shorter
  // but is always emitted.
  std::optional<std::vector<TrainPair>> next();

  const PipelineCounters& counters() const { return *counters_; }
  std::uint32_t batch_size() const { return cfg_.batch_size; }

 private:
  void refill();

  const HetGraph& g_;
  WalkSource source_;
  PipelineConfig cfg_;
  PipelineCounters owned_counters_;
  PipelineCounters* counters_;
  Rng rng_;
  std::vector<TrainPair> pending_;
  std::size_t pending_pos_ = 0;
  std::uint64_t next_path_id_ = 0;
  bool exhausted_ = false;
};

}  // namespace recgraph
