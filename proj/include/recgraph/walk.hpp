#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recgraph/graph.hpp"
#include "recgraph/rng.hpp"

namespace recgraph {

// A validated chain of edge-type triples. Walks repeat the chain cyclically
// until walk_len nodes are emitted, so the last step's destination type must
// loop back to the first step's source type.
struct MetaPath {
  std::vector<EdgeTypeTriple> steps;
  std::string name;  // canonical "spec - spec - ..." form
};

// spec is relation specs joined by " - ", e.g. "u2click2i - i2click2u".
MetaPath parse_metapath(std::string_view spec,
                        std::span<const EdgeTypeTriple> schema);

struct WalkConfig {
  std::vector<MetaPath> metapaths;
  std::uint32_t walk_len = 4;       // max nodes per path
  std::uint32_t walks_per_node = 1;
  std::uint64_t seed = 1;
};

struct Path {
  std::uint32_t metapath_id = 0;
  // Typed internal indices (node keys); node types follow the chain.
  std::vector<NodeKey> nodes;
};

// One epoch of walks: for each metapath and each node of its start type,
// walks_per_node paths. Start nodes are visited in a seed-shuffled order and
// each (metapath, start node) pair owns its own RNG stream, so the emitted
// multiset of paths is a pure function of (graph, config, epoch) regardless
// of how consumers interleave with production.
class WalkStream {
 public:
  WalkStream(const HetGraph& g, const WalkConfig& cfg, std::uint64_t epoch = 0,
             std::uint32_t worker = 0, std::uint32_t num_workers = 1);

  std::optional<Path> next();

 private:
  const HetGraph& g_;
  const WalkConfig& cfg_;
  std::uint64_t epoch_;
  std::uint32_t worker_;
  std::uint32_t num_workers_;

  std::vector<std::uint32_t> rel_idx_;   // flattened per-metapath step indices
  std::vector<std::uint32_t> rel_off_;   // start of each metapath's steps
  std::uint32_t mp_ = 0;
  std::vector<std::uint64_t> starts_;    // shuffled start nodes of current metapath
  std::size_t start_pos_ = 0;
  std::uint32_t rep_ = 0;
  std::optional<Rng> node_rng_;

  bool advance_metapath();
};


// Cycles epochs forever (budget-driven training); returns nullopt only when
// an entire epoch yields no paths.
class EndlessWalkSource {
 public:
  EndlessWalkSource(const HetGraph& g, const WalkConfig& cfg,
                    std::uint32_t worker = 0, std::uint32_t num_workers = 1)
      : g_(g), cfg_(cfg), worker_(worker), num_workers_(num_workers) {
    stream_.emplace(g_, cfg_, epoch_, worker_, num_workers_);
  }

  std::optional<Path> next() {
    while (true) {
      if (auto p = stream_->next()) {
        produced_ = true;
        return p;
      }
      if (!produced_) return std::nullopt;  // epoch was empty; graph is dead
      ++epoch_;
      produced_ = false;
      stream_.emplace(g_, cfg_, epoch_, worker_, num_workers_);
    }
  }

 private:
  const HetGraph& g_;
  const WalkConfig& cfg_;
  std::uint32_t worker_;
  std::uint32_t num_workers_;
  std::uint64_t epoch_ = 0;
  bool produced_ = false;
  std::optional<WalkStream> stream_;
};

// Collects a full epoch (testing and debug-dump convenience).
std::vector<Path> generate_walks(const HetGraph& g, const WalkConfig& cfg,
                                 std::uint64_t epoch = 0);

// Node type ordinal at a given path position.
std::uint32_t path_node_type(const HetGraph& g, const MetaPath& mp,
                             std::size_t pos);

}  // namespace recgraph
