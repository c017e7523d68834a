#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recgraph/common.hpp"
#include "recgraph/graph.hpp"
#include "recgraph/rng.hpp"

namespace recgraph {

// A center node plus its relation-wise sampled multi-hop neighborhood.
//
// Sampling is tree-style: every sampled neighbor becomes a fresh position
// even when the same graph node appears on several branches. Position 0 is
// the center; positions are appended hop by hop, so depth is non-decreasing
// along the position order and the first `active_count(k)` positions are
// exactly those with depth <= k.
//
// Each non-center position belongs to the relation tree it was sampled
// under and only expands through that relation; the center expands through
// every requested relation. A frontier node whose type does not match a
// relation's source type contributes an empty layer for it.
struct EgoGraph {
  struct Edge {
    std::uint32_t parent;
    std::uint32_t child;
  };

  NodeKey center = 0;
  std::uint32_t depth = 0;               // hops sampled (K)
  std::vector<std::uint32_t> fanouts;    // per-hop caps, size K
  std::vector<NodeKey> nodes;            // flat positions, [0] = center
  std::vector<std::uint8_t> node_depth;  // hop of each position
  // edges[r][k-1]: sampled edges from hop k-1 parents to hop k children of
  // relation r (r indexes the `relations` list passed to sample_ego).
  std::vector<std::vector<std::vector<Edge>>> edges;

  std::uint32_t size() const { return static_cast<std::uint32_t>(nodes.size()); }

  // Number of positions with depth <= k.
  std::uint32_t active_count(std::uint32_t k) const {
    std::uint32_t n = 0;
    while (n < nodes.size() && node_depth[n] <= k) ++n;
    return n;
  }
};

// Samples min(fanout, degree) distinct neighbors uniformly without
// replacement per frontier node and relation.
EgoGraph sample_ego(const HetGraph& g, NodeKey center,
                    std::span<const std::uint32_t> relations,
                    std::span<const std::uint32_t> fanouts, Rng& rng);

}  // namespace recgraph
