#include "recgraph/ego.hpp"

#include <algorithm>

namespace recgraph {

namespace {

// Floyd's algorithm: m distinct indices out of [0, n), uniform, O(m) memory.
void sample_distinct(std::uint64_t n, std::uint32_t m,
                     std::vector<std::uint64_t>& out, Rng& rng) {
  out.clear();
  if (m >= n) {
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(i);
    return;
  }
  for (std::uint64_t j = n - m; j < n; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    if (std::find(out.begin(), out.end(), t) != out.end()) {
      out.push_back(j);
    } else {
      out.push_back(t);
    }
  }
}

}  // namespace

EgoGraph sample_ego(const HetGraph& g, NodeKey center,
                    std::span<const std::uint32_t> relations,
                    std::span<const std::uint32_t> fanouts, Rng& rng) {
  if (fanouts.empty()) throw ConfigError("sample_ego: fanouts must be non-empty");
  EgoGraph ego;
  ego.center = center;
  ego.depth = static_cast<std::uint32_t>(fanouts.size());
  ego.fanouts.assign(fanouts.begin(), fanouts.end());
  ego.nodes.push_back(center);
  ego.node_depth.push_back(0);
  ego.edges.resize(relations.size());
  for (auto& per_rel : ego.edges) per_rel.resize(fanouts.size());

  // node_rel[p]: which relation tree owns position p (center owns none).
  std::vector<std::uint32_t> node_rel(1, static_cast<std::uint32_t>(-1));
  std::uint32_t frontier_begin = 0;
  std::uint32_t frontier_end = 1;
  std::vector<std::uint64_t> picks;

  for (std::uint32_t hop = 0; hop < fanouts.size(); ++hop) {
    for (std::uint32_t p = frontier_begin; p < frontier_end; ++p) {
      const NodeKey key = ego.nodes[p];
      const std::uint32_t node_type = node_key_type(key);
      const std::uint64_t node_idx = node_key_index(key);
      for (std::uint32_t r = 0; r < relations.size(); ++r) {
        if (p != 0 && node_rel[p] != r) continue;
        const std::uint32_t rel = relations[r];
        if (g.src_type_of(rel) != node_type) continue;
        const auto nbrs = g.neighbors(rel, node_idx);
        if (nbrs.empty()) continue;
        sample_distinct(nbrs.size(), fanouts[hop], picks, rng);
        const std::uint32_t dst_type = g.dst_type_of(rel);
        for (const std::uint64_t pick : picks) {
          const auto child = static_cast<std::uint32_t>(ego.nodes.size());
          ego.nodes.push_back(node_key(dst_type, nbrs[pick]));
          ego.node_depth.push_back(static_cast<std::uint8_t>(hop + 1));
          node_rel.push_back(r);
          ego.edges[r][hop].push_back({p, child});
        }
      }
    }
    frontier_begin = frontier_end;
    frontier_end = static_cast<std::uint32_t>(ego.nodes.size());
    if (frontier_begin == frontier_end) break;  // nothing left to expand
  }
  return ego;
}

}  // namespace recgraph
