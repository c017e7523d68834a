#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "recgraph/ego.hpp"
#include "recgraph/model.hpp"
#include "recgraph/table.hpp"

namespace recgraph {

// Final representation of every node of one type, as columns indexed by the
// node's internal index. Walk-based models read base embeddings straight
// from the store; GNN models run the K-layer forward over a freshly sampled
// ego per node, deterministic for a fixed seed.
template <class S>
MatX<S> compute_type_embeddings(const HetGraph& g, ParamStore& store,
                                const ModelConfig& cfg,
                                const DenseParams<S>& dense, std::uint32_t type,
                                const std::vector<std::uint32_t>& relations,
                                const std::vector<std::uint32_t>& fanouts,
                                std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const std::uint64_t n = g.num_nodes(type);
  MatX<S> out(d, static_cast<Eigen::Index>(n));
  const std::uint64_t chunk = 512;
  EgoWorkspace<S> ws;
  for (std::uint64_t begin = 0; begin < n; begin += chunk) {
    const std::uint64_t end = std::min(n, begin + chunk);
    std::vector<EgoGraph> egos;
    std::vector<std::vector<NodeFeatureSpec>> specs;
    std::vector<std::uint64_t> keys;
    std::unordered_map<std::uint64_t, std::uint32_t> slot_of;
    auto intern_spec = [&](const NodeFeatureSpec& spec) {
      auto intern = [&](std::uint64_t key) {
        auto [it, ins] =
            slot_of.try_emplace(key, static_cast<std::uint32_t>(keys.size()));
        if (ins) keys.push_back(key);
      };
      intern(spec.id_key);
      for (const auto& [slot, vkeys] : spec.slots) {
        for (auto k : vkeys) intern(k);
      }
    };
    for (std::uint64_t v = begin; v < end; ++v) {
      const NodeKey nk = node_key(type, v);
      std::vector<NodeFeatureSpec> node_specs;
      if (cfg.is_gnn()) {
        Rng rng(hash_mix({seed, 0x726570ull, nk}));
        egos.push_back(sample_ego(g, nk, relations, fanouts, rng));
        for (const NodeKey pos : egos.back().nodes) {
          node_specs.push_back(feature_spec(g, pos, cfg.use_side_info));
          intern_spec(node_specs.back());
        }
      } else {
        node_specs.push_back(feature_spec(g, nk, cfg.use_side_info));
        intern_spec(node_specs.back());
      }
      specs.push_back(std::move(node_specs));
    }
    std::vector<float> raw;
    store.pull(keys, raw);
    MatX<S> pulled(d, static_cast<Eigen::Index>(keys.size()));
    for (std::size_t i = 0; i < keys.size(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        pulled(j, static_cast<Eigen::Index>(i)) =
            static_cast<S>(raw[i * cfg.dim + static_cast<std::size_t>(j)]);
      }
    }
    auto vec_of = [&](std::uint64_t key) { return pulled.col(slot_of.at(key)); };
    MatX<S> h0;
    for (std::uint64_t v = begin; v < end; ++v) {
      const auto local = v - begin;
      const auto& node_specs = specs[local];
      if (cfg.is_gnn()) {
        h0.resize(d, static_cast<Eigen::Index>(node_specs.size()));
        for (std::size_t p = 0; p < node_specs.size(); ++p) {
          h0.col(static_cast<Eigen::Index>(p)) =
              base_embedding<S>(node_specs[p], vec_of);
        }
        out.col(static_cast<Eigen::Index>(v)) =
            forward_ego(egos[local], cfg, dense, h0, ws);
      } else {
        out.col(static_cast<Eigen::Index>(v)) =
            base_embedding<S>(node_specs[0], vec_of);
      }
    }
  }
  return out;
}

}  // namespace recgraph
