#include "recgraph/pipeline.hpp"

#include <algorithm>

namespace recgraph {

std::vector<std::pair<std::uint32_t, std::uint32_t>> gen_pairs(
    std::size_t path_len, std::uint32_t win_size) {
  if (win_size < 1) throw ConfigError("win_size must be >= 1");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  if (path_len <= 1) return pairs;
  const auto n = static_cast<std::uint32_t>(path_len);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t lo = i > win_size ? i - win_size : 0;
    const std::uint32_t hi = std::min(n - 1, i + win_size);
    for (std::uint32_t j = lo; j <= hi; ++j) {
      if (j != i) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

PairBatchStream::PairBatchStream(const HetGraph& g, WalkSource source,
                                 PipelineConfig cfg, PipelineCounters* counters)
    : g_(g),
      source_(std::move(source)),
      cfg_(std::move(cfg)),
      counters_(counters ? counters : &owned_counters_),
      rng_(hash_mix({cfg_.seed, 0x70697065ull})) {
  if (cfg_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!cfg_.skip_ego && cfg_.relations.empty()) {
    for (std::uint32_t r = 0; r < g.num_relations(); ++r) {
      cfg_.relations.push_back(r);
    }
  }
}

void PairBatchStream::refill() {
  pending_.clear();
  pending_pos_ = 0;
  // Pool several paths' pairs and emit them in a seed-deterministic
  // shuffle; consecutive pairs of one path share most of their keys.
  const std::size_t pool = std::max<std::size_t>(cfg_.batch_size * 4, 512);
  while (pending_.size() < pool) {
    auto path = source_();
    if (!path) {
      exhausted_ = true;
      break;
    }
    const std::uint64_t path_id = next_path_id_++;
    counters_->paths_consumed.fetch_add(1, std::memory_order_relaxed);
    counters_->sum_path_len.fetch_add(path->nodes.size(),
                                      std::memory_order_relaxed);
    const auto positions = gen_pairs(path->nodes.size(), cfg_.win_size);
    auto sample = [&](NodeKey key) {
      counters_->ego_samples.fetch_add(1, std::memory_order_relaxed);
      return std::make_shared<EgoGraph>(
          sample_ego(g_, key, cfg_.relations, cfg_.fanouts, rng_));
    };
    if (cfg_.skip_ego) {
      for (const auto& [i, j] : positions) {
        TrainPair tp;
        tp.center = path->nodes[i];
        tp.context = path->nodes[j];
        tp.path_id = path_id;
        tp.i = i;
        tp.j = j;
        pending_.push_back(std::move(tp));
      }
    } else if (cfg_.order == PipelineOrder::EgoFirst) {
      std::vector<std::shared_ptr<EgoGraph>> egos;
      egos.reserve(path->nodes.size());
      for (const NodeKey key : path->nodes) egos.push_back(sample(key));
      for (const auto& [i, j] : positions) {
        TrainPair tp;
        tp.center = path->nodes[i];
        tp.context = path->nodes[j];
        tp.center_ego = egos[i];
        tp.context_ego = egos[j];
        tp.path_id = path_id;
        tp.i = i;
        tp.j = j;
        pending_.push_back(std::move(tp));
      }
    } else {
      for (const auto& [i, j] : positions) {
        TrainPair tp;
        tp.center = path->nodes[i];
        tp.context = path->nodes[j];
        tp.center_ego = sample(tp.center);
        tp.context_ego = sample(tp.context);
        tp.path_id = path_id;
        tp.i = i;
        tp.j = j;
        pending_.push_back(std::move(tp));
      }
    }
  }
  rng_.shuffle(pending_.begin(), pending_.end());
}

std::optional<std::vector<TrainPair>> PairBatchStream::next() {
  std::vector<TrainPair> batch;
  batch.reserve(cfg_.batch_size);
  while (batch.size() < cfg_.batch_size) {
    if (pending_pos_ >= pending_.size()) {
      if (exhausted_) break;
      refill();
      continue;
    }
    batch.push_back(std::move(pending_[pending_pos_++]));
    counters_->pairs_emitted.fetch_add(1, std::memory_order_relaxed);
  }
  if (batch.empty()) return std::nullopt;
  return batch;
}

}  // namespace recgraph
