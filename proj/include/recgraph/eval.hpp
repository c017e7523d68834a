#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "recgraph/graph.hpp"
#include "recgraph/model.hpp"

namespace recgraph {

enum class RecallStrategy { Icf, Ucf, U2i };

struct EvalConfig {
  std::uint32_t topn = 20;  // per-seed retrieval depth N
  std::uint32_t k = 50;     // recommendation list length
  RecallStrategy strategy = RecallStrategy::U2i;
  bool exclude_train = true;
};

// Users and items are dense column indices into the embedding matrices.
struct EvalDataset {
  std::vector<std::vector<std::uint32_t>> train_items;  // per user, deduped
  std::vector<std::vector<std::uint32_t>> truth_items;  // per user, deduped
};

// Exact brute-force top-n by descending inner product; ties break by
// ascending candidate id. Excluded ids are never returned; fewer than n
// remaining candidates returns them all.
template <class S>
std::vector<std::uint32_t> topn_similar(const VecX<S>& query,
                                        const MatX<S>& candidates,
                                        std::uint32_t n,
                                        const std::vector<char>* excluded = nullptr,
                                        std::int64_t exclude_self = -1) {
  if (candidates.cols() == 0) throw DataError("topn_similar: no candidates");
  const VecX<S> scores = candidates.transpose() * query;
  std::vector<std::uint32_t> ids;
  ids.reserve(scores.size());
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    if (excluded && (*excluded)[i]) continue;
    if (static_cast<std::int64_t>(i) == exclude_self) continue;
    ids.push_back(i);
  }
  const std::size_t keep = std::min<std::size_t>(n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (scores(a) != scores(b)) return scores(a) > scores(b);
                      return a < b;
                    });
  ids.resize(keep);
  return ids;
}

namespace detail {

// Ranks accumulated candidates by (frequency desc, summed similarity desc,
// id asc) and returns the top k.
template <class S>
std::vector<std::uint32_t> rank_by_frequency(
    const std::unordered_map<std::uint32_t, std::pair<std::uint32_t, S>>& acc,
    std::uint32_t k) {
  std::vector<std::uint32_t> items;
  items.reserve(acc.size());
  for (const auto& [item, _] : acc) items.push_back(item);
  std::sort(items.begin(), items.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto& [fa, sa] = acc.at(a);
    const auto& [fb, sb] = acc.at(b);
    if (fa != fb) return fa > fb;
    if (sa != sb) return sa > sb;
    return a < b;
  });
  if (items.size() > k) items.resize(k);
  return items;
}

inline std::vector<char> train_mask(const EvalDataset& data, std::uint32_t user,
                                    std::size_t num_items, bool exclude_train) {
  std::vector<char> mask(num_items, 0);
  if (exclude_train) {
    for (auto i : data.train_items[user]) mask[i] = 1;
  }
  return mask;
}

}  // namespace detail

// Top-k item ids for one user.
//  ICF: union of per-train-item top-N retrievals ranked by frequency.
//  UCF: items of the top-N most similar users ranked by how many of those
//       users interacted with them.
//  U2I: items by inner product with the user embedding.
// Train items are excluded from the final list when cfg.exclude_train; a
// user with no train history yields an empty list under ICF/UCF.
template <class S>
std::vector<std::uint32_t> recommend(const EvalConfig& cfg, std::uint32_t user,
                                     const MatX<S>& user_emb,
                                     const MatX<S>& item_emb,
                                     const EvalDataset& data) {
  const auto num_items = static_cast<std::size_t>(item_emb.cols());
  switch (cfg.strategy) {
    case RecallStrategy::U2i: {
      auto mask = detail::train_mask(data, user, num_items, cfg.exclude_train);
      return topn_similar<S>(user_emb.col(user), item_emb, cfg.k, &mask);
    }
    case RecallStrategy::Icf: {
      const auto& seeds = data.train_items[user];
      if (seeds.empty()) return {};
      std::unordered_map<std::uint32_t, std::pair<std::uint32_t, S>> acc;
      for (const std::uint32_t seed : seeds) {
        const VecX<S> q = item_emb.col(seed);
        for (auto hit : topn_similar<S>(q, item_emb, cfg.topn, nullptr, seed)) {
          auto& [freq, sim] = acc[hit];
          freq += 1;
          sim += q.dot(item_emb.col(hit));
        }
      }
      if (cfg.exclude_train) {
        for (auto i : seeds) acc.erase(i);
      }
      return detail::rank_by_frequency<S>(acc, cfg.k);
    }
    case RecallStrategy::Ucf: {
      if (data.train_items[user].empty()) return {};
      const VecX<S> q = user_emb.col(user);
      std::unordered_map<std::uint32_t, std::pair<std::uint32_t, S>> acc;
      for (auto peer : topn_similar<S>(q, user_emb, cfg.topn, nullptr, user)) {
        const S sim = q.dot(user_emb.col(peer));
        for (auto item : data.train_items[peer]) {
          auto& [freq, simsum] = acc[item];
          freq += 1;
          simsum += sim;
        }
      }
      if (cfg.exclude_train) {
        for (auto i : data.train_items[user]) acc.erase(i);
      }
      return detail::rank_by_frequency<S>(acc, cfg.k);
    }
  }
  return {};
}

// Mean over users with non-empty truth of |top-k intersect truth| / |truth|.
inline double recall_at_k(
    const std::vector<std::vector<std::uint32_t>>& recommendations,
    const std::vector<std::vector<std::uint32_t>>& truth) {
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t u = 0; u < truth.size(); ++u) {
    if (truth[u].empty()) continue;
    ++scored;
    std::size_t hits = 0;
    for (auto item : recommendations[u]) {
      hits += std::count(truth[u].begin(), truth[u].end(), item) > 0;
    }
    sum += static_cast<double>(hits) / static_cast<double>(truth[u].size());
  }
  return scored == 0 ? 0.0 : sum / static_cast<double>(scored);
}

// Recommends for every user with non-empty truth and reports mean recall.
template <class S>
double evaluate_recall(const EvalConfig& cfg, const MatX<S>& user_emb,
                       const MatX<S>& item_emb, const EvalDataset& data) {
  std::vector<std::vector<std::uint32_t>> recs(data.truth_items.size());
  for (std::uint32_t u = 0; u < data.truth_items.size(); ++u) {
    if (data.truth_items[u].empty()) continue;
    recs[u] = recommend<S>(cfg, u, user_emb, item_emb, data);
  }
  return recall_at_k(recs, data.truth_items);
}

// Builds per-user train/truth item lists from interaction logs; ids unknown
// to the graph vocabularies are dropped (no embedding exists for them).
EvalDataset build_eval_dataset(const HetGraph& g, std::uint32_t user_type,
                               std::uint32_t item_type,
                               const InteractionLog& train,
                               const InteractionLog& heldout);

}  // namespace recgraph
