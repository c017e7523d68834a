#include "recgraph/eval.hpp"

#include <algorithm>

namespace recgraph {

namespace {

void insert_items(const HetGraph& g, std::uint32_t user_type,
                  std::uint32_t item_type, const InteractionLog& log,
                  std::vector<std::vector<std::uint32_t>>& out) {
  for (const auto& rec : log.records) {
    const auto u = g.node_index(user_type, rec.user);
    const auto i = g.node_index(item_type, rec.item);
    if (!u || !i) continue;
    out[*u].push_back(static_cast<std::uint32_t>(*i));
  }
  for (auto& items : out) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
}

}  // namespace

EvalDataset build_eval_dataset(const HetGraph& g, std::uint32_t user_type,
                               std::uint32_t item_type,
                               const InteractionLog& train,
                               const InteractionLog& heldout) {
  EvalDataset data;
  const auto num_users = static_cast<std::size_t>(g.num_nodes(user_type));
  data.train_items.resize(num_users);
  data.truth_items.resize(num_users);
  insert_items(g, user_type, item_type, train, data.train_items);
  insert_items(g, user_type, item_type, heldout, data.truth_items);
  return data;
}

}  // namespace recgraph
