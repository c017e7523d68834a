#include "recgraph/walk.hpp"

#include <algorithm>
#include <numeric>

namespace recgraph {

MetaPath parse_metapath(std::string_view spec,
                        std::span<const EdgeTypeTriple> schema) {
  MetaPath mp;
  std::size_t start = 0;
  std::vector<std::string_view> parts;
  const std::string_view sep = " - ";
  while (true) {
    const auto pos = spec.find(sep, start);
    parts.push_back(spec.substr(start, pos == std::string_view::npos
                                           ? std::string_view::npos
                                           : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + sep.size();
  }
  for (auto part : parts) {
    const EdgeTypeTriple parsed = parse_edge_type(part);
    auto it = std::find_if(schema.begin(), schema.end(),
                           [&](const EdgeTypeTriple& t) {
                             return t.same_triple(parsed);
                           });
    if (it == schema.end()) {
      throw ParseError("metapath step \"" + std::string(part) +
                       "\" is not in the schema");
    }
    mp.steps.push_back(*it);
  }
  for (std::size_t i = 0; i + 1 < mp.steps.size(); ++i) {
    if (mp.steps[i].dst_type != mp.steps[i + 1].src_type) {
      throw ParseError("metapath chain mismatch between \"" +
                       mp.steps[i].spec() + "\" (dst " + mp.steps[i].dst_type +
                       ") and \"" + mp.steps[i + 1].spec() + "\" (src " +
                       mp.steps[i + 1].src_type + ")");
    }
  }
  if (mp.steps.back().dst_type != mp.steps.front().src_type) {
    throw ParseError("metapath is not cyclic: last dst type " +
                     mp.steps.back().dst_type + " != first src type " +
                     mp.steps.front().src_type);
  }
  for (std::size_t i = 0; i < mp.steps.size(); ++i) {
    if (i) mp.name += " - ";
    mp.name += mp.steps[i].spec();
  }
  return mp;
}

std::uint32_t path_node_type(const HetGraph& g, const MetaPath& mp,
                             std::size_t pos) {
  const auto& t = pos == 0
                      ? mp.steps.front().src_type
                      : mp.steps[(pos - 1) % mp.steps.size()].dst_type;
  return *g.type_index(t);
}

WalkStream::WalkStream(const HetGraph& g, const WalkConfig& cfg,
                       std::uint64_t epoch, std::uint32_t worker,
                       std::uint32_t num_workers)
    : g_(g), cfg_(cfg), epoch_(epoch), worker_(worker),
      num_workers_(num_workers) {
  if (cfg.walk_len < 1) throw ConfigError("walk_len must be >= 1");
  rel_off_.push_back(0);
  for (const auto& mp : cfg.metapaths) {
    if (mp.steps.empty()) throw ConfigError("metapath with no steps");
    for (const auto& step : mp.steps) {
      rel_idx_.push_back(g.relation_index(step.spec()));
    }
    rel_off_.push_back(static_cast<std::uint32_t>(rel_idx_.size()));
  }
  mp_ = static_cast<std::uint32_t>(-1);
  advance_metapath();
}

bool WalkStream::advance_metapath() {
  while (true) {
    ++mp_;
    if (mp_ >= cfg_.metapaths.size()) return false;
    const auto start_type =
        g_.type_index(cfg_.metapaths[mp_].steps.front().src_type);
    const std::uint64_t n = start_type ? g_.num_nodes(*start_type) : 0;
    starts_.resize(n);
    std::iota(starts_.begin(), starts_.end(), 0);
    Rng shuffle_rng(hash_mix({cfg_.seed, epoch_, mp_, 0x5f5f5355464c45ull}));
    shuffle_rng.shuffle(starts_.begin(), starts_.end());
    if (num_workers_ > 1) {
      // Each worker owns a disjoint stride of the shuffled starts.
      std::vector<std::uint64_t> mine;
      for (std::size_t i = worker_; i < starts_.size(); i += num_workers_) {
        mine.push_back(starts_[i]);
      }
      starts_ = std::move(mine);
    }
    start_pos_ = 0;
    rep_ = 0;
    node_rng_.reset();
    if (!starts_.empty()) return true;
  }
}

std::optional<Path> WalkStream::next() {
  while (mp_ < cfg_.metapaths.size()) {
    if (start_pos_ >= starts_.size()) {
      if (!advance_metapath()) break;
      continue;
    }
    const std::uint64_t start = starts_[start_pos_];
    if (!node_rng_) {
      node_rng_.emplace(hash_mix({cfg_.seed, epoch_, mp_, start}));
    }
    Path p;
    p.metapath_id = mp_;
    const std::uint32_t* rels = rel_idx_.data() + rel_off_[mp_];
    const std::uint32_t nsteps = rel_off_[mp_ + 1] - rel_off_[mp_];
    p.nodes.push_back(node_key(g_.src_type_of(rels[0]), start));
    std::uint64_t cur = start;
    for (std::uint32_t t = 1; t < cfg_.walk_len; ++t) {
      const std::uint32_t rel = rels[(t - 1) % nsteps];
      const auto nbrs = g_.neighbors(rel, cur);
      if (nbrs.empty()) break;  // dead end truncates, never aborts
      cur = nbrs[node_rng_->below(nbrs.size())];
      p.nodes.push_back(node_key(g_.dst_type_of(rel), cur));
    }
    if (++rep_ >= cfg_.walks_per_node) {
      rep_ = 0;
      ++start_pos_;
      node_rng_.reset();
    }
    return p;
  }
  return std::nullopt;
}

std::vector<Path> generate_walks(const HetGraph& g, const WalkConfig& cfg,
                                 std::uint64_t epoch) {
  WalkStream stream(g, cfg, epoch);
  std::vector<Path> out;
  while (auto p = stream.next()) out.push_back(std::move(*p));
  return out;
}

}  // namespace recgraph
