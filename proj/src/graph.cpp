#include "recgraph/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace recgraph {

namespace {

bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string_view> split_on(std::string_view s, char delim) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == delim) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

}  // namespace

EdgeTypeTriple parse_edge_type(std::string_view spec) {
  if (spec.empty()) throw ParseError("empty edge-type spec");
  if (has_whitespace(spec)) {
    throw ParseError("edge-type spec contains whitespace: \"" +
                     std::string(spec) + "\"");
  }
  const auto parts = split_on(spec, '2');
  if (parts.size() != 2 && parts.size() != 3) {
    throw ParseError("edge-type spec \"" + std::string(spec) + "\" has " +
                     std::to_string(parts.size()) + " parts, expected 2 or 3");
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) {
      static const char* role3[] = {"source", "relation", "destination"};
      static const char* role2[] = {"source", "destination"};
      const char* role = parts.size() == 3 ? role3[i] : role2[i];
      throw ParseError("edge-type spec \"" + std::string(spec) +
                       "\" has an empty " + role + " part");
    }
  }
  EdgeTypeTriple t;
  if (parts.size() == 3) {
    t.src_type = std::string(parts[0]);
    t.relation = std::string(parts[1]);
    t.dst_type = std::string(parts[2]);
  } else {
    // Homogeneous form: the whole spec is the relation name.
    t.src_type = std::string(parts[0]);
    t.relation = std::string(spec);
    t.dst_type = std::string(parts[1]);
  }
  return t;
}

SplitLogs temporal_split(const InteractionLog& log, double train_frac,
                         double val_frac) {
  if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0) {
    throw ConfigError("temporal_split fractions must be positive with "
                      "train_frac + val_frac < 1");
  }
  // Group per user in first-seen order; stable sort keeps input order on ties.
  std::unordered_map<std::string, std::uint32_t> user_slot;
  std::vector<std::vector<std::uint32_t>> per_user;
  for (std::uint32_t i = 0; i < log.records.size(); ++i) {
    auto [it, inserted] = user_slot.try_emplace(log.records[i].user,
                                                static_cast<std::uint32_t>(per_user.size()));
    if (inserted) per_user.emplace_back();
    per_user[it->second].push_back(i);
  }
  SplitLogs out;
  for (auto& idxs : per_user) {
    std::stable_sort(idxs.begin(), idxs.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       return log.records[a].timestamp < log.records[b].timestamp;
                     });
    const auto n = static_cast<double>(idxs.size());
    const auto t_end = static_cast<std::size_t>(std::floor(n * train_frac));
    const auto v_end =
        static_cast<std::size_t>(std::floor(n * (train_frac + val_frac)));
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      auto& dest = i < t_end ? out.train : (i < v_end ? out.val : out.test);
      dest.records.push_back(log.records[idxs[i]]);
    }
  }
  return out;
}

std::optional<std::uint32_t> HetGraph::type_index(std::string_view name) const {
  auto it = type_lookup_.find(std::string(name));
  if (it == type_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint64_t> HetGraph::node_index(std::uint32_t type,
                                                  std::string_view name) const {
  auto it = node_lookup_[type].find(std::string(name));
  if (it == node_lookup_[type].end()) return std::nullopt;
  return it->second;
}

std::uint32_t HetGraph::relation_index(std::string_view spec) const {
  auto r = find_relation(spec);
  if (!r) throw DataError("unknown relation \"" + std::string(spec) + "\"");
  return *r;
}

std::optional<std::uint32_t> HetGraph::find_relation(std::string_view spec) const {
  auto it = relation_lookup_.find(std::string(spec));
  if (it == relation_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> HetGraph::reverse_relation(std::uint32_t r) const {
  if (!relations_[r].symmetric) return std::nullopt;
  return find_relation(relations_[r].reversed().spec());
}

std::span<const std::uint64_t> HetGraph::neighbors(std::uint32_t rel,
                                                   std::uint64_t src) const {
  const Csr& csr = adjacency_[rel];
  if (src + 1 >= csr.offsets.size()) return {};
  return {csr.neighbors.data() + csr.offsets[src],
          csr.neighbors.data() + csr.offsets[src + 1]};
}

std::span<const HetGraph::SlotValues> HetGraph::side_info(
    std::uint32_t type, std::uint64_t idx) const {
  if (!has_side_info_) return {};
  const auto& per_node = side_info_[type];
  if (idx >= per_node.size()) return {};
  return per_node[idx];
}

void HetGraphBuilder::add_schema_spec(std::string_view spec, bool symmetric) {
  EdgeTypeTriple t = parse_edge_type(spec);
  t.symmetric = symmetric;
  add_schema(t);
}

void HetGraphBuilder::add_schema(const EdgeTypeTriple& triple) {
  auto validate_name = [](const std::string& name, const char* what) {
    if (name.empty()) throw ParseError(std::string(what) + " name is empty");
    if (has_whitespace(name)) {
      throw ParseError(std::string(what) + " name \"" + name +
                       "\" contains whitespace");
    }
  };
  validate_name(triple.src_type, "node-type");
  validate_name(triple.dst_type, "node-type");
  validate_name(triple.relation, "relation");
  // "2" is the reserved delimiter; a type name containing it is unparseable.
  if (triple.src_type.find('2') != std::string::npos ||
      triple.dst_type.find('2') != std::string::npos) {
    throw ParseError("node-type names must not contain the delimiter \"2\"");
  }
  const bool two_part =
      triple.relation == triple.src_type + "2" + triple.dst_type;
  if (!two_part && triple.relation.find('2') != std::string::npos) {
    throw ParseError("relation name \"" + triple.relation +
                     "\" must not contain the delimiter \"2\"");
  }
  if (two_part && triple.symmetric && triple.src_type != triple.dst_type) {
    throw ParseError("symmetric two-part edge type \"" + triple.relation +
                     "\" needs matching endpoint types; use the "
                     "src2rel2dst form instead");
  }
  const std::string spec = triple.spec();
  if (g_.relation_lookup_.count(spec)) {
    throw ParseError("duplicate edge type \"" + spec + "\" in schema");
  }
  const auto src = intern_type(triple.src_type);
  const auto dst = intern_type(triple.dst_type);
  g_.relation_lookup_.emplace(spec, static_cast<std::uint32_t>(g_.relations_.size()));
  g_.relations_.push_back(triple);
  g_.rel_src_type_.push_back(src);
  g_.rel_dst_type_.push_back(dst);
  if (triple.symmetric) {
    const EdgeTypeTriple rev = triple.reversed();
    if (!g_.relation_lookup_.count(rev.spec())) add_schema(rev);
  }
}

std::uint32_t HetGraphBuilder::intern_type(const std::string& name) {
  auto [it, inserted] = g_.type_lookup_.try_emplace(
      name, static_cast<std::uint32_t>(g_.type_names_.size()));
  if (inserted) {
    if (g_.type_names_.size() >= (1u << 14)) {
      throw DataError("too many node types (limit 16384)");
    }
    g_.type_names_.push_back(name);
    g_.node_names_.emplace_back();
    g_.node_lookup_.emplace_back();
  }
  return it->second;
}

std::uint64_t HetGraphBuilder::intern_node(std::uint32_t type,
                                           std::string_view id) {
  auto& lookup = g_.node_lookup_[type];
  auto [it, inserted] =
      lookup.try_emplace(std::string(id), g_.node_names_[type].size());
  if (inserted) g_.node_names_[type].push_back(std::string(id));
  return it->second;
}

void HetGraphBuilder::add_edge(std::string_view type_spec,
                               std::string_view src_id,
                               std::string_view dst_id) {
  auto it = g_.relation_lookup_.find(std::string(type_spec));
  if (it == g_.relation_lookup_.end()) {
    throw DataError("edge references unknown edge type \"" +
                    std::string(type_spec) + "\"");
  }
  if (src_id.empty() || dst_id.empty()) {
    throw DataError("edge of type \"" + std::string(type_spec) +
                    "\" has an empty endpoint id");
  }
  const std::uint32_t rel = it->second;
  const std::uint64_t src = intern_node(g_.rel_src_type_[rel], src_id);
  const std::uint64_t dst = intern_node(g_.rel_dst_type_[rel], dst_id);
  edges_.push_back({rel, src, dst});
  if (g_.relations_[rel].symmetric) {
    // Materialize the reverse edge exactly once per input edge.
    const std::uint32_t rrel =
        g_.relation_lookup_.at(g_.relations_[rel].reversed().spec());
    edges_.push_back({rrel, dst, src});
  }
}

void HetGraphBuilder::add_side_info(std::string_view node_type,
                                    std::string_view node_id,
                                    std::uint32_t slot,
                                    std::span<const std::string> values) {
  auto type = g_.type_lookup_.find(std::string(node_type));
  if (type == g_.type_lookup_.end()) {
    throw DataError("side-info references unknown node type \"" +
                    std::string(node_type) + "\"");
  }
  const std::uint32_t t = type->second;
  const std::uint64_t idx = intern_node(t, node_id);
  if (g_.side_info_.size() < g_.type_names_.size()) {
    g_.side_info_.resize(g_.type_names_.size());
  }
  auto& per_node = g_.side_info_[t];
  if (per_node.size() <= idx) per_node.resize(idx + 1);
  HetGraph::SlotValues sv;
  sv.slot = slot;
  auto& vocab = slot_vocab_[slot];
  for (const auto& value : values) {
    auto [it, inserted] =
        vocab.try_emplace(value, static_cast<std::uint32_t>(vocab.size()));
    sv.values.push_back(it->second);
  }
  per_node[idx].push_back(std::move(sv));
  g_.has_side_info_ = true;
}

std::uint32_t HetGraphBuilder::slot_value_count(std::uint32_t slot) const {
  auto it = slot_vocab_.find(slot);
  return it == slot_vocab_.end() ? 0u
                                 : static_cast<std::uint32_t>(it->second.size());
}

HetGraph HetGraphBuilder::build() {
  if (built_) throw DataError("HetGraphBuilder::build called twice");
  built_ = true;
  g_.adjacency_.resize(g_.relations_.size());
  // Counting sort by source keeps input order among a node's edges.
  for (std::uint32_t r = 0; r < g_.relations_.size(); ++r) {
    auto& csr = g_.adjacency_[r];
    const std::uint64_t n = g_.node_names_[g_.rel_src_type_[r]].size();
    csr.offsets.assign(n + 1, 0);
  }
  for (const auto& e : edges_) g_.adjacency_[e.rel].offsets[e.src + 1]++;
  for (auto& csr : g_.adjacency_) {
    std::partial_sum(csr.offsets.begin(), csr.offsets.end(),
                     csr.offsets.begin());
    csr.neighbors.resize(csr.offsets.back());
  }
  std::vector<std::vector<std::uint64_t>> cursor(g_.relations_.size());
  for (std::uint32_t r = 0; r < g_.relations_.size(); ++r) {
    cursor[r].assign(g_.adjacency_[r].offsets.begin(),
                     g_.adjacency_[r].offsets.end() - 1);
  }
  for (const auto& e : edges_) {
    g_.adjacency_[e.rel].neighbors[cursor[e.rel][e.src]++] = e.dst;
  }
  edges_.clear();
  if (g_.has_side_info_) {
    g_.side_info_.resize(g_.type_names_.size());
    for (std::uint32_t t = 0; t < g_.type_names_.size(); ++t) {
      g_.side_info_[t].resize(g_.node_names_[t].size());
    }
  }
  return std::move(g_);
}

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open \"" + path + "\"");
  return in;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

std::int64_t parse_ts(const std::string& s, const std::string& path,
                      std::size_t lineno) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(lineno) +
                     ": bad timestamp \"" + s + "\"");
  }
}

}  // namespace

std::vector<EdgeInput> load_edge_file(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<EdgeInput> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected 3 or 4 tab-separated columns, got " +
                       std::to_string(fields.size()));
    }
    EdgeInput e;
    e.type_spec = fields[0];
    e.src_id = fields[1];
    e.dst_id = fields[2];
    if (fields.size() == 4) e.timestamp = parse_ts(fields[3], path, lineno);
    edges.push_back(std::move(e));
  }
  return edges;
}

void load_side_info_file(const std::string& path, HetGraphBuilder& builder) {
  auto in = open_or_throw(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (fields.size() < 3) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected node_type, node_id and at least one "
                       "slot:value column");
    }
    for (std::size_t f = 2; f < fields.size(); ++f) {
      const auto colon = fields[f].find(':');
      if (colon == std::string::npos || colon == 0) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": bad slot:value field \"" + fields[f] + "\"");
      }
      std::uint32_t slot = 0;
      try {
        slot = static_cast<std::uint32_t>(std::stoul(fields[f].substr(0, colon)));
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": slot id is not a number in \"" + fields[f] + "\"");
      }
      std::vector<std::string> values;
      for (auto v : split_on(fields[f].substr(colon + 1), ',')) {
        if (v.empty()) {
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": empty value in \"" + fields[f] + "\"");
        }
        values.emplace_back(v);
      }
      builder.add_side_info(fields[0], fields[1], slot, values);
    }
  }
}

InteractionLog load_interaction_file(const std::string& path) {
  auto in = open_or_throw(path);
  InteractionLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected user, item, behavior, timestamp");
    }
    log.records.push_back({fields[0], fields[1], fields[2],
                           parse_ts(fields[3], path, lineno)});
  }
  return log;
}

}  // namespace recgraph
