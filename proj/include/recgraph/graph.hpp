#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recgraph/common.hpp"

namespace recgraph {

// One directed edge type (src node type, relation, dst node type).
// Edge-type specs use "2" as the delimiter: "u2click2i" names the triple
// (u, click, i). A two-part spec like "u2u" names a homogeneous relation
// whose relation name is the whole spec string.
struct EdgeTypeTriple {
  std::string src_type;
  std::string relation;
  std::string dst_type;
  bool symmetric = false;

  // Canonical spec string: the original two-part form, or src2rel2dst.
  std::string spec() const {
    if (relation.find('2') != std::string::npos) return relation;
    return src_type + "2" + relation + "2" + dst_type;
  }

  EdgeTypeTriple reversed() const {
    return EdgeTypeTriple{dst_type, relation, src_type, symmetric};
  }

  bool same_triple(const EdgeTypeTriple& o) const {
    return src_type == o.src_type && relation == o.relation &&
           dst_type == o.dst_type;
  }
};

EdgeTypeTriple parse_edge_type(std::string_view spec);

struct InteractionRecord {
  std::string user;
  std::string item;
  std::string behavior;
  std::int64_t timestamp = 0;
};

struct InteractionLog {
  std::vector<InteractionRecord> records;
};

// Per-user temporal split: records sorted ascending by timestamp (ties keep
// input order), first floor(n*train_frac) to train, up to floor(n*(train+val))
// to val, remainder to test.
struct SplitLogs {
  InteractionLog train;
  InteractionLog val;
  InteractionLog test;
};

SplitLogs temporal_split(const InteractionLog& log, double train_frac = 0.8,
                         double val_frac = 0.1);

struct EdgeInput {
  std::string type_spec;
  std::string src_id;
  std::string dst_id;
  std::optional<std::int64_t> timestamp;
};

// Immutable heterogeneous multigraph with relation-indexed CSR adjacency.
// Safe for unlimited concurrent readers once built.
class HetGraph {
 public:
  std::uint32_t num_types() const {
    return static_cast<std::uint32_t>(type_names_.size());
  }
  const std::string& type_name(std::uint32_t t) const { return type_names_[t]; }
  std::optional<std::uint32_t> type_index(std::string_view name) const;

  std::uint64_t num_nodes(std::uint32_t type) const {
    return node_names_[type].size();
  }
  const std::string& node_name(std::uint32_t type, std::uint64_t idx) const {
    return node_names_[type][idx];
  }
  std::optional<std::uint64_t> node_index(std::uint32_t type,
                                          std::string_view name) const;

  std::uint32_t num_relations() const {
    return static_cast<std::uint32_t>(relations_.size());
  }
  const EdgeTypeTriple& relation(std::uint32_t r) const { return relations_[r]; }
  std::uint32_t relation_index(std::string_view spec) const;
  std::optional<std::uint32_t> find_relation(std::string_view spec) const;
  // Index of the reverse triple for symmetric relations, else nullopt.
  std::optional<std::uint32_t> reverse_relation(std::uint32_t r) const;

  std::span<const std::uint64_t> neighbors(std::uint32_t rel,
                                           std::uint64_t src) const;
  std::uint64_t degree(std::uint32_t rel, std::uint64_t src) const {
    return neighbors(rel, src).size();
  }
  std::uint64_t num_edges(std::uint32_t rel) const {
    return adjacency_[rel].neighbors.size();
  }

  std::uint32_t src_type_of(std::uint32_t rel) const { return rel_src_type_[rel]; }
  std::uint32_t dst_type_of(std::uint32_t rel) const { return rel_dst_type_[rel]; }

  NodeKey key_of(std::uint32_t type, std::uint64_t idx) const {
    return node_key(type, idx);
  }

  // Side-info slots for one node: (slot id, value indices), empty if none.
  struct SlotValues {
    std::uint32_t slot;
    std::vector<std::uint32_t> values;
  };
  std::span<const SlotValues> side_info(std::uint32_t type,
                                        std::uint64_t idx) const;
  bool has_side_info() const { return has_side_info_; }

 private:
  friend class HetGraphBuilder;

  struct Csr {
    std::vector<std::uint64_t> offsets;    // num_nodes(src_type) + 1
    std::vector<std::uint64_t> neighbors;  // dst internal indices
  };

  std::vector<std::string> type_names_;
  std::unordered_map<std::string, std::uint32_t> type_lookup_;
  std::vector<std::vector<std::string>> node_names_;
  std::vector<std::unordered_map<std::string, std::uint64_t>> node_lookup_;
  std::vector<EdgeTypeTriple> relations_;
  std::unordered_map<std::string, std::uint32_t> relation_lookup_;
  std::vector<std::uint32_t> rel_src_type_;
  std::vector<std::uint32_t> rel_dst_type_;
  std::vector<Csr> adjacency_;
  std::vector<std::vector<std::vector<SlotValues>>> side_info_;  // [type][node]
  bool has_side_info_ = false;
};

// Single-writer builder; the result is immutable.
class HetGraphBuilder {
 public:
  // Registers a triple; for symmetric triples the reverse triple is
  // registered as well. Rejects duplicate triples and names containing the
  // reserved delimiter or whitespace.
  void add_schema(const EdgeTypeTriple& triple);
  void add_schema_spec(std::string_view spec, bool symmetric);

  // Vocabularies assign dense indices in first-seen order (src before dst).
  // Duplicate edges are retained: walk transition probabilities reflect
  // interaction frequency.
  void add_edge(std::string_view type_spec, std::string_view src_id,
                std::string_view dst_id);

  // values are raw strings; each slot keeps its own value vocabulary.
  void add_side_info(std::string_view node_type, std::string_view node_id,
                     std::uint32_t slot, std::span<const std::string> values);

  HetGraph build();

  // Slot-value vocabularies accumulated during ingestion; valid after build.
  std::uint32_t slot_value_count(std::uint32_t slot) const;

 private:
  std::uint32_t intern_type(const std::string& name);
  std::uint64_t intern_node(std::uint32_t type, std::string_view id);

  HetGraph g_;
  struct PendingEdge {
    std::uint32_t rel;
    std::uint64_t src;
    std::uint64_t dst;
  };
  std::vector<PendingEdge> edges_;
  std::unordered_map<std::uint32_t, std::unordered_map<std::string, std::uint32_t>>
      slot_vocab_;
  bool built_ = false;
};

// --- text file loaders -----------------------------------------------------
// Edge file: edge_type<TAB>src_id<TAB>dst_id[<TAB>timestamp]; '#' comments.
std::vector<EdgeInput> load_edge_file(const std::string& path);
// Side-info file: node_type<TAB>node_id<TAB>slot:value[,value...] ...
void load_side_info_file(const std::string& path, HetGraphBuilder& builder);
// Interaction log: user_id<TAB>item_id<TAB>behavior<TAB>timestamp.
InteractionLog load_interaction_file(const std::string& path);

}  // namespace recgraph
