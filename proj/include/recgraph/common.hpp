#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace recgraph {

// Global parameter keys are 64-bit and partitioned into three regions by the
// top two bits:
//
//   00 | type ordinal (14 bits) | node index (48 bits)     node ID embeddings
//   10 | slot id      (22 bits) | value index (40 bits)    side-info slot values
//   01 | rel (12) | layer (4) | kind (4) | row (42)        dense model parameters
//
// Node type ordinals are therefore limited to 2^14 and node vocabularies to
// 2^48 entries per type, which routing (key mod num_shards) never needs to
// know about.
using NodeKey = std::uint64_t;

constexpr NodeKey kSlotRegion = NodeKey{1} << 63;
constexpr NodeKey kDenseRegion = NodeKey{1} << 62;

constexpr NodeKey node_key(std::uint32_t type_ordinal, std::uint64_t index) {
  return (NodeKey{type_ordinal} << 48) | index;
}

constexpr std::uint32_t node_key_type(NodeKey k) {
  return static_cast<std::uint32_t>(k >> 48);
}

constexpr std::uint64_t node_key_index(NodeKey k) {
  return k & ((NodeKey{1} << 48) - 1);
}

constexpr NodeKey slot_value_key(std::uint32_t slot, std::uint64_t value_index) {
  return kSlotRegion | (NodeKey{slot} << 40) | value_index;
}

// Matrix kinds inside the dense-parameter key region.
enum class DenseKind : std::uint8_t {
  SageSelf = 0,
  SageNeigh = 1,
  SageBias = 2,
  AttnW = 3,
  Attnw = 4,
};

constexpr NodeKey dense_param_key(std::uint32_t relation, std::uint32_t layer,
                                  DenseKind kind, std::uint64_t row) {
  return kDenseRegion | (NodeKey{relation & 0xfffu} << 50) |
         (NodeKey{layer & 0xfu} << 46) |
         (NodeKey{static_cast<std::uint8_t>(kind) & 0xfu} << 42) | row;
}

constexpr bool is_dense_key(NodeKey k) {
  return (k & (kSlotRegion | kDenseRegion)) == kDenseRegion;
}

struct DenseKeyParts {
  std::uint32_t relation;
  std::uint32_t layer;
  DenseKind kind;
  std::uint64_t row;
};

constexpr DenseKeyParts dense_key_parts(NodeKey k) {
  return DenseKeyParts{
      static_cast<std::uint32_t>((k >> 50) & 0xfffu),
      static_cast<std::uint32_t>((k >> 46) & 0xfu),
      static_cast<DenseKind>((k >> 42) & 0xfu),
      k & ((NodeKey{1} << 42) - 1),
  };
}

// Error categories surfaced by the CLI as machine-parseable one-liners.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace recgraph
