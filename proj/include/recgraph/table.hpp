#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "recgraph/common.hpp"
#include "recgraph/rng.hpp"

namespace recgraph {

enum class SparseOpt {
  Sgd,   // v <- v - lr * g
  Adam,  // per-key first/second moment state
};

struct TableConfig {
  std::uint32_t dim = 64;
  std::uint64_t init_seed = 1;
  SparseOpt opt = SparseOpt::Sgd;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
};

// Abstract pull/push surface shared by local tables, shard routers and
// remote clients.
class ParamStore {
 public:
  virtual ~ParamStore() = default;
  virtual std::uint32_t dim() const = 0;
  // Vectors positionally aligned with keys, flattened n * dim. Unseen keys
  // are lazily initialized first.
  virtual void pull(std::span<const std::uint64_t> keys,
                    std::vector<float>& out) = 0;
  virtual void push(std::span<const std::uint64_t> keys,
                    std::span<const float> grads, float lr) = 0;
  // Checkpoint all entries to / from one file. Returns the record count.
  virtual std::uint64_t save(const std::string& path) = 0;
  virtual std::uint64_t load(const std::string& path) = 0;

  std::vector<float> pull(std::span<const std::uint64_t> keys) {
    std::vector<float> out;
    pull(keys, out);
    return out;
  }
};

// One shard: key -> dense f32 vector with deterministic lazy initialization.
// A key, once initialized, never re-initializes; the init vector is a pure
// function of (init_seed, key) so it is independent of arrival order and
// shard count. Thread safe; mutations are serialized per shard, which gives
// per-key atomicity.
class EmbeddingTable final : public ParamStore {
 public:
  explicit EmbeddingTable(TableConfig cfg);

  std::uint32_t dim() const override { return cfg_.dim; }
  using ParamStore::pull;
  void pull(std::span<const std::uint64_t> keys,
            std::vector<float>& out) override;
  void push(std::span<const std::uint64_t> keys, std::span<const float> grads,
            float lr) override;
  std::uint64_t save(const std::string& path) override;
  std::uint64_t load(const std::string& path) override;

  // Overwrites entries with exact values (checkpoint restore path).
  void assign(std::span<const std::uint64_t> keys, std::span<const float> values);

  std::uint64_t size() const;
  // Sorted (key, vector) snapshot of every entry.
  std::vector<std::pair<std::uint64_t, std::vector<float>>> entries() const;

  // The documented lazy initializer: coordinate i of key k is
  // uniform(-1/sqrt(dim), +1/sqrt(dim)) drawn from an Rng seeded with
  // hash_mix({init_seed, key}).
  static void init_vector(std::uint64_t init_seed, std::uint64_t key,
                          std::uint32_t dim, float* out);

 private:
  float* slot(std::uint64_t key);  // caller holds mu_

  TableConfig cfg_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, std::uint64_t> index_;
  std::vector<float> values_;      // index * dim
  std::vector<float> adam_m_;      // Adam only
  std::vector<float> adam_v_;
  std::vector<std::uint64_t> adam_t_;
};

// Routes keys across shards: shard(key) = key mod num_shards.
class ShardedStore final : public ParamStore {
 public:
  explicit ShardedStore(std::vector<std::shared_ptr<ParamStore>> shards);

  std::uint32_t dim() const override { return shards_[0]->dim(); }
  std::uint32_t num_shards() const {
    return static_cast<std::uint32_t>(shards_.size());
  }
  ParamStore& shard(std::size_t i) { return *shards_[i]; }

  using ParamStore::pull;
  void pull(std::span<const std::uint64_t> keys,
            std::vector<float>& out) override;
  void push(std::span<const std::uint64_t> keys, std::span<const float> grads,
            float lr) override;
  // Merged single-file checkpoint; requires every shard to be a local
  // EmbeddingTable. Remote deployments checkpoint shard-side via the SAVE
  // and LOAD opcodes instead.
  std::uint64_t save(const std::string& path) override;
  std::uint64_t load(const std::string& path) override;
  // Sorted entries across all (local) shards.
  std::vector<std::pair<std::uint64_t, std::vector<float>>> collect_entries();
  bool all_local() const;

 private:
  std::vector<std::shared_ptr<ParamStore>> shards_;
};

// --- checkpoint file codec ---------------------------------------------
// magic "G4RCKPT\0", version u32, dim u32, count u64, then count records of
// (key u64, dim x f32), all little-endian.
void write_checkpoint(
    const std::string& path, std::uint32_t dim,
    const std::vector<std::pair<std::uint64_t, std::vector<float>>>& entries);
std::vector<std::pair<std::uint64_t, std::vector<float>>> read_checkpoint(
    const std::string& path, std::uint32_t expect_dim);
std::uint32_t checkpoint_dim(const std::string& path);

}  // namespace recgraph
