#include "recgraph/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "recgraph/wire.hpp"

namespace recgraph {

EmbeddingTable::EmbeddingTable(TableConfig cfg) : cfg_(cfg) {
  if (cfg_.dim == 0) throw ConfigError("embedding dim must be positive");
}

void EmbeddingTable::init_vector(std::uint64_t init_seed, std::uint64_t key,
                                 std::uint32_t dim, float* out) {
  Rng rng(hash_mix({init_seed, key}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::uint32_t i = 0; i < dim; ++i) {
    out[i] = static_cast<float>((rng.uniform() * 2.0 - 1.0) * bound);
  }
}

float* EmbeddingTable::slot(std::uint64_t key) {
  auto [it, inserted] = index_.try_emplace(key, index_.size());
  if (inserted) {
    values_.resize(values_.size() + cfg_.dim);
    if (cfg_.opt == SparseOpt::Adam) {
      adam_m_.resize(values_.size());
      adam_v_.resize(values_.size());
      adam_t_.push_back(0);
    }
    init_vector(cfg_.init_seed, key, cfg_.dim, &values_[it->second * cfg_.dim]);
  }
  return &values_[it->second * cfg_.dim];
}

void EmbeddingTable::pull(std::span<const std::uint64_t> keys,
                          std::vector<float>& out) {
  out.resize(keys.size() * cfg_.dim);
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::memcpy(&out[i * cfg_.dim], slot(keys[i]), cfg_.dim * sizeof(float));
  }
}

void EmbeddingTable::push(std::span<const std::uint64_t> keys,
                          std::span<const float> grads, float lr) {
  if (grads.size() != keys.size() * std::size_t{cfg_.dim}) {
    throw DataError("push rejected: gradient size does not match keys * dim");
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    float* v = slot(keys[i]);
    const float* g = &grads[i * cfg_.dim];
    if (cfg_.opt == SparseOpt::Sgd) {
      for (std::uint32_t d = 0; d < cfg_.dim; ++d) v[d] -= lr * g[d];
    } else {
      const std::uint64_t row = index_.at(keys[i]);
      float* m = &adam_m_[row * cfg_.dim];
      float* s = &adam_v_[row * cfg_.dim];
      const auto t = static_cast<float>(++adam_t_[row]);
      const float b1 = cfg_.adam_beta1;
      const float b2 = cfg_.adam_beta2;
      const float corr1 = 1.0f - std::pow(b1, t);
      const float corr2 = 1.0f - std::pow(b2, t);
      for (std::uint32_t d = 0; d < cfg_.dim; ++d) {
        m[d] = b1 * m[d] + (1.0f - b1) * g[d];
        s[d] = b2 * s[d] + (1.0f - b2) * g[d] * g[d];
        const float mhat = m[d] / corr1;
        const float shat = s[d] / corr2;
        v[d] -= lr * mhat / (std::sqrt(shat) + cfg_.adam_eps);
      }
    }
  }
}

void EmbeddingTable::assign(std::span<const std::uint64_t> keys,
                            std::span<const float> values) {
  if (values.size() != keys.size() * std::size_t{cfg_.dim}) {
    throw DataError("assign rejected: value size does not match keys * dim");
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::memcpy(slot(keys[i]), &values[i * cfg_.dim], cfg_.dim * sizeof(float));
  }
}

std::uint64_t EmbeddingTable::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

std::vector<std::pair<std::uint64_t, std::vector<float>>>
EmbeddingTable::entries() const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::uint64_t, std::vector<float>>> out;
  out.reserve(index_.size());
  for (const auto& [key, row] : index_) {
    out.emplace_back(key,
                     std::vector<float>(values_.begin() + row * cfg_.dim,
                                        values_.begin() + (row + 1) * cfg_.dim));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::uint64_t EmbeddingTable::save(const std::string& path) {
  auto snapshot = entries();
  write_checkpoint(path, cfg_.dim, snapshot);
  return snapshot.size();
}

std::uint64_t EmbeddingTable::load(const std::string& path) {
  const auto records = read_checkpoint(path, cfg_.dim);
  for (const auto& [key, vec] : records) {
    assign(std::span(&key, 1), vec);
  }
  return records.size();
}

ShardedStore::ShardedStore(std::vector<std::shared_ptr<ParamStore>> shards)
    : shards_(std::move(shards)) {
  if (shards_.empty()) throw ConfigError("ShardedStore needs at least one shard");
  for (const auto& s : shards_) {
    if (s->dim() != shards_[0]->dim()) {
      throw ConfigError("all shards must share one embedding dim");
    }
  }
}

void ShardedStore::pull(std::span<const std::uint64_t> keys,
                        std::vector<float>& out) {
  const std::uint32_t d = dim();
  out.resize(keys.size() * d);
  const std::size_t n = shards_.size();
  std::vector<std::vector<std::uint64_t>> shard_keys(n);
  std::vector<std::vector<std::size_t>> shard_slots(n);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::size_t s = keys[i] % n;
    shard_keys[s].push_back(keys[i]);
    shard_slots[s].push_back(i);
  }
  std::vector<float> buf;
  for (std::size_t s = 0; s < n; ++s) {
    if (shard_keys[s].empty()) continue;
    shards_[s]->pull(shard_keys[s], buf);
    for (std::size_t i = 0; i < shard_slots[s].size(); ++i) {
      std::memcpy(&out[shard_slots[s][i] * d], &buf[i * d], d * sizeof(float));
    }
  }
}

void ShardedStore::push(std::span<const std::uint64_t> keys,
                        std::span<const float> grads, float lr) {
  const std::uint32_t d = dim();
  if (grads.size() != keys.size() * std::size_t{d}) {
    throw DataError("push rejected: gradient size does not match keys * dim");
  }
  const std::size_t n = shards_.size();
  std::vector<std::vector<std::uint64_t>> shard_keys(n);
  std::vector<std::vector<float>> shard_grads(n);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::size_t s = keys[i] % n;
    shard_keys[s].push_back(keys[i]);
    shard_grads[s].insert(shard_grads[s].end(), grads.begin() + i * d,
                          grads.begin() + (i + 1) * d);
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!shard_keys[s].empty()) shards_[s]->push(shard_keys[s], shard_grads[s], lr);
  }
}

std::vector<std::pair<std::uint64_t, std::vector<float>>>
ShardedStore::collect_entries() {
  std::vector<std::pair<std::uint64_t, std::vector<float>>> all;
  for (const auto& s : shards_) {
    auto* table = dynamic_cast<EmbeddingTable*>(s.get());
    if (!table) {
      throw TransportError(
          "merged checkpoint requires local shards; use the SAVE opcode for "
          "remote shards");
    }
    auto part = table->entries();
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return all;
}

bool ShardedStore::all_local() const {
  for (const auto& s : shards_) {
    if (!dynamic_cast<EmbeddingTable*>(s.get())) return false;
  }
  return true;
}

std::uint64_t ShardedStore::save(const std::string& path) {
  if (all_local()) {
    auto all = collect_entries();
    write_checkpoint(path, dim(), all);
    return all.size();
  }
  // Remote shards checkpoint server-side, one file per shard.
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    total += shards_[s]->save(path + ".shard" + std::to_string(s));
  }
  return total;
}

std::uint64_t ShardedStore::load(const std::string& path) {
  if (all_local()) {
    const auto records = read_checkpoint(path, dim());
    for (const auto& [key, vec] : records) {
      auto* table =
          dynamic_cast<EmbeddingTable*>(shards_[key % shards_.size()].get());
      table->assign(std::span(&key, 1), vec);
    }
    return records.size();
  }
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    total += shards_[s]->load(path + ".shard" + std::to_string(s));
  }
  return total;
}

namespace {
constexpr char kCkptMagic[8] = {'G', '4', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void write_checkpoint(
    const std::string& path, std::uint32_t dim,
    const std::vector<std::pair<std::uint64_t, std::vector<float>>>& entries) {
  std::vector<std::uint8_t> buf;
  buf.reserve(24 + entries.size() * (8 + std::size_t{dim} * 4));
  wire::Writer w(buf);
  w.bytes(kCkptMagic, 8);
  w.u32(kCkptVersion);
  w.u32(dim);
  w.u64(entries.size());
  for (const auto& [key, vec] : entries) {
    if (vec.size() != dim) throw DataError("checkpoint entry dim mismatch");
    w.u64(key);
    for (float v : vec) w.f32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint \"" + path + "\"");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to checkpoint \"" + path + "\"");
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open checkpoint \"" + path + "\"");
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("cannot read checkpoint \"" + path + "\"");
  return buf;
}

std::uint32_t read_header(wire::Reader& r, const std::string& path) {
  char magic[8];
  const std::string m = r.str(8);
  std::memcpy(magic, m.data(), 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw ParseError("\"" + path + "\" is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion) {
    throw ParseError("checkpoint \"" + path + "\" has unsupported version " +
                     std::to_string(version));
  }
  return r.u32();
}

}  // namespace

std::uint32_t checkpoint_dim(const std::string& path) {
  const auto buf = read_file(path);
  wire::Reader r(buf.data(), buf.size());
  return read_header(r, path);
}

std::vector<std::pair<std::uint64_t, std::vector<float>>> read_checkpoint(
    const std::string& path, std::uint32_t expect_dim) {
  const auto buf = read_file(path);
  wire::Reader r(buf.data(), buf.size());
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  try {
    dim = read_header(r, path);
    count = r.u64();
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()));
  }
  if (dim != expect_dim) {
    throw DataError("checkpoint \"" + path + "\" has dim " +
                    std::to_string(dim) + ", expected " +
                    std::to_string(expect_dim));
  }
  std::vector<std::pair<std::uint64_t, std::vector<float>>> out;
  out.reserve(count);
  try {
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t key = r.u64();
      std::vector<float> vec(dim);
      for (std::uint32_t d = 0; d < dim; ++d) vec[d] = r.f32();
      out.emplace_back(key, std::move(vec));
    }
    r.expect_end();
  } catch (const ParseError&) {
    throw ParseError("checkpoint \"" + path + "\" is truncated or corrupt");
  }
  return out;
}

}  // namespace recgraph
