#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <unordered_map>
#include <vector>

#include "recgraph/loss.hpp"
#include "recgraph/model.hpp"
#include "recgraph/pipeline.hpp"
#include "recgraph/table.hpp"

namespace recgraph {

enum class NegMode { Random, InBatch };
enum class NegDist { Uniform, Degree075 };

struct TrainConfig {
  NegMode neg_mode = NegMode::InBatch;
  std::uint32_t neg_num = 5;
  NegDist neg_dist = NegDist::Uniform;
  std::uint64_t pair_budget = 1000000;
  float sparse_lr = 0.1f;
  double dense_lr = 1e-3;
  double dense_beta1 = 0.9;
  double dense_beta2 = 0.999;
  double dense_eps = 1e-8;
  std::uint64_t seed = 1;
  std::uint32_t log_every = 100;  // batches between metrics lines
  // Cooperative shutdown: workers stop at the next batch boundary.
  const std::atomic<bool>* stop = nullptr;
};

struct TrainMetrics {
  std::uint64_t pairs_done = 0;
  std::uint64_t batches = 0;
  double mean_loss = 0.0;
  double pairs_per_sec = 0.0;
  // Pull accounting in pre-deduplication key slots.
  std::uint64_t pull_key_slots = 0;
  std::uint64_t negative_key_slots = 0;
  std::uint64_t pulled_keys = 0;  // after dedup
};

// Draws negatives from nodes of the context node's type, never the positive
// context itself.
class NegativeSampler {
 public:
  NegativeSampler(const HetGraph& g, NegDist dist) : g_(g), dist_(dist) {
    if (dist == NegDist::Degree075) build_tables();
  }

  NodeKey sample(NodeKey positive, Rng& rng) const {
    const std::uint32_t type = node_key_type(positive);
    const std::uint64_t n = g_.num_nodes(type);
    if (n < 2) {
      throw DataError("cannot sample a negative: node type \"" +
                      g_.type_name(type) + "\" has fewer than 2 nodes");
    }
    const std::uint64_t pos_idx = node_key_index(positive);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::uint64_t idx = dist_ == NegDist::Uniform
                                    ? rng.below(n)
                                    : weighted_index(type, rng);
      if (idx != pos_idx) return node_key(type, idx);
    }
    // Degenerate weight mass on the positive; take its index neighbor.
    return node_key(type, (pos_idx + 1) % n);
  }

 private:
  void build_tables() {
    cum_.resize(g_.num_types());
    for (std::uint32_t t = 0; t < g_.num_types(); ++t) {
      const std::uint64_t n = g_.num_nodes(t);
      auto& cum = cum_[t];
      cum.resize(n);
      double total = 0.0;
      for (std::uint64_t v = 0; v < n; ++v) {
        double deg = 0.0;
        for (std::uint32_t r = 0; r < g_.num_relations(); ++r) {
          if (g_.src_type_of(r) == t) deg += static_cast<double>(g_.degree(r, v));
        }
        total += std::pow(deg, 0.75);
        cum[v] = total;
      }
    }
  }

  std::uint64_t weighted_index(std::uint32_t type, Rng& rng) const {
    const auto& cum = cum_[type];
    if (cum.empty() || cum.back() <= 0.0) return rng.below(cum.size());
    const double x = rng.uniform() * cum.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), x);
    return std::min<std::uint64_t>(static_cast<std::uint64_t>(it - cum.begin()),
                                   cum.size() - 1);
  }

  const HetGraph& g_;
  NegDist dist_;
  std::vector<std::vector<double>> cum_;
};

// Adam over the dense parameter set; sparse parameters live in the store.
template <class S>
class DenseAdam {
 public:
  DenseAdam(const ModelConfig& cfg, const TrainConfig& tcfg)
      : cfg_(tcfg),
        m_(DenseParams<S>::shaped(cfg)),
        v_(DenseParams<S>::shaped(cfg)) {}

  void step(DenseParams<S>& params, DenseParams<S>& grads) {
    ++t_;
    const S corr1 = S(1) - static_cast<S>(std::pow(cfg_.dense_beta1, t_));
    const S corr2 = S(1) - static_cast<S>(std::pow(cfg_.dense_beta2, t_));
    const S b1 = static_cast<S>(cfg_.dense_beta1);
    const S b2 = static_cast<S>(cfg_.dense_beta2);
    const S lr = static_cast<S>(cfg_.dense_lr);
    const S eps = static_cast<S>(cfg_.dense_eps);
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (S(1) - b1) * g;
      v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
      p -= (lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps))
               .matrix();
    };
    for (std::size_t r = 0; r < params.sage.size(); ++r) {
      for (std::size_t k = 0; k < params.sage[r].size(); ++k) {
        update(params.sage[r][k].w_self, grads.sage[r][k].w_self,
               m_.sage[r][k].w_self, v_.sage[r][k].w_self);
        update(params.sage[r][k].w_neigh, grads.sage[r][k].w_neigh,
               m_.sage[r][k].w_neigh, v_.sage[r][k].w_neigh);
        update(params.sage[r][k].bias, grads.sage[r][k].bias,
               m_.sage[r][k].bias, v_.sage[r][k].bias);
      }
    }
    for (std::size_t k = 0; k < params.attn.size(); ++k) {
      update(params.attn[k].w, grads.attn[k].w, m_.attn[k].w, v_.attn[k].w);
      update(params.attn[k].v, grads.attn[k].v, m_.attn[k].v, v_.attn[k].v);
    }
  }

 private:
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
  DenseParams<S> m_;
  DenseParams<S> v_;
};

// Drives pull -> forward -> loss -> backward -> push over batch streams.
// With one stream execution is strictly serial and bit-reproducible for a
// fixed seed; with several, workers share the store under per-key-atomic
// push semantics and snapshot the dense parameters per batch.
template <class S>
class Trainer {
 public:
  Trainer(const HetGraph& g, ParamStore& store, const ModelConfig& mcfg,
          DenseParams<S>& dense, const TrainConfig& tcfg)
      : g_(g),
        store_(store),
        mcfg_(mcfg),
        dense_(dense),
        tcfg_(tcfg),
        sampler_(g, tcfg.neg_dist) {
    if (tcfg_.neg_num < 1) throw ConfigError("neg_num must be >= 1");
    if (mcfg_.is_gnn()) adam_.emplace(mcfg, tcfg);
  }

  TrainMetrics run(PairBatchStream& stream,
                   std::ostream* metrics_log = nullptr) {
    std::vector<PairBatchStream*> streams{&stream};
    return run(streams, metrics_log);
  }

  TrainMetrics run(std::vector<PairBatchStream*>& streams,
                   std::ostream* metrics_log = nullptr) {
    TrainMetrics total;
    remaining_.store(tcfg_.pair_budget);
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    if (streams.size() == 1) {
      Worker w(*this, *streams[0], metrics_log, start);
      w.loop();
      total = w.metrics;
      loss_sum = w.loss_sum;
    } else {
      std::vector<std::unique_ptr<Worker>> workers;
      std::vector<std::thread> threads;
      for (auto* s : streams) {
        workers.push_back(std::make_unique<Worker>(*this, *s, nullptr, start));
      }
      for (auto& w : workers) {
        threads.emplace_back([&w] { w->loop(); });
      }
      for (auto& t : threads) t.join();
      for (auto& w : workers) {
        total.pairs_done += w->metrics.pairs_done;
        total.batches += w->metrics.batches;
        total.pull_key_slots += w->metrics.pull_key_slots;
        total.negative_key_slots += w->metrics.negative_key_slots;
        total.pulled_keys += w->metrics.pulled_keys;
        loss_sum += w->loss_sum;
      }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    total.mean_loss =
        total.batches ? loss_sum / static_cast<double>(total.batches) : 0.0;
    total.pairs_per_sec =
        elapsed > 0.0 ? static_cast<double>(total.pairs_done) / elapsed : 0.0;
    if (metrics_log) {
      *metrics_log << total.batches << '\t' << total.pairs_done << '\t'
                   << total.mean_loss << '\t' << total.pairs_per_sec << '\n';
    }
    return total;
  }

 private:
  struct BatchResult {
    double loss = 0.0;
    std::uint64_t pull_slots = 0;
    std::uint64_t neg_slots = 0;
    std::uint64_t pulled_keys = 0;
  };

  struct Worker {
    Worker(Trainer& t, PairBatchStream& s, std::ostream* log,
           std::chrono::steady_clock::time_point start)
        : trainer(t), stream(s), metrics_log(log), start_time(start) {}

    void loop() {
      std::uint64_t batch_index = trainer.next_worker_base_.fetch_add(1)
                                  << 40;
      while (true) {
        if (trainer.tcfg_.stop && trainer.tcfg_.stop->load()) return;
        // Reserve one batch worth of budget up front so the tail is exact.
        std::uint64_t take = 0;
        while (true) {
          std::uint64_t rem = trainer.remaining_.load();
          if (rem == 0) return;
          take = std::min<std::uint64_t>(rem, stream.batch_size());
          if (trainer.remaining_.compare_exchange_weak(rem, rem - take)) break;
        }
        auto batch = stream.next();
        if (!batch) {
          trainer.remaining_.fetch_add(take);
          return;
        }
        if (batch->size() > take) batch->resize(take);
        trainer.remaining_.fetch_add(take - batch->size());
        if (batch->empty()) return;
        if (trainer.tcfg_.neg_mode == NegMode::InBatch && batch->size() < 2) {
          return;  // an in-batch tail of one pair has no negatives to draw
        }
        const BatchResult res = trainer.process_batch(*batch, batch_index++);
        metrics.pairs_done += batch->size();
        metrics.batches += 1;
        metrics.pull_key_slots += res.pull_slots;
        metrics.negative_key_slots += res.neg_slots;
        metrics.pulled_keys += res.pulled_keys;
        loss_sum += res.loss;
        if (metrics_log && trainer.tcfg_.log_every > 0 &&
            metrics.batches % trainer.tcfg_.log_every == 0) {
          const double secs = std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - start_time)
                                  .count();
          *metrics_log << metrics.batches << '\t' << metrics.pairs_done << '\t'
                       << res.loss << '\t'
                       << (secs > 0 ? metrics.pairs_done / secs : 0.0) << '\n';
        }
      }
    }

    Trainer& trainer;
    PairBatchStream& stream;
    std::ostream* metrics_log;
    std::chrono::steady_clock::time_point start_time;
    TrainMetrics metrics;
    double loss_sum = 0.0;
  };

  BatchResult process_batch(std::vector<TrainPair>& batch,
                            std::uint64_t batch_index) {
    const auto d = static_cast<Eigen::Index>(mcfg_.dim);
    const auto B = static_cast<std::uint32_t>(batch.size());
    const std::uint32_t M = tcfg_.neg_num;
    const bool gnn = mcfg_.is_gnn();
    BatchResult res;

    // Distinct forward entities: shared ego graphs are computed once per
    // batch, bare nodes once per key.
    struct Entity {
      const EgoGraph* ego = nullptr;
      NodeKey node = 0;
    };
    std::vector<Entity> entities;
    std::unordered_map<const void*, std::uint32_t> ego_entity;
    std::unordered_map<NodeKey, std::uint32_t> node_entity;
    std::vector<std::uint32_t> row_center(B), row_context(B);
    auto entity_of = [&](const TrainPair& tp, bool center) {
      if (gnn) {
        const auto& ego = center ? tp.center_ego : tp.context_ego;
        if (!ego) throw DataError("GNN training needs ego graphs in pairs");
        auto [it, ins] = ego_entity.try_emplace(
            ego.get(), static_cast<std::uint32_t>(entities.size()));
        if (ins) entities.push_back({ego.get(), center ? tp.center : tp.context});
        return it->second;
      }
      const NodeKey nk = center ? tp.center : tp.context;
      auto [it, ins] =
          node_entity.try_emplace(nk, static_cast<std::uint32_t>(entities.size()));
      if (ins) entities.push_back({nullptr, nk});
      return it->second;
    };
    for (std::uint32_t b = 0; b < B; ++b) {
      row_center[b] = entity_of(batch[b], true);
      row_context[b] = entity_of(batch[b], false);
    }

    // Key interning: every key occurrence counts one pre-dedup pull slot.
    std::vector<std::uint64_t> keys;
    std::unordered_map<std::uint64_t, std::uint32_t> slot_of;
    auto intern = [&](std::uint64_t key) {
      ++res.pull_slots;
      auto [it, ins] =
          slot_of.try_emplace(key, static_cast<std::uint32_t>(keys.size()));
      if (ins) keys.push_back(key);
      return it->second;
    };
    auto intern_spec = [&](const NodeFeatureSpec& spec) {
      intern(spec.id_key);
      for (const auto& [slot, vkeys] : spec.slots) {
        for (auto k : vkeys) intern(k);
      }
    };

    std::vector<std::vector<NodeFeatureSpec>> ent_specs(entities.size());
    for (std::size_t e = 0; e < entities.size(); ++e) {
      if (gnn) {
        const EgoGraph& ego = *entities[e].ego;
        ent_specs[e].reserve(ego.nodes.size());
        for (const NodeKey nk : ego.nodes) {
          ent_specs[e].push_back(feature_spec(g_, nk, mcfg_.use_side_info));
          intern_spec(ent_specs[e].back());
        }
      } else {
        ent_specs[e].push_back(
            feature_spec(g_, entities[e].node, mcfg_.use_side_info));
        intern_spec(ent_specs[e].back());
      }
    }

    // Random-mode negatives pull their own base-embedding keys; in-batch
    // mode reuses context outputs and pulls nothing extra.
    std::vector<NodeFeatureSpec> neg_specs;
    if (tcfg_.neg_mode == NegMode::Random) {
      Rng neg_rng(hash_mix({tcfg_.seed, 0x6e6567ull, batch_index}));
      neg_specs.reserve(std::size_t{B} * M);
      const std::uint64_t before = res.pull_slots;
      for (std::uint32_t b = 0; b < B; ++b) {
        for (std::uint32_t m = 0; m < M; ++m) {
          const NodeKey nk = sampler_.sample(batch[b].context, neg_rng);
          neg_specs.push_back(feature_spec(g_, nk, mcfg_.use_side_info));
          intern_spec(neg_specs.back());
        }
      }
      res.neg_slots = res.pull_slots - before;
    }
    res.pulled_keys = keys.size();

    // Pull once, deduplicated, positionally aligned.
    std::vector<float> raw;
    store_.pull(keys, raw);
    MatX<S> pulled(d, static_cast<Eigen::Index>(keys.size()));
    for (std::size_t i = 0; i < keys.size(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        pulled(j, static_cast<Eigen::Index>(i)) =
            static_cast<S>(raw[i * mcfg_.dim + static_cast<std::size_t>(j)]);
      }
    }
    auto vec_of = [&](std::uint64_t key) { return pulled.col(slot_of.at(key)); };

    // Dense snapshot: forward and backward see one consistent version.
    DenseParams<S> dense_snap;
    if (gnn) {
      std::lock_guard lock(dense_mu_);
      dense_snap = dense_;
    }

    MatX<S> H(d, static_cast<Eigen::Index>(entities.size()));
    EgoWorkspace<S> ws;
    MatX<S> h0buf;
    auto build_h0 = [&](std::size_t e) {
      const auto& specs = ent_specs[e];
      h0buf.resize(d, static_cast<Eigen::Index>(specs.size()));
      for (std::size_t p = 0; p < specs.size(); ++p) {
        h0buf.col(static_cast<Eigen::Index>(p)) =
            base_embedding<S>(specs[p], vec_of);
      }
    };
    for (std::size_t e = 0; e < entities.size(); ++e) {
      if (gnn) {
        build_h0(e);
        H.col(static_cast<Eigen::Index>(e)) =
            forward_ego(*entities[e].ego, mcfg_, dense_snap, h0buf, ws);
      } else {
        H.col(static_cast<Eigen::Index>(e)) =
            base_embedding<S>(ent_specs[e][0], vec_of);
      }
    }

    MatX<S> hv(d, B), hu(d, B);
    for (std::uint32_t b = 0; b < B; ++b) {
      hv.col(b) = H.col(row_center[b]);
      hu.col(b) = H.col(row_context[b]);
    }

    // Gradients are in per-pair units: the batch objective is the sum of
    // pair losses, while the reported loss stays a per-pair mean.
    MatX<S> gv, gu;
    MatX<S> gneg;
    if (tcfg_.neg_mode == NegMode::InBatch) {
      Rng idx_rng(hash_mix({tcfg_.seed, 0x696e62ull, batch_index}));
      const auto idx = sample_inbatch_indices(B, M, idx_rng);
      auto r = loss_inbatch(hv, hu, idx, M);
      res.loss = static_cast<double>(r.loss);
      gv = static_cast<S>(B) * r.g_v;
      gu = static_cast<S>(B) * r.g_u;
    } else {
      gv = MatX<S>::Zero(d, B);
      gu = MatX<S>::Zero(d, B);
      gneg = MatX<S>::Zero(d, std::size_t{B} * M);
      MatX<S> negs(d, M);
      double loss = 0.0;
      for (std::uint32_t b = 0; b < B; ++b) {
        for (std::uint32_t m = 0; m < M; ++m) {
          negs.col(m) = base_embedding<S>(neg_specs[std::size_t{b} * M + m], vec_of);
        }
        auto r = loss_explicit<S>(hv.col(b), hu.col(b), negs);
        loss += static_cast<double>(r.loss);
        gv.col(b) = r.g_v;
        gu.col(b) = r.g_u;
        for (std::uint32_t m = 0; m < M; ++m) {
          gneg.col(std::size_t{b} * M + m) = r.g_neg.col(m);
        }
      }
      res.loss = loss / static_cast<double>(B);
    }

    // Output gradients accumulate over every role an entity plays.
    MatX<S> gent = MatX<S>::Zero(d, static_cast<Eigen::Index>(entities.size()));
    for (std::uint32_t b = 0; b < B; ++b) {
      gent.col(row_center[b]) += gv.col(b);
      gent.col(row_context[b]) += gu.col(b);
    }

    MatX<S> sgrad = MatX<S>::Zero(d, static_cast<Eigen::Index>(keys.size()));
    auto scatter = [&](const NodeFeatureSpec& spec, const auto& g) {
      scatter_base_gradient(spec, [&](std::uint64_t key, double coeff) {
        sgrad.col(slot_of.at(key)) += static_cast<S>(coeff) * g;
      });
    };

    DenseParams<S> gdense;
    if (gnn) gdense = DenseParams<S>::shaped(mcfg_);
    MatX<S> gh0;
    for (std::size_t e = 0; e < entities.size(); ++e) {
      if (gnn) {
        // Recompute the forward to rebuild intermediates; memory stays
        // bounded by one workspace regardless of batch size.
        build_h0(e);
        forward_ego(*entities[e].ego, mcfg_, dense_snap, h0buf, ws);
        gh0 = MatX<S>::Zero(d, h0buf.cols());
        backward_ego(*entities[e].ego, mcfg_, dense_snap, h0buf, ws,
                     VecX<S>(gent.col(static_cast<Eigen::Index>(e))), gh0,
                     gdense);
        for (std::size_t p = 0; p < ent_specs[e].size(); ++p) {
          scatter(ent_specs[e][p], gh0.col(static_cast<Eigen::Index>(p)));
        }
      } else {
        scatter(ent_specs[e][0], gent.col(static_cast<Eigen::Index>(e)));
      }
    }
    for (std::size_t i = 0; i < neg_specs.size(); ++i) {
      scatter(neg_specs[i], gneg.col(static_cast<Eigen::Index>(i)));
    }

    std::vector<float> flat(keys.size() * mcfg_.dim);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        flat[i * mcfg_.dim + static_cast<std::size_t>(j)] =
            static_cast<float>(sgrad(j, static_cast<Eigen::Index>(i)));
      }
    }
    store_.push(keys, flat, tcfg_.sparse_lr);

    if (gnn && adam_) {
      std::lock_guard lock(dense_mu_);
      adam_->step(dense_, gdense);
    }
    return res;
  }

  const HetGraph& g_;
  ParamStore& store_;
  const ModelConfig& mcfg_;
  DenseParams<S>& dense_;
  TrainConfig tcfg_;
  NegativeSampler sampler_;
  std::optional<DenseAdam<S>> adam_;
  std::mutex dense_mu_;
  std::atomic<std::uint64_t> remaining_{0};
  std::atomic<std::uint64_t> next_worker_base_{0};
};

// Loads every checkpoint entry into the store, overwriting lazy-init values.
inline std::uint64_t warm_start(ParamStore& store, const std::string& path) {
  return store.load(path);
}

}  // namespace recgraph
