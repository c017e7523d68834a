#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <deque>
#include <sstream>

#include "doctest.h"
#include "recgraph/trainer.hpp"
#include "recgraph/walk.hpp"
#include "testutil.hpp"

using namespace recgraph;

namespace {

std::vector<EdgeTypeTriple> schema_of(const HetGraph& g) {
  std::vector<EdgeTypeTriple> s;
  for (std::uint32_t r = 0; r < g.num_relations(); ++r) s.push_back(g.relation(r));
  return s;
}

PairBatchStream::WalkSource endless(const HetGraph& g, const WalkConfig& cfg,
                                    std::shared_ptr<EndlessWalkSource>& keep) {
  keep = std::make_shared<EndlessWalkSource>(g, cfg);
  auto src = keep;
  return [src] { return src->next(); };
}

struct Fixture {
  testutil::RandomGraph rg;
  WalkConfig wcfg;

  explicit Fixture(std::uint64_t seed = 5, std::uint32_t users = 6,
                   std::uint32_t items = 6, std::uint32_t clicks = 30) {
    rg = testutil::make_random_graph({seed, users, items, clicks, 0});
    wcfg.metapaths = {
        parse_metapath("u2click2i - i2click2u", schema_of(rg.graph))};
    wcfg.walk_len = 4;
    wcfg.walks_per_node = 4;
    wcfg.seed = seed;
  }
};

}  // namespace

TEST_CASE("zero pair budget changes nothing") {
  Fixture f;
  EmbeddingTable table(TableConfig{16, 9, SparseOpt::Sgd});
  std::vector<std::uint64_t> probe{node_key(0, 0), node_key(1, 0)};
  const auto before = table.pull(probe);

  ModelConfig mcfg;
  mcfg.kind = ModelKind::WalkOnly;
  mcfg.dim = 16;
  mcfg.num_relations = f.rg.graph.num_relations();
  DenseParams<float> dense;
  TrainConfig tcfg;
  tcfg.pair_budget = 0;
  tcfg.seed = 9;
  Trainer<float> trainer(f.rg.graph, table, mcfg, dense, tcfg);
  std::shared_ptr<EndlessWalkSource> keep;
  PipelineConfig pcfg;
  pcfg.skip_ego = true;
  pcfg.batch_size = 8;
  PairBatchStream stream(f.rg.graph, endless(f.rg.graph, f.wcfg, keep), pcfg);
  const auto metrics = trainer.run(stream);
  CHECK(metrics.pairs_done == 0);
  CHECK(table.pull(probe) == before);
}

TEST_CASE("walk-only training on a 2-node graph raises the positive score") {
  HetGraphBuilder b;
  b.add_schema_spec("u2click2i", true);
  b.add_edge("u2click2i", "u1", "i1");
  const HetGraph g = b.build();
  WalkConfig wcfg;
  wcfg.metapaths = {parse_metapath("u2click2i - i2click2u", schema_of(g))};
  wcfg.walk_len = 4;
  wcfg.walks_per_node = 2;
  wcfg.seed = 3;

  EmbeddingTable table(TableConfig{16, 3, SparseOpt::Sgd});
  const std::vector<std::uint64_t> keys{node_key(0, 0), node_key(1, 0)};
  const auto before = table.pull(keys);
  auto dot = [&](const std::vector<float>& v) {
    double s = 0;
    for (int i = 0; i < 16; ++i) s += double(v[i]) * v[16 + i];
    return s;
  };

  ModelConfig mcfg;
  mcfg.kind = ModelKind::WalkOnly;
  mcfg.dim = 16;
  mcfg.num_relations = g.num_relations();
  DenseParams<float> dense;
  TrainConfig tcfg;
  tcfg.pair_budget = 1000;
  tcfg.sparse_lr = 0.1f;
  tcfg.seed = 3;
  // Only two nodes exist, so random negatives would degenerate; the other
  // row's context serves as the negative instead.
  tcfg.neg_mode = NegMode::InBatch;
  tcfg.neg_num = 1;
  Trainer<float> trainer(g, table, mcfg, dense, tcfg);
  std::shared_ptr<EndlessWalkSource> keep;
  PipelineConfig pcfg;
  pcfg.skip_ego = true;
  pcfg.batch_size = 10;
  PairBatchStream stream(g, endless(g, wcfg, keep), pcfg);
  const auto metrics = trainer.run(stream);
  CHECK(metrics.pairs_done == 1000);
  const auto after = table.pull(keys);
  CHECK(dot(after) > dot(before));
}

TEST_CASE("serial runs with one seed write bit-identical checkpoints") {
  const std::string path_a = "/tmp/recgraph_serial_a.ckpt";
  const std::string path_b = "/tmp/recgraph_serial_b.ckpt";
  auto run_once = [&](const std::string& path) {
    Fixture f(21);
    EmbeddingTable table(TableConfig{8, 21, SparseOpt::Sgd});
    ModelConfig mcfg;
    mcfg.kind = ModelKind::LightGcn;
    mcfg.layers = 1;
    mcfg.dim = 8;
    mcfg.alpha = 0.5;
    mcfg.num_relations = f.rg.graph.num_relations();
    DenseParams<float> dense = DenseParams<float>::glorot(mcfg, 21);
    TrainConfig tcfg;
    tcfg.pair_budget = 500;
    tcfg.seed = 21;
    tcfg.neg_mode = NegMode::Random;
    tcfg.neg_num = 2;
    Trainer<float> trainer(f.rg.graph, table, mcfg, dense, tcfg);
    std::shared_ptr<EndlessWalkSource> keep;
    PipelineConfig pcfg;
    pcfg.fanouts = {2};
    pcfg.batch_size = 32;
    pcfg.seed = 21;
    PairBatchStream stream(f.rg.graph, endless(f.rg.graph, f.wcfg, keep), pcfg);
    trainer.run(stream);
    table.save(path);
  };
  run_once(path_a);
  run_once(path_b);
  std::ifstream a(path_a, std::ios::binary), b(path_b, std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().size() > 16);
  std::remove(path_a.c_str());
  std::remove(path_b.c_str());
}

namespace {

// ParamStore wrapper recording every pull and push verbatim.
struct RecordingStore final : ParamStore {
  explicit RecordingStore(EmbeddingTable& t) : table(t) {}
  std::uint32_t dim() const override { return table.dim(); }
  using ParamStore::pull;
  void pull(std::span<const std::uint64_t> keys,
            std::vector<float>& out) override {
    table.pull(keys, out);
    pulled_keys.emplace_back(keys.begin(), keys.end());
    pulled_values.push_back(out);
  }
  void push(std::span<const std::uint64_t> keys, std::span<const float> grads,
            float lr) override {
    pushed_keys.emplace_back(keys.begin(), keys.end());
    pushed_grads.emplace_back(grads.begin(), grads.end());
    pushed_lr.push_back(lr);
    table.push(keys, grads, lr);
  }
  std::uint64_t save(const std::string& path) override { return table.save(path); }
  std::uint64_t load(const std::string& path) override { return table.load(path); }

  EmbeddingTable& table;
  std::vector<std::vector<std::uint64_t>> pulled_keys, pushed_keys;
  std::vector<std::vector<float>> pulled_values, pushed_grads;
  std::vector<float> pushed_lr;
};

}  // namespace

TEST_CASE("pushed gradients equal the per-occurrence sums") {
  // One in-batch WalkOnly batch over a path with a repeated node; the pushed
  // gradient of each key must equal the sum over every (center, context)
  // occurrence of that key, re-derived here from the recorded pulls.
  HetGraphBuilder b;
  b.add_schema_spec("u2click2i", true);
  b.add_edge("u2click2i", "u0", "i0");
  b.add_edge("u2click2i", "u1", "i0");
  const HetGraph g = b.build();
  const std::uint32_t dim = 4;
  EmbeddingTable table(TableConfig{dim, 13, SparseOpt::Sgd});
  RecordingStore store(table);

  ModelConfig mcfg;
  mcfg.kind = ModelKind::WalkOnly;
  mcfg.dim = dim;
  mcfg.num_relations = g.num_relations();
  DenseParams<float> dense;
  TrainConfig tcfg;
  tcfg.seed = 13;
  tcfg.neg_mode = NegMode::InBatch;
  tcfg.neg_num = 2;
  // Path u0 -> i0 -> u1 -> i0 repeats i0; win 2 over 4 positions = 10 pairs.
  Path path;
  path.metapath_id = 0;
  path.nodes = {node_key(0, 0), node_key(1, 0), node_key(0, 1), node_key(1, 0)};
  tcfg.pair_budget = 10;
  Trainer<float> trainer(g, store, mcfg, dense, tcfg);
  std::deque<Path> walks{path};
  PipelineConfig pcfg;
  pcfg.skip_ego = true;
  pcfg.win_size = 2;
  pcfg.batch_size = 10;
  PairBatchStream stream(
      g,
      [&]() -> std::optional<Path> {
        if (walks.empty()) return std::nullopt;
        Path p = walks.front();
        walks.pop_front();
        return p;
      },
      pcfg);
  trainer.run(stream);

  REQUIRE(store.pushed_keys.size() == 1);
  REQUIRE(store.pulled_keys.size() == 1);
  const auto& keys = store.pushed_keys[0];
  const auto& grads = store.pushed_grads[0];

  // Re-derive: entities are the distinct keys in pull order.
  const auto& pkeys = store.pulled_keys[0];
  CHECK(pkeys == keys);
  std::unordered_map<std::uint64_t, std::uint32_t> slot;
  for (std::uint32_t i = 0; i < pkeys.size(); ++i) slot.emplace(pkeys[i], i);
  CHECK(pkeys.size() == 3);  // u0, i0, u1 deduplicated

  // Observe the emitted batch order from an identical second stream.
  std::deque<Path> walks2{path};
  PairBatchStream twin(
      g,
      [&]() -> std::optional<Path> {
        if (walks2.empty()) return std::nullopt;
        Path p = walks2.front();
        walks2.pop_front();
        return p;
      },
      pcfg);
  const auto batch = twin.next();
  REQUIRE(batch.has_value());
  const auto B = static_cast<std::uint32_t>(batch->size());
  REQUIRE(B == 10);
  MatX<float> hv(dim, B), hu(dim, B);
  for (std::uint32_t p = 0; p < B; ++p) {
    for (std::uint32_t d = 0; d < dim; ++d) {
      hv(d, p) = store.pulled_values[0][slot.at((*batch)[p].center) * dim + d];
      hu(d, p) = store.pulled_values[0][slot.at((*batch)[p].context) * dim + d];
    }
  }
  Rng idx_rng(hash_mix({tcfg.seed, 0x696e62ull, 0}));
  const auto idx = sample_inbatch_indices(B, tcfg.neg_num, idx_rng);
  const auto res = loss_inbatch<float>(hv, hu, idx, tcfg.neg_num);
  // The trainer pushes per-pair (sum-reduced) gradients: B times the mean.
  MatX<float> expect = MatX<float>::Zero(dim, 3);
  for (std::uint32_t p = 0; p < B; ++p) {
    expect.col(slot.at((*batch)[p].center)) +=
        static_cast<float>(B) * res.g_v.col(p);
    expect.col(slot.at((*batch)[p].context)) +=
        static_cast<float>(B) * res.g_u.col(p);
  }
  for (std::uint32_t i = 0; i < keys.size(); ++i) {
    for (std::uint32_t d = 0; d < dim; ++d) {
      CHECK(grads[i * dim + d] ==
            doctest::Approx(expect(d, slot.at(keys[i]))).epsilon(1e-6));
    }
  }
}

TEST_CASE("random mode pulls negative slots, in-batch pulls none") {
  Fixture f(41, 8, 8, 48);
  auto run = [&](NegMode mode) {
    EmbeddingTable table(TableConfig{8, 41, SparseOpt::Sgd});
    ModelConfig mcfg;
    mcfg.kind = ModelKind::WalkOnly;
    mcfg.dim = 8;
    mcfg.num_relations = f.rg.graph.num_relations();
    DenseParams<float> dense;
    TrainConfig tcfg;
    tcfg.pair_budget = 200;
    tcfg.seed = 41;
    tcfg.neg_mode = mode;
    tcfg.neg_num = 3;
    Trainer<float> trainer(f.rg.graph, table, mcfg, dense, tcfg);
    std::shared_ptr<EndlessWalkSource> keep;
    PipelineConfig pcfg;
    pcfg.skip_ego = true;
    pcfg.batch_size = 50;
    PairBatchStream stream(f.rg.graph, endless(f.rg.graph, f.wcfg, keep), pcfg);
    return trainer.run(stream);
  };
  const auto random_run = run(NegMode::Random);
  CHECK(random_run.negative_key_slots >= random_run.batches * 50 * 3);
  const auto inbatch_run = run(NegMode::InBatch);
  CHECK(inbatch_run.negative_key_slots == 0);
  CHECK(inbatch_run.pull_key_slots < random_run.pull_key_slots);
}

TEST_CASE("negative sampler draws the context type and never the positive") {
  Fixture f(51, 5, 7, 30);
  NegativeSampler sampler(f.rg.graph, NegDist::Uniform);
  Rng rng(2);
  const NodeKey positive = node_key(1, 3);
  for (int i = 0; i < 500; ++i) {
    const NodeKey neg = sampler.sample(positive, rng);
    CHECK(node_key_type(neg) == 1);
    CHECK(neg != positive);
    CHECK(node_key_index(neg) < f.rg.graph.num_nodes(1));
  }
}

TEST_CASE("degree^0.75 sampling favors high-degree nodes") {
  HetGraphBuilder b;
  b.add_schema_spec("u2click2i", true);
  // i0 has 9x the degree of i1.
  for (int k = 0; k < 9; ++k) {
    b.add_edge("u2click2i", "u" + std::to_string(k), "i0");
  }
  b.add_edge("u2click2i", "u0", "i1");
  b.add_edge("u2click2i", "u0", "i2");
  const HetGraph g = b.build();
  NegativeSampler sampler(g, NegDist::Degree075);
  Rng rng(3);
  std::map<std::uint64_t, int> counts;
  const NodeKey positive = node_key(1, 2);  // i2 never drawn
  for (int i = 0; i < 4000; ++i) {
    counts[node_key_index(sampler.sample(positive, rng))]++;
  }
  CHECK(counts[0] > counts[1] * 3);  // 9^0.75 / 1 ~ 5.2
  CHECK(counts.count(2) == 0);
}

TEST_CASE("warm start restores checkpointed keys and lazy-inits the rest") {
  const std::string path = "/tmp/recgraph_warm.ckpt";
  EmbeddingTable source(TableConfig{8, 61, SparseOpt::Sgd});
  std::vector<std::uint64_t> keys;
  for (std::uint64_t k = 0; k < 100; ++k) keys.push_back(k * 3 + 1);
  source.pull(keys);
  source.push(keys, std::vector<float>(keys.size() * 8, 1.0f), 0.5f);
  source.save(path);

  EmbeddingTable target(TableConfig{8, 61, SparseOpt::Sgd});
  CHECK(warm_start(target, path) == 100);
  CHECK(target.pull(keys) == source.pull(keys));
  // A key absent from the checkpoint falls back to lazy init.
  EmbeddingTable fresh(TableConfig{8, 61, SparseOpt::Sgd});
  const std::vector<std::uint64_t> other{999999};
  CHECK(target.pull(other) == fresh.pull(other));
  std::remove(path.c_str());
}

TEST_CASE("warm start rejects dim mismatches") {
  const std::string path = "/tmp/recgraph_warm_dim.ckpt";
  EmbeddingTable source(TableConfig{8, 1, SparseOpt::Sgd});
  source.pull(std::vector<std::uint64_t>{1});
  source.save(path);
  EmbeddingTable target(TableConfig{16, 1, SparseOpt::Sgd});
  CHECK_THROWS_AS(warm_start(target, path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("multi-worker run consumes the budget across streams") {
  Fixture f(71, 8, 8, 60);
  EmbeddingTable table(TableConfig{8, 71, SparseOpt::Sgd});
  ModelConfig mcfg;
  mcfg.kind = ModelKind::WalkOnly;
  mcfg.dim = 8;
  mcfg.num_relations = f.rg.graph.num_relations();
  DenseParams<float> dense;
  TrainConfig tcfg;
  tcfg.pair_budget = 400;
  tcfg.seed = 71;
  Trainer<float> trainer(f.rg.graph, table, mcfg, dense, tcfg);
  PipelineCounters counters;
  std::vector<std::unique_ptr<EndlessWalkSource>> sources;
  std::vector<std::unique_ptr<PairBatchStream>> streams;
  std::vector<PairBatchStream*> ptrs;
  for (std::uint32_t w = 0; w < 2; ++w) {
    sources.push_back(
        std::make_unique<EndlessWalkSource>(f.rg.graph, f.wcfg, w, 2));
    auto* src = sources.back().get();
    PipelineConfig pcfg;
    pcfg.skip_ego = true;
    pcfg.batch_size = 16;
    PairBatchStream::WalkSource fn = [src] { return src->next(); };
    streams.push_back(std::make_unique<PairBatchStream>(f.rg.graph, fn, pcfg,
                                                        &counters));
    ptrs.push_back(streams.back().get());
  }
  const auto metrics = trainer.run(ptrs);
  CHECK(metrics.pairs_done == 400);
  CHECK(table.size() > 0);
}

TEST_CASE("metrics log lines are step, pairs, loss, pairs per sec") {
  Fixture f(81);
  EmbeddingTable table(TableConfig{8, 81, SparseOpt::Sgd});
  ModelConfig mcfg;
  mcfg.kind = ModelKind::WalkOnly;
  mcfg.dim = 8;
  mcfg.num_relations = f.rg.graph.num_relations();
  DenseParams<float> dense;
  TrainConfig tcfg;
  tcfg.pair_budget = 64;
  tcfg.seed = 81;
  tcfg.log_every = 1;
  Trainer<float> trainer(f.rg.graph, table, mcfg, dense, tcfg);
  std::shared_ptr<EndlessWalkSource> keep;
  PipelineConfig pcfg;
  pcfg.skip_ego = true;
  pcfg.batch_size = 16;
  PairBatchStream stream(f.rg.graph, endless(f.rg.graph, f.wcfg, keep), pcfg);
  std::stringstream log;
  trainer.run(stream, &log);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    std::stringstream ls(line);
    std::uint64_t step = 0, pairs = 0;
    double loss = 0, pps = 0;
    ls >> step >> pairs >> loss >> pps;
    CHECK(pairs > 0);
    CHECK(loss > 0.0);
    CHECK(pps >= 0.0);
  }
  CHECK(lines >= 2);
}
