#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "recgraph/cli.hpp"
#include "recgraph/server.hpp"
#include "recgraph/table.hpp"

namespace fs = std::filesystem;
using recgraph::cli::run;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("recgraph_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = path / name;
    std::ofstream f(p);
    f << content;
    return p.string();
  }
  std::string at(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::stringstream out, err;
  const int status = run(args, out, err);
  return {status, out.str(), err.str()};
}

// 5 users x 4 items, 10 interactions per user with increasing timestamps.
std::string fixture_edges() {
  std::stringstream ss;
  for (int u = 0; u < 5; ++u) {
    for (int t = 0; t < 10; ++t) {
      ss << "u2click2i\tu" << u << "\ti" << (u + t) % 4 << '\t' << t << '\n';
    }
  }
  return ss.str();
}

std::string fixture_config(const std::string& edges_path) {
  return "graph.schema = u2click2i:sym\n"
         "graph.edges_path = " + edges_path + "\n"
         "walk.metapaths = u2click2i - i2click2u\n"
         "model.dim = 8\n"
         "pipeline.batch_size = 16\n"
         "train.pair_budget = 64\n"
         "train.seed = 7\n";
}

}  // namespace

TEST_CASE("unknown config keys exit with the config_error category") {
  TempDir dir;
  const auto cfg = dir.file("bad.conf", "graph.scheme = nope\n");
  const auto res = cli({"ingest", "-c", cfg});
  CHECK(res.status == 2);
  CHECK(res.err.rfind("config_error:", 0) == 0);
  CHECK(res.err.find('\n') == res.err.size() - 1);  // single line
}

TEST_CASE("missing config file is an io_error") {
  const auto res = cli({"ingest", "-c", "/nonexistent/x.conf"});
  CHECK(res.status == 5);
  CHECK(res.err.rfind("io_error:", 0) == 0);
}

TEST_CASE("ingest prints node, edge and split statistics") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  const auto cfg = dir.file("run.conf", fixture_config(edges));
  const auto res = cli({"ingest", "-c", cfg});
  REQUIRE(res.status == 0);
  CHECK(res.out.find("nodes\tu\t5") != std::string::npos);
  CHECK(res.out.find("nodes\ti\t4") != std::string::npos);
  CHECK(res.out.find("edges\tu2click2i") != std::string::npos);
  CHECK(res.out.find("edges\ti2click2u") != std::string::npos);
  // 50 interactions -> 40 train, 5 val, 5 test.
  CHECK(res.out.find("split\ttrain\t40\tval\t5\ttest\t5") != std::string::npos);
}

TEST_CASE("train with zero budget leaves a pure lazy-init checkpoint") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  const auto cfg = dir.file("run.conf", fixture_config(edges));
  const auto out_path = dir.at("model.ckpt");
  const auto res = cli({"train", "-c", cfg, "--set", "train.pair_budget=0",
                        "--out", out_path});
  REQUIRE(res.status == 0);
  CHECK(res.out.find("# resolved configuration") != std::string::npos);
  CHECK(res.out.find("train.pair_budget = 0") != std::string::npos);
  const auto entries = recgraph::read_checkpoint(out_path, 8);
  CHECK(entries.empty());
}

TEST_CASE("serial train runs are bit-identical for one seed") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  const auto cfg = dir.file("run.conf", fixture_config(edges));
  const auto a = dir.at("a.ckpt");
  const auto b = dir.at("b.ckpt");
  REQUIRE(cli({"train", "-c", cfg, "--out", a}).status == 0);
  REQUIRE(cli({"train", "-c", cfg, "--out", b}).status == 0);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().size() > 24);
}

TEST_CASE("train, evaluate and dump-embeddings complete end to end") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  const auto cfg = dir.file("run.conf", fixture_config(edges));
  const auto ckpt = dir.at("model.ckpt");
  const auto train_res =
      cli({"train", "-c", cfg, "--out", ckpt, "--dump-walks", dir.at("walks")});
  REQUIRE(train_res.status == 0);
  CHECK(train_res.out.find("pairs_done\t64") != std::string::npos);

  // Walk dump: metapath name prefix, then external ids.
  std::ifstream walks(dir.at("walks"));
  std::string first;
  std::getline(walks, first);
  CHECK(first.rfind("u2click2i - i2click2u\t", 0) == 0);
  CHECK(first.find('u') != std::string::npos);

  const auto eval_res =
      cli({"evaluate", "-c", cfg, "--checkpoint", ckpt, "--set", "eval.K=4",
           "--set", "eval.strategy=u2i"});
  REQUIRE(eval_res.status == 0);
  std::stringstream es(eval_res.out);
  std::string strat;
  int k = 0;
  double recall = -1;
  es >> strat >> k >> recall;
  CHECK(strat == "u2i");
  CHECK(k == 4);
  CHECK(recall >= 0.0);
  CHECK(recall <= 1.0);

  const auto dump_res = cli({"dump-embeddings", "-c", cfg, "--checkpoint",
                             ckpt, "--out", dir.at("emb.tsv")});
  REQUIRE(dump_res.status == 0);
  std::ifstream emb(dir.at("emb.tsv"));
  std::string line;
  std::size_t lines = 0;
  bool saw_u0 = false;
  while (std::getline(emb, line)) {
    ++lines;
    std::stringstream ls(line);
    std::string node;
    ls >> node;
    saw_u0 |= node == "u0";
    double v = 0;
    int dims = 0;
    while (ls >> v) ++dims;
    CHECK(dims == 8);
  }
  CHECK(lines == 9);  // 5 users + 4 items
  CHECK(saw_u0);
}

TEST_CASE("evaluate without interactions is a data_error") {
  TempDir dir;
  // The schema declares a user-item relation, but the file only carries
  // homogeneous edges, so there is nothing to hold out.
  const auto edges = dir.file("edges.tsv", "n2n\ta\tb\n");
  const auto cfg = dir.file(
      "run.conf",
      "graph.schema = u2click2i:sym, n2n:sym\ngraph.edges_path = " + edges +
          "\nwalk.metapaths = n2n - n2n\n");
  const auto res = cli({"evaluate", "-c", cfg, "--checkpoint", "/none"});
  CHECK(res.status == 4);
  CHECK(res.err.rfind("data_error:", 0) == 0);
}

TEST_CASE("usage errors are single-line and categorized") {
  const auto res = cli({"trian"});
  CHECK(res.status == 2);
  CHECK(res.err.rfind("usage_error:", 0) == 0);
}

TEST_CASE("lightgcn end to end with attention and side info") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  std::string side;
  for (int i = 0; i < 4; ++i) {
    side += "i\ti" + std::to_string(i) + "\t0:cat" + std::to_string(i % 2) + "\n";
  }
  const auto side_path = dir.file("side.tsv", side);
  auto conf = fixture_config(edges);
  conf += "graph.side_info_path = " + side_path + "\n";
  conf += "model.kind = lightgcn\nmodel.layers = 2\nmodel.phi = attention\n";
  conf += "model.side_info = true\npipeline.fanouts = 3,3\n";
  conf += "train.neg_mode = random\ntrain.neg_num = 2\n";
  const auto cfg = dir.file("run.conf", conf);
  const auto ckpt = dir.at("gnn.ckpt");
  const auto res = cli({"train", "-c", cfg, "--out", ckpt});
  REQUIRE(res.status == 0);
  const auto eval_res = cli({"evaluate", "-c", cfg, "--checkpoint", ckpt,
                             "--set", "eval.K=4", "--set", "eval.strategy=icf"});
  REQUIRE(eval_res.status == 0);
  CHECK(eval_res.out.rfind("icf\t4\t", 0) == 0);
}

TEST_CASE("train against remote shards over loopback") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  // Two in-process shard servers stand in for remote machines.
  auto t0 = std::make_shared<recgraph::EmbeddingTable>(
      recgraph::TableConfig{8, 7, recgraph::SparseOpt::Sgd});
  auto t1 = std::make_shared<recgraph::EmbeddingTable>(
      recgraph::TableConfig{8, 7, recgraph::SparseOpt::Sgd});
  recgraph::ShardServer s0(t0, "127.0.0.1", 0);
  recgraph::ShardServer s1(t1, "127.0.0.1", 0);
  auto conf = fixture_config(edges);
  conf += "ps.shards = 2\nps.endpoints = 127.0.0.1:" +
          std::to_string(s0.port()) + ", 127.0.0.1:" +
          std::to_string(s1.port()) + "\n";
  const auto cfg = dir.file("run.conf", conf);
  const auto ckpt = dir.at("remote.ckpt");
  const auto res = cli({"train", "-c", cfg, "--out", ckpt});
  REQUIRE(res.status == 0);
  CHECK(t0->size() + t1->size() > 0);
  // Remote mode checkpoints shard-side, one file per shard.
  const auto e0 = recgraph::read_checkpoint(ckpt + ".shard0", 8);
  const auto e1 = recgraph::read_checkpoint(ckpt + ".shard1", 8);
  CHECK(e0.size() == t0->size());
  CHECK(e1.size() == t1->size());
  for (const auto& [key, vec] : e0) CHECK(key % 2 == 0);
  for (const auto& [key, vec] : e1) CHECK(key % 2 == 1);
}

TEST_CASE("evaluate reproduces a hand-computed recall on a known checkpoint") {
  // Two users, 10 timestamped interactions each: the split takes the first
  // 8 per user as train, 1 val, 1 test. Test items stay inside the train
  // vocabulary (i1 for u0, i0 for u1). Vocab order is first-seen in the
  // train window: u0, u1 / i0, i1.
  TempDir dir;
  std::stringstream edges2;
  for (int t = 0; t < 8; ++t) edges2 << "u2click2i\tu0\ti0\t" << t << '\n';
  edges2 << "u2click2i\tu0\ti2\t8\n";  // val: brings i2 into no window; dropped
  edges2 << "u2click2i\tu0\ti1\t9\n";  // test item i1 (in vocab via u1 train)
  for (int t = 0; t < 8; ++t) edges2 << "u2click2i\tu1\ti1\t" << t << '\n';
  edges2 << "u2click2i\tu1\ti2\t8\n";
  edges2 << "u2click2i\tu1\ti0\t9\n";  // test item i0
  const auto edges2_path = dir.file("edges2.tsv", edges2.str());
  const auto cfg2 = dir.file("run2.conf",
                             "graph.schema = u2click2i:sym\n"
                             "graph.edges_path = " + edges2_path + "\n"
                             "walk.metapaths = u2click2i - i2click2u\n"
                             "model.dim = 2\n");
  // Crafted embeddings: u0 aligned with i1, u1 aligned with i0, so U2I@1
  // with train exclusion recommends exactly the test item of each user.
  using recgraph::node_key;
  std::vector<std::pair<std::uint64_t, std::vector<float>>> entries{
      {node_key(0, 0), {1.0f, 0.0f}},   // u0
      {node_key(0, 1), {0.0f, 1.0f}},   // u1
      {node_key(1, 0), {0.0f, 1.0f}},   // i0
      {node_key(1, 1), {1.0f, 0.0f}},   // i1
  };
  std::sort(entries.begin(), entries.end());
  const auto ckpt = dir.at("known.ckpt");
  recgraph::write_checkpoint(ckpt, 2, entries);
  const auto res = cli({"evaluate", "-c", cfg2, "--checkpoint", ckpt, "--set",
                        "eval.K=1", "--set", "eval.strategy=u2i"});
  REQUIRE(res.status == 0);
  // Hand-computed: u0 truth {i1}, top-1 excluding train {i0} is i1 -> 1.0;
  // u1 truth {i0}, top-1 excluding {i1} is i0 -> 1.0; mean 1.0.
  CHECK(res.out == "u2i\t1\t1\n");
}

TEST_CASE("evaluate writes per-user detail lines") {
  TempDir dir;
  const auto edges = dir.file("edges.tsv", fixture_edges());
  const auto cfg = dir.file("run.conf", fixture_config(edges));
  const auto ckpt = dir.at("model.ckpt");
  REQUIRE(cli({"train", "-c", cfg, "--out", ckpt}).status == 0);
  const auto res = cli({"evaluate", "-c", cfg, "--checkpoint", ckpt, "--set",
                        "eval.K=3", "--detail", dir.at("detail.tsv")});
  REQUIRE(res.status == 0);
  std::ifstream detail(dir.at("detail.tsv"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(detail, line)) {
    ++lines;
    std::stringstream ls(line);
    std::string user;
    double recall = -1;
    ls >> user >> recall;
    CHECK(user.rfind('u', 0) == 0);
    CHECK(recall >= 0.0);
    CHECK(recall <= 1.0);
  }
  CHECK(lines == 5);  // every user has one held-out test item
}
