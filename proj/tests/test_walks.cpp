#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "recgraph/walk.hpp"
#include "testutil.hpp"

using namespace recgraph;

namespace {

std::vector<EdgeTypeTriple> schema_of(const HetGraph& g) {
  std::vector<EdgeTypeTriple> s;
  for (std::uint32_t r = 0; r < g.num_relations(); ++r) s.push_back(g.relation(r));
  return s;
}

std::multiset<std::string> path_multiset(const std::vector<Path>& paths) {
  std::multiset<std::string> out;
  for (const auto& p : paths) {
    std::string s = std::to_string(p.metapath_id) + ":";
    for (auto n : p.nodes) s += std::to_string(n) + ",";
    out.insert(s);
  }
  return out;
}

}  // namespace

TEST_CASE("parse_metapath resolves chained relations") {
  HetGraphBuilder b;
  b.add_schema_spec("u2click2i", true);
  const HetGraph g = b.build();
  const auto mp = parse_metapath("u2click2i - i2click2u", schema_of(g));
  REQUIRE(mp.steps.size() == 2);
  CHECK(mp.steps[0].src_type == "u");
  CHECK(mp.steps[1].src_type == "i");
  CHECK(mp.name == "u2click2i - i2click2u");
}

TEST_CASE("parse_metapath accepts the homogeneous degenerate form") {
  HetGraphBuilder b;
  b.add_schema_spec("u2u", true);
  const HetGraph g = b.build();
  const auto mp = parse_metapath("u2u - u2u", schema_of(g));
  CHECK(mp.steps.size() == 2);
}

TEST_CASE("parse_metapath reports chain and cycle mismatches") {
  HetGraphBuilder b;
  b.add_schema_spec("u2click2i", true);
  b.add_schema_spec("u2buy2i", true);
  const HetGraph g = b.build();
  CHECK_THROWS_WITH_AS(parse_metapath("u2click2i - u2buy2i", schema_of(g)),
                       doctest::Contains("chain mismatch"), ParseError);
  CHECK_THROWS_WITH_AS(parse_metapath("u2click2i", schema_of(g)),
                       doctest::Contains("not cyclic"), ParseError);
  CHECK_THROWS_AS(parse_metapath("u2view2i - i2view2u", schema_of(g)),
                  ParseError);
}

TEST_CASE("single-choice chain forces the path") {
  HetGraphBuilder b;
  b.add_schema_spec("u2click2i", true);
  b.add_edge("u2click2i", "u1", "i1");
  const HetGraph g = b.build();
  WalkConfig cfg;
  cfg.metapaths.push_back(parse_metapath("u2click2i - i2click2u", schema_of(g)));
  cfg.walk_len = 5;
  cfg.walks_per_node = 1;
  cfg.seed = 3;
  const auto paths = generate_walks(g, cfg);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].nodes.size() == 5);
  const auto ut = *g.type_index("u");
  const auto it = *g.type_index("i");
  for (std::size_t t = 0; t < 5; ++t) {
    const auto nk = paths[0].nodes[t];
    CHECK(node_key_type(nk) == (t % 2 == 0 ? ut : it));
    CHECK(node_key_index(nk) == 0);
  }
}

TEST_CASE("dead ends truncate to length >= 1") {
  HetGraphBuilder b3;
  b3.add_schema_spec("u2click2i", true);
  b3.add_edge("u2click2i", "u1", "i1");
  b3.add_side_info("u", "u_iso", 0, std::vector<std::string>{"x"});
  const HetGraph g3 = b3.build();
  WalkConfig cfg;
  cfg.metapaths = {parse_metapath("u2click2i - i2click2u", schema_of(g3))};
  cfg.walk_len = 6;
  cfg.seed = 5;
  const auto paths = generate_walks(g3, cfg);
  // u_iso has no click neighbors: its path is just itself.
  bool found_isolated = false;
  const auto ut = *g3.type_index("u");
  const auto iso = *g3.node_index(ut, "u_iso");
  for (const auto& p : paths) {
    if (node_key_index(p.nodes[0]) == iso && node_key_type(p.nodes[0]) == ut) {
      found_isolated = true;
      CHECK(p.nodes.size() == 1);
    }
    CHECK(p.nodes.size() >= 1);
    CHECK(p.nodes.size() <= 6);
  }
  CHECK(found_isolated);
}

TEST_CASE("identical seeds reproduce the path multiset") {
  const auto rg = testutil::make_random_graph({11, 6, 7, 30, 0});
  WalkConfig cfg;
  cfg.metapaths = {
      parse_metapath("u2click2i - i2click2u", schema_of(rg.graph))};
  cfg.walk_len = 8;
  cfg.walks_per_node = 3;
  cfg.seed = 1234;
  const auto a = generate_walks(rg.graph, cfg);
  const auto b = generate_walks(rg.graph, cfg);
  CHECK(path_multiset(a) == path_multiset(b));
  cfg.seed = 1235;
  const auto c = generate_walks(rg.graph, cfg);
  CHECK(path_multiset(a) != path_multiset(c));
}

TEST_CASE("worker partitions preserve the epoch multiset") {
  const auto rg = testutil::make_random_graph({21, 8, 8, 40, 0});
  WalkConfig cfg;
  cfg.metapaths = {
      parse_metapath("u2click2i - i2click2u", schema_of(rg.graph))};
  cfg.walk_len = 6;
  cfg.walks_per_node = 2;
  cfg.seed = 77;
  const auto serial = generate_walks(rg.graph, cfg);
  std::vector<Path> merged;
  for (std::uint32_t w = 0; w < 3; ++w) {
    WalkStream stream(rg.graph, cfg, 0, w, 3);
    while (auto p = stream.next()) merged.push_back(std::move(*p));
  }
  CHECK(path_multiset(serial) == path_multiset(merged));
}

TEST_CASE("every step follows an edge of the scheduled relation") {
  const auto rg = testutil::make_random_graph({31, 10, 10, 80, 0});
  const HetGraph& g = rg.graph;
  WalkConfig cfg;
  cfg.metapaths = {parse_metapath("u2click2i - i2click2u", schema_of(g))};
  cfg.walk_len = 10;
  cfg.walks_per_node = 150;
  cfg.seed = 9;
  const auto paths = generate_walks(g, cfg);
  std::uint64_t steps_checked = 0;
  const auto fwd = g.relation_index("u2click2i");
  const auto rev = g.relation_index("i2click2u");
  for (const auto& p : paths) {
    for (std::size_t t = 0; t + 1 < p.nodes.size(); ++t) {
      const auto rel = t % 2 == 0 ? fwd : rev;
      const auto nbrs = g.neighbors(rel, node_key_index(p.nodes[t]));
      const auto target = node_key_index(p.nodes[t + 1]);
      CHECK(std::count(nbrs.begin(), nbrs.end(), target) > 0);
      // Type pattern follows the metapath cycle.
      CHECK(node_key_type(p.nodes[t]) == g.src_type_of(rel));
      CHECK(node_key_type(p.nodes[t + 1]) == g.dst_type_of(rel));
      ++steps_checked;
    }
  }
  CHECK(steps_checked >= 10000);
}

TEST_CASE("first-step distribution on a star is uniform within 3 sigma") {
  HetGraphBuilder b;
  b.add_schema_spec("u2u", true);
  const int n = 10;
  for (int leaf = 0; leaf < n; ++leaf) {
    b.add_edge("u2u", "center", "leaf" + std::to_string(leaf));
  }
  const HetGraph g = b.build();
  WalkConfig cfg;
  cfg.metapaths = {parse_metapath("u2u - u2u", schema_of(g))};
  cfg.walk_len = 2;
  cfg.walks_per_node = 100 * n;
  cfg.seed = 2024;
  const auto center = *g.node_index(0, "center");
  std::map<std::uint64_t, int> counts;
  const auto paths = generate_walks(g, cfg);
  int total = 0;
  for (const auto& p : paths) {
    if (node_key_index(p.nodes[0]) != center) continue;
    REQUIRE(p.nodes.size() == 2);
    counts[node_key_index(p.nodes[1])]++;
    ++total;
  }
  CHECK(total == 100 * n);
  const double expect = static_cast<double>(total) / n;
  const double sigma = std::sqrt(total * (1.0 / n) * (1.0 - 1.0 / n));
  for (const auto& [leaf, count] : counts) {
    CHECK(std::abs(count - expect) <= 3.0 * sigma);
  }
  CHECK(counts.size() == n);
}

TEST_CASE("walks_per_node emits the configured path count") {
  const auto rg = testutil::make_random_graph({51, 5, 5, 25, 0});
  WalkConfig cfg;
  cfg.metapaths = {
      parse_metapath("u2click2i - i2click2u", schema_of(rg.graph))};
  cfg.walk_len = 4;
  cfg.walks_per_node = 7;
  cfg.seed = 3;
  const auto paths = generate_walks(rg.graph, cfg);
  CHECK(paths.size() == rg.graph.num_nodes(*rg.graph.type_index("u")) * 7);
}
