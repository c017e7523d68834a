#include "recgraph/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "recgraph/config.hpp"
#include "recgraph/eval.hpp"
#include "recgraph/represent.hpp"
#include "recgraph/server.hpp"
#include "recgraph/trainer.hpp"
#include "recgraph/walk.hpp"

namespace recgraph::cli {

namespace {

std::atomic<bool> g_stop{false};

void request_stop(int) { g_stop.store(true); }

struct LoadedGraph {
  HetGraph graph;
  std::uint32_t user_type = 0;
  std::uint32_t item_type = 0;
  std::string user_type_name;
  std::string item_type_name;
  bool has_interactions = false;
  SplitLogs split;
};

// Builds the graph from the edge file. Rows of relations pointing from the
// user type to the item type (the first schema triple fixes which types
// those are) form the interaction log; when split_interactions is set they
// are temporally split per user and only the train window enters the graph.
// Rows without a timestamp fall back to file order.
LoadedGraph load_graph(const RunConfig& cfg, bool split_interactions) {
  if (cfg.schema.empty()) throw ConfigError("graph.schema is required");
  if (cfg.edges_path.empty()) throw ConfigError("graph.edges_path is required");
  LoadedGraph out;
  HetGraphBuilder builder;
  const auto entries = cfg.schema_entries();
  if (entries.empty()) throw ConfigError("graph.schema lists no edge types");
  for (const auto& [spec, sym] : entries) builder.add_schema_spec(spec, sym);
  const EdgeTypeTriple first = parse_edge_type(entries.front().first);
  out.user_type_name = first.src_type;
  out.item_type_name = first.dst_type;

  const auto rows = load_edge_file(cfg.edges_path);
  // Interaction rows: user-type -> item-type relations.
  std::unordered_map<std::string, EdgeTypeTriple> triples;
  for (const auto& [spec, sym] : entries) {
    EdgeTypeTriple t = parse_edge_type(spec);
    t.symmetric = sym;
    triples.emplace(t.spec(), t);
  }
  InteractionLog interactions;
  std::vector<std::size_t> interaction_rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = triples.find(rows[i].type_spec);
    const bool is_interaction =
        it != triples.end() && it->second.src_type == out.user_type_name &&
        it->second.dst_type == out.item_type_name;
    if (is_interaction) {
      interactions.records.push_back(
          {rows[i].src_id, rows[i].dst_id, it->second.relation,
           rows[i].timestamp.value_or(static_cast<std::int64_t>(i))});
      interaction_rows.push_back(i);
    }
  }
  out.has_interactions = !interactions.records.empty();

  if (split_interactions && out.has_interactions) {
    out.split = temporal_split(interactions);
    // Train-window interactions plus every non-interaction row.
    std::vector<char> keep(rows.size(), 1);
    for (auto i : interaction_rows) keep[i] = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (keep[i]) builder.add_edge(rows[i].type_spec, rows[i].src_id, rows[i].dst_id);
    }
    // Behavior name maps back to the forward relation spec.
    std::unordered_map<std::string, std::string> spec_of_behavior;
    for (const auto& [spec, t] : triples) {
      if (t.src_type == out.user_type_name && t.dst_type == out.item_type_name) {
        spec_of_behavior[t.relation] = spec;
      }
    }
    for (const auto& rec : out.split.train.records) {
      builder.add_edge(spec_of_behavior.at(rec.behavior), rec.user, rec.item);
    }
  } else {
    for (const auto& row : rows) {
      builder.add_edge(row.type_spec, row.src_id, row.dst_id);
    }
    if (out.has_interactions) out.split.train = std::move(interactions);
  }
  if (!cfg.side_info_path.empty()) {
    load_side_info_file(cfg.side_info_path, builder);
  }
  out.graph = builder.build();
  const auto ut = out.graph.type_index(out.user_type_name);
  const auto it = out.graph.type_index(out.item_type_name);
  out.user_type = ut.value_or(0);
  out.item_type = it.value_or(0);
  return out;
}

std::shared_ptr<ShardedStore> make_store(const RunConfig& cfg) {
  std::vector<std::shared_ptr<ParamStore>> shards;
  if (cfg.endpoints.empty()) {
    for (std::uint32_t s = 0; s < cfg.shards; ++s) {
      shards.push_back(std::make_shared<EmbeddingTable>(
          TableConfig{cfg.dim, cfg.seed, SparseOpt::Sgd}));
    }
  } else {
    for (const auto& ep : cfg.endpoints) {
      const auto [host, port] = parse_endpoint(ep);
      shards.push_back(std::make_shared<RemoteStore>(host, port, cfg.dim));
    }
  }
  return std::make_shared<ShardedStore>(std::move(shards));
}

ModelConfig model_config(const RunConfig& cfg, const HetGraph& g) {
  ModelConfig m;
  m.kind = cfg.model_kind;
  m.layers = cfg.layers;
  m.dim = cfg.dim;
  m.alpha = cfg.alpha;
  m.phi = cfg.phi;
  m.use_side_info = cfg.side_info;
  m.num_relations = g.num_relations();
  return m;
}

WalkConfig walk_config(const RunConfig& cfg, const HetGraph& g) {
  if (cfg.metapaths.empty()) throw ConfigError("walk.metapaths is required");
  WalkConfig w;
  std::vector<EdgeTypeTriple> schema;
  for (std::uint32_t r = 0; r < g.num_relations(); ++r) {
    schema.push_back(g.relation(r));
  }
  for (const auto& spec : cfg.metapath_specs()) {
    w.metapaths.push_back(parse_metapath(spec, schema));
  }
  w.walk_len = cfg.walk_len;
  w.walks_per_node = cfg.walks_per_node;
  w.seed = cfg.seed;
  return w;
}

PipelineConfig pipeline_config(const RunConfig& cfg) {
  PipelineConfig p;
  p.win_size = cfg.win_size;
  p.fanouts = cfg.fanouts;
  p.order = cfg.order;
  p.batch_size = cfg.batch_size;
  p.skip_ego = cfg.model_kind == ModelKind::WalkOnly;
  p.seed = cfg.seed;
  return p;
}

void dump_walks(const LoadedGraph& lg, const WalkConfig& wcfg,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write \"" + path + "\"");
  WalkStream stream(lg.graph, wcfg);
  while (auto p = stream.next()) {
    out << wcfg.metapaths[p->metapath_id].name;
    char sep = '\t';
    for (const NodeKey nk : p->nodes) {
      out << sep << lg.graph.node_name(node_key_type(nk), node_key_index(nk));
      sep = ' ';
    }
    out << '\n';
  }
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  const LoadedGraph lg = load_graph(cfg, /*split_interactions=*/true);
  const HetGraph& g = lg.graph;
  out << "node_types\t" << g.num_types() << '\n';
  for (std::uint32_t t = 0; t < g.num_types(); ++t) {
    out << "nodes\t" << g.type_name(t) << '\t' << g.num_nodes(t) << '\n';
  }
  for (std::uint32_t r = 0; r < g.num_relations(); ++r) {
    const auto& triple = g.relation(r);
    const std::uint64_t edges = g.num_edges(r);
    const std::uint64_t srcs = g.num_nodes(g.src_type_of(r));
    out << "edges\t" << triple.spec() << '\t' << edges << "\tmean_degree\t"
        << (srcs ? static_cast<double>(edges) / static_cast<double>(srcs) : 0.0)
        << '\n';
  }
  if (lg.has_interactions) {
    out << "split\ttrain\t" << lg.split.train.records.size() << "\tval\t"
        << lg.split.val.records.size() << "\ttest\t"
        << lg.split.test.records.size() << '\n';
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out_path,
              const std::string& metrics_path, const std::string& walks_path,
              bool no_holdout, std::ostream& out) {
  const LoadedGraph lg = load_graph(cfg, !no_holdout);
  out << "# resolved configuration\n";
  cfg.echo(out);
  const WalkConfig wcfg = walk_config(cfg, lg.graph);
  if (!walks_path.empty()) dump_walks(lg, wcfg, walks_path);

  auto store = make_store(cfg);
  const ModelConfig mcfg = model_config(cfg, lg.graph);
  DenseParams<float> dense = DenseParams<float>::glorot(mcfg, cfg.seed);
  if (!cfg.warm_start_path.empty()) {
    const std::uint64_t n = warm_start(*store, cfg.warm_start_path);
    out << "warm_start_keys\t" << n << '\n';
    if (mcfg.is_gnn()) {
      std::ifstream probe(cfg.warm_start_path, std::ios::binary);
      if (probe) {
        const auto records = read_checkpoint(cfg.warm_start_path, cfg.dim);
        const std::size_t used = load_dense_entries(mcfg, records, dense);
        if (used) out << "warm_start_dense_rows\t" << used << '\n';
      }
    }
  }

  TrainConfig tcfg;
  tcfg.neg_mode = cfg.neg_mode;
  tcfg.neg_num = cfg.neg_num;
  tcfg.neg_dist = cfg.neg_dist;
  tcfg.pair_budget = cfg.pair_budget;
  tcfg.sparse_lr = cfg.sparse_lr;
  tcfg.seed = cfg.seed;
  // A signal drains the workers at the next batch and the checkpoint below
  // still gets written.
  tcfg.stop = &g_stop;
  g_stop.store(false);
  struct sigaction sa {};
  sa.sa_handler = request_stop;
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);

  Trainer<float> trainer(lg.graph, *store, mcfg, dense, tcfg);
  PipelineCounters counters;
  std::vector<std::unique_ptr<EndlessWalkSource>> sources;
  std::vector<std::unique_ptr<PairBatchStream>> streams;
  std::vector<PairBatchStream*> stream_ptrs;
  for (std::uint32_t w = 0; w < cfg.workers; ++w) {
    sources.push_back(
        std::make_unique<EndlessWalkSource>(lg.graph, wcfg, w, cfg.workers));
    auto* src = sources.back().get();
    streams.push_back(std::make_unique<PairBatchStream>(
        lg.graph, [src] { return src->next(); }, pipeline_config(cfg),
        &counters));
    stream_ptrs.push_back(streams.back().get());
  }

  std::ofstream metrics_file;
  std::ostream* metrics = &out;
  if (!metrics_path.empty()) {
    metrics_file.open(metrics_path);
    if (!metrics_file) throw IoError("cannot write \"" + metrics_path + "\"");
    metrics = &metrics_file;
  }
  TrainMetrics m;
  try {
    m = trainer.run(stream_ptrs, metrics);
  } catch (const TransportError&) {
    // Persistent shard failure: leave a resumable snapshot of whatever is
    // still reachable, then surface the error.
    try {
      std::vector<std::pair<std::uint64_t, std::vector<float>>> entries;
      if (store->all_local()) entries = store->collect_entries();
      if (mcfg.is_gnn()) append_dense_entries(mcfg, dense, entries);
      write_checkpoint(out_path + ".partial", cfg.dim, entries);
      out << "checkpoint\t" << out_path << ".partial\tkeys\t"
          << entries.size() << '\n';
    } catch (const std::exception&) {
    }
    throw;
  }
  out << "pairs_done\t" << m.pairs_done << "\tmean_loss\t" << m.mean_loss
      << "\tpairs_per_sec\t" << m.pairs_per_sec << '\n';

  if (store->all_local()) {
    auto entries = store->collect_entries();
    if (mcfg.is_gnn()) append_dense_entries(mcfg, dense, entries);
    write_checkpoint(out_path, cfg.dim, entries);
    out << "checkpoint\t" << out_path << "\tkeys\t" << entries.size() << '\n';
  } else {
    const std::uint64_t n = store->save(out_path);
    if (mcfg.is_gnn()) {
      std::vector<std::pair<std::uint64_t, std::vector<float>>> entries;
      append_dense_entries(mcfg, dense, entries);
      write_checkpoint(out_path + ".dense", cfg.dim, entries);
    }
    out << "checkpoint\t" << out_path << ".shard*\tkeys\t" << n << '\n';
  }
  return 0;
}

struct Embeddings {
  MatX<float> users;
  MatX<float> items;
};

Embeddings compute_embeddings(const RunConfig& cfg, const LoadedGraph& lg,
                              const std::string& checkpoint) {
  auto store = std::make_shared<EmbeddingTable>(
      TableConfig{cfg.dim, cfg.seed, SparseOpt::Sgd});
  store->load(checkpoint);
  const ModelConfig mcfg = model_config(cfg, lg.graph);
  DenseParams<float> dense = DenseParams<float>::shaped(mcfg);
  if (mcfg.is_gnn()) {
    const auto records = read_checkpoint(checkpoint, cfg.dim);
    load_dense_entries(mcfg, records, dense);
  }
  std::vector<std::uint32_t> relations;
  for (std::uint32_t r = 0; r < lg.graph.num_relations(); ++r) {
    relations.push_back(r);
  }
  const std::uint64_t eval_seed = hash_mix({cfg.seed, 0x6576616cull});
  Embeddings e;
  e.users = compute_type_embeddings<float>(lg.graph, *store, mcfg, dense,
                                           lg.user_type, relations, cfg.fanouts,
                                           eval_seed);
  e.items = compute_type_embeddings<float>(lg.graph, *store, mcfg, dense,
                                           lg.item_type, relations, cfg.fanouts,
                                           eval_seed);
  return e;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint,
                 const std::string& report_path, const std::string& detail_path,
                 std::ostream& out) {
  const LoadedGraph lg = load_graph(cfg, /*split_interactions=*/true);
  if (!lg.has_interactions) {
    throw DataError("no user-item interaction rows to evaluate on");
  }
  const Embeddings e = compute_embeddings(cfg, lg, checkpoint);
  const EvalDataset data = build_eval_dataset(
      lg.graph, lg.user_type, lg.item_type, lg.split.train, lg.split.test);
  EvalConfig ecfg;
  ecfg.topn = cfg.eval_n;
  ecfg.k = cfg.eval_k;
  ecfg.strategy = cfg.strategy;

  std::ofstream detail_file;
  if (!detail_path.empty()) {
    detail_file.open(detail_path);
    if (!detail_file) throw IoError("cannot write \"" + detail_path + "\"");
  }
  double recall_sum = 0.0;
  std::size_t scored = 0;
  for (std::uint32_t u = 0; u < data.truth_items.size(); ++u) {
    if (data.truth_items[u].empty()) continue;
    const auto recs = recommend<float>(ecfg, u, e.users, e.items, data);
    std::size_t hits = 0;
    for (const auto item : recs) {
      hits += std::count(data.truth_items[u].begin(), data.truth_items[u].end(),
                         item) > 0;
    }
    const double r =
        static_cast<double>(hits) / static_cast<double>(data.truth_items[u].size());
    recall_sum += r;
    ++scored;
    if (detail_file) {
      detail_file << lg.graph.node_name(lg.user_type, u) << '\t' << r;
      char sep = '\t';
      for (const auto item : recs) {
        detail_file << sep << lg.graph.node_name(lg.item_type, item);
        sep = ' ';
      }
      detail_file << '\n';
    }
  }
  const double recall = scored ? recall_sum / static_cast<double>(scored) : 0.0;
  const char* strat = cfg.strategy == RecallStrategy::Icf   ? "icf"
                      : cfg.strategy == RecallStrategy::Ucf ? "ucf"
                                                            : "u2i";
  std::ofstream report_file;
  std::ostream* report = &out;
  if (!report_path.empty()) {
    report_file.open(report_path);
    if (!report_file) throw IoError("cannot write \"" + report_path + "\"");
    report = &report_file;
  }
  *report << strat << '\t' << cfg.eval_k << '\t' << recall << '\n';
  return 0;
}

int cmd_dump_embeddings(const RunConfig& cfg, const std::string& checkpoint,
                        const std::string& out_path, std::ostream& out) {
  const LoadedGraph lg = load_graph(cfg, /*split_interactions=*/true);
  const Embeddings e = compute_embeddings(cfg, lg, checkpoint);
  std::ofstream file;
  std::ostream* os = &out;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw IoError("cannot write \"" + out_path + "\"");
    os = &file;
  }
  auto dump_type = [&](std::uint32_t type, const MatX<float>& m) {
    for (std::uint64_t v = 0; v < lg.graph.num_nodes(type); ++v) {
      *os << lg.graph.node_name(type, v);
      char sep = '\t';
      for (Eigen::Index j = 0; j < m.rows(); ++j) {
        *os << sep << m(j, static_cast<Eigen::Index>(v));
        sep = ' ';
      }
      *os << '\n';
    }
  };
  dump_type(lg.user_type, e.users);
  if (lg.item_type != lg.user_type) dump_type(lg.item_type, e.items);
  return 0;
}

int cmd_serve_shard(const RunConfig& cfg, std::uint32_t index,
                    const std::string& out_path, std::ostream& out) {
  if (cfg.endpoints.empty()) {
    throw ConfigError("serve-shard needs ps.endpoints");
  }
  if (index >= cfg.endpoints.size()) {
    throw ConfigError("shard index out of range");
  }
  const auto [host, port] = parse_endpoint(cfg.endpoints[index]);
  auto table = std::make_shared<EmbeddingTable>(
      TableConfig{cfg.dim, cfg.seed, SparseOpt::Sgd});
  ShardServer server(table, host, port);
  out << "listening\t" << host << ':' << server.port() << std::endl;
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  if (!out_path.empty()) {
    const std::uint64_t n = table->save(out_path);
    out << "checkpoint\t" << out_path << "\tkeys\t" << n << std::endl;
  }
  out << "stopped\tsignal\t" << sig << std::endl;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"heterogeneous graph embedding engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path = "model.ckpt";
  std::string metrics_path;
  std::string report_path;
  std::string dump_path;
  std::string walks_path;
  std::string checkpoint;
  std::uint32_t shard_index = 0;
  bool no_holdout = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "configuration file")
        ->required();
    cmd->add_option("--set", overrides, "override: key=value (repeatable)");
  };

  auto* ingest = app.add_subcommand("ingest", "build and validate the graph");
  add_common(ingest);
  auto* train = app.add_subcommand("train", "run the training pipeline");
  add_common(train);
  train->add_option("--out", out_path, "checkpoint output path");
  train->add_option("--metrics", metrics_path, "metrics log path");
  train->add_option("--dump-walks", walks_path, "debug-dump one walk epoch");
  train->add_flag("--no-holdout", no_holdout,
                  "train on all interactions without a temporal split");
  auto* evaluate = app.add_subcommand("evaluate", "recall over the test window");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  evaluate->add_option("--report", report_path, "report output path");
  std::string detail_path;
  evaluate->add_option("--detail", detail_path, "per-user detail output path");
  auto* dump = app.add_subcommand("dump-embeddings", "write embeddings as text");
  add_common(dump);
  dump->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  dump->add_option("--out", dump_path, "output path");
  auto* serve = app.add_subcommand("serve-shard", "serve one parameter shard");
  add_common(serve);
  serve->add_option("--index", shard_index, "shard index into ps.endpoints");
  serve->add_option("--out", dump_path, "checkpoint path written on shutdown");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage_error: " << e.what() << '\n';
    return 2;
  }

  try {
    RunConfig cfg = RunConfig::from_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("--set expects key=value, got \"" + kv + "\"");
      }
      cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    if (*ingest) return cmd_ingest(cfg, out);
    if (*train) {
      return cmd_train(cfg, out_path, metrics_path, walks_path, no_holdout, out);
    }
    if (*evaluate) {
      return cmd_evaluate(cfg, checkpoint, report_path, detail_path, out);
    }
    if (*dump) return cmd_dump_embeddings(cfg, checkpoint, dump_path, out);
    if (*serve) return cmd_serve_shard(cfg, shard_index, dump_path, out);
    err << "usage_error: no command\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config_error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "parse_error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "data_error: " << e.what() << '\n';
    return 4;
  } catch (const IoError& e) {
    err << "io_error: " << e.what() << '\n';
    return 5;
  } catch (const TransportError& e) {
    err << "transport_error: " << e.what() << '\n';
    return 6;
  } catch (const std::exception& e) {
    err << "internal_error: " << e.what() << '\n';
    return 10;
  }
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv + 1, argv + argc), std::cout,
             std::cerr);
}

}  // namespace recgraph::cli
