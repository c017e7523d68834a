#include "recgraph/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace recgraph {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects an unsigned integer, got \"" + value + "\"");
  }
}

std::uint32_t parse_u32(const std::string& key, const std::string& value) {
  const auto v = parse_u64(key, value);
  if (v > 0xffffffffull) throw ConfigError(key + " is out of range");
  return static_cast<std::uint32_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects a number, got \"" + value + "\"");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + " expects true/false, got \"" + value + "\"");
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config \"" + path + "\"");
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    cfg.apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "graph.schema") {
    schema = value;
  } else if (key == "graph.edges_path") {
    edges_path = value;
  } else if (key == "graph.side_info_path") {
    side_info_path = value;
  } else if (key == "walk.metapaths") {
    metapaths = value;
  } else if (key == "walk.len") {
    walk_len = parse_u32(key, value);
  } else if (key == "walk.per_node") {
    walks_per_node = parse_u32(key, value);
  } else if (key == "pipeline.win_size") {
    win_size = parse_u32(key, value);
  } else if (key == "pipeline.fanouts") {
    fanouts.clear();
    for (const auto& f : split_list(value)) fanouts.push_back(parse_u32(key, f));
  } else if (key == "pipeline.order") {
    if (value == "pair_first") {
      order = PipelineOrder::PairFirst;
    } else if (value == "ego_first") {
      order = PipelineOrder::EgoFirst;
    } else {
      throw ConfigError("pipeline.order must be pair_first or ego_first");
    }
  } else if (key == "pipeline.batch_size") {
    batch_size = parse_u32(key, value);
  } else if (key == "model.kind") {
    if (value == "walk_only") {
      model_kind = ModelKind::WalkOnly;
    } else if (value == "lightgcn") {
      model_kind = ModelKind::LightGcn;
    } else if (value == "sage_mean") {
      model_kind = ModelKind::SageMean;
    } else if (value == "sage_sum") {
      model_kind = ModelKind::SageSum;
    } else {
      throw ConfigError(
          "model.kind must be walk_only, lightgcn, sage_mean or sage_sum");
    }
  } else if (key == "model.layers") {
    layers = parse_u32(key, value);
  } else if (key == "model.dim") {
    dim = parse_u32(key, value);
  } else if (key == "model.alpha") {
    alpha = parse_double(key, value);
  } else if (key == "model.phi") {
    if (value == "uniform") {
      phi = PhiMode::Uniform;
    } else if (value == "attention") {
      phi = PhiMode::Attention;
    } else {
      throw ConfigError("model.phi must be uniform or attention");
    }
  } else if (key == "model.side_info") {
    side_info = parse_bool(key, value);
  } else if (key == "train.neg_mode") {
    if (value == "random") {
      neg_mode = NegMode::Random;
    } else if (value == "in_batch") {
      neg_mode = NegMode::InBatch;
    } else {
      throw ConfigError("train.neg_mode must be random or in_batch");
    }
  } else if (key == "train.neg_num") {
    neg_num = parse_u32(key, value);
  } else if (key == "train.neg_dist") {
    if (value == "uniform") {
      neg_dist = NegDist::Uniform;
    } else if (value == "degree075") {
      neg_dist = NegDist::Degree075;
    } else {
      throw ConfigError("train.neg_dist must be uniform or degree075");
    }
  } else if (key == "train.pair_budget") {
    pair_budget = parse_u64(key, value);
  } else if (key == "train.sparse_lr") {
    sparse_lr = static_cast<float>(parse_double(key, value));
  } else if (key == "train.warm_start_path") {
    warm_start_path = value;
  } else if (key == "train.seed") {
    seed = parse_u64(key, value);
  } else if (key == "train.workers") {
    workers = parse_u32(key, value);
  } else if (key == "ps.shards") {
    shards = parse_u32(key, value);
  } else if (key == "ps.endpoints") {
    endpoints = split_list(value);
  } else if (key == "eval.strategy") {
    if (value == "icf") {
      strategy = RecallStrategy::Icf;
    } else if (value == "ucf") {
      strategy = RecallStrategy::Ucf;
    } else if (value == "u2i") {
      strategy = RecallStrategy::U2i;
    } else {
      throw ConfigError("eval.strategy must be icf, ucf or u2i");
    }
  } else if (key == "eval.N") {
    eval_n = parse_u32(key, value);
  } else if (key == "eval.K") {
    eval_k = parse_u32(key, value);
  } else {
    throw ConfigError("unknown config key \"" + key + "\"");
  }
}

void RunConfig::validate() const {
  if (walk_len < 1) throw ConfigError("walk.len must be >= 1");
  if (walks_per_node < 1) throw ConfigError("walk.per_node must be >= 1");
  if (win_size < 1) throw ConfigError("pipeline.win_size must be >= 1");
  if (batch_size < 1) throw ConfigError("pipeline.batch_size must be >= 1");
  if (dim < 1) throw ConfigError("model.dim must be >= 1");
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("model.alpha must lie in [0, 1]");
  }
  if (neg_num < 1) throw ConfigError("train.neg_num must be >= 1");
  if (neg_mode == NegMode::InBatch) {
    if (batch_size < 2) {
      throw ConfigError("in_batch negatives need pipeline.batch_size >= 2");
    }
    if (neg_num > batch_size - 1) {
      throw ConfigError("train.neg_num must be <= pipeline.batch_size - 1 "
                        "for in_batch negatives");
    }
  }
  if (model_kind != ModelKind::WalkOnly) {
    if (layers < 1) throw ConfigError("model.layers must be >= 1 for GNN models");
    if (fanouts.empty()) throw ConfigError("pipeline.fanouts must be non-empty");
    if (fanouts.size() < layers) {
      throw ConfigError("pipeline.fanouts must list at least model.layers hops");
    }
    for (auto f : fanouts) {
      if (f < 1) throw ConfigError("pipeline.fanouts entries must be >= 1");
    }
  }
  if (shards < 1) throw ConfigError("ps.shards must be >= 1");
  if (!endpoints.empty() && endpoints.size() != shards) {
    throw ConfigError("ps.endpoints must list exactly ps.shards endpoints");
  }
  if (workers < 1) throw ConfigError("train.workers must be >= 1");
  if (eval_n < 1) throw ConfigError("eval.N must be >= 1");
  if (eval_k < 1) throw ConfigError("eval.K must be >= 1");
}

std::vector<std::pair<std::string, bool>> RunConfig::schema_entries() const {
  std::vector<std::pair<std::string, bool>> out;
  for (auto entry : split_list(schema)) {
    bool sym = false;
    const auto colon = entry.rfind(":sym");
    if (colon != std::string::npos && colon + 4 == entry.size()) {
      sym = true;
      entry = entry.substr(0, colon);
    }
    out.emplace_back(trim(entry), sym);
  }
  return out;
}

std::vector<std::string> RunConfig::metapath_specs() const {
  return split_list(metapaths);
}

void RunConfig::echo(std::ostream& os) const {
  auto order_str = order == PipelineOrder::PairFirst ? "pair_first" : "ego_first";
  const char* kind_str = "walk_only";
  switch (model_kind) {
    case ModelKind::WalkOnly: kind_str = "walk_only"; break;
    case ModelKind::LightGcn: kind_str = "lightgcn"; break;
    case ModelKind::SageMean: kind_str = "sage_mean"; break;
    case ModelKind::SageSum: kind_str = "sage_sum"; break;
  }
  const char* strat_str = "u2i";
  switch (strategy) {
    case RecallStrategy::Icf: strat_str = "icf"; break;
    case RecallStrategy::Ucf: strat_str = "ucf"; break;
    case RecallStrategy::U2i: strat_str = "u2i"; break;
  }
  std::string fan;
  for (std::size_t i = 0; i < fanouts.size(); ++i) {
    if (i) fan += ",";
    fan += std::to_string(fanouts[i]);
  }
  std::string eps;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    if (i) eps += ",";
    eps += endpoints[i];
  }
  os << "graph.schema = " << schema << '\n'
     << "graph.edges_path = " << edges_path << '\n'
     << "graph.side_info_path = " << side_info_path << '\n'
     << "walk.metapaths = " << metapaths << '\n'
     << "walk.len = " << walk_len << '\n'
     << "walk.per_node = " << walks_per_node << '\n'
     << "pipeline.win_size = " << win_size << '\n'
     << "pipeline.fanouts = " << fan << '\n'
     << "pipeline.order = " << order_str << '\n'
     << "pipeline.batch_size = " << batch_size << '\n'
     << "model.kind = " << kind_str << '\n'
     << "model.layers = " << layers << '\n'
     << "model.dim = " << dim << '\n'
     << "model.alpha = " << alpha << '\n'
     << "model.phi = " << (phi == PhiMode::Uniform ? "uniform" : "attention") << '\n'
     << "model.side_info = " << (side_info ? "true" : "false") << '\n'
     << "train.neg_mode = "
     << (neg_mode == NegMode::Random ? "random" : "in_batch") << '\n'
     << "train.neg_num = " << neg_num << '\n'
     << "train.neg_dist = "
     << (neg_dist == NegDist::Uniform ? "uniform" : "degree075") << '\n'
     << "train.pair_budget = " << pair_budget << '\n'
     << "train.sparse_lr = " << sparse_lr << '\n'
     << "train.warm_start_path = " << warm_start_path << '\n'
     << "train.seed = " << seed << '\n'
     << "train.workers = " << workers << '\n'
     << "ps.shards = " << shards << '\n'
     << "ps.endpoints = " << eps << '\n'
     << "eval.strategy = " << strat_str << '\n'
     << "eval.N = " << eval_n << '\n'
     << "eval.K = " << eval_k << '\n';
}

}  // namespace recgraph
