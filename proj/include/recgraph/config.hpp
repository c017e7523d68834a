#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "recgraph/eval.hpp"
#include "recgraph/model.hpp"
#include "recgraph/pipeline.hpp"
#include "recgraph/trainer.hpp"

namespace recgraph {

// Flat dotted-key configuration: one `key = value` per line, '#' comments.
// Unknown keys are rejected. Every field has the default echoed by
// RunConfig::echo, so a run is reproducible from its log.
struct RunConfig {
  // graph.*
  std::string schema;          // comma list of edge-type specs, ":sym" suffix
  std::string edges_path;
  std::string side_info_path;
  // walk.*
  std::string metapaths;       // comma list of metapath specs
  std::uint32_t walk_len = 4;
  std::uint32_t walks_per_node = 5;
  // pipeline.*
  std::uint32_t win_size = 2;
  std::vector<std::uint32_t> fanouts = {10, 10};
  PipelineOrder order = PipelineOrder::EgoFirst;
  std::uint32_t batch_size = 1000;
  // model.*
  ModelKind model_kind = ModelKind::WalkOnly;
  std::uint32_t layers = 2;
  std::uint32_t dim = 64;
  double alpha = 0.5;
  PhiMode phi = PhiMode::Uniform;
  bool side_info = false;
  // train.*
  NegMode neg_mode = NegMode::InBatch;
  std::uint32_t neg_num = 5;
  NegDist neg_dist = NegDist::Uniform;
  std::uint64_t pair_budget = 1000000;
  float sparse_lr = 0.1f;
  std::string warm_start_path;
  std::uint64_t seed = 1;
  std::uint32_t workers = 1;
  // ps.*
  std::uint32_t shards = 1;
  std::vector<std::string> endpoints;
  // eval.*
  RecallStrategy strategy = RecallStrategy::U2i;
  std::uint32_t eval_n = 20;
  std::uint32_t eval_k = 50;

  static RunConfig from_file(const std::string& path);
  void apply(const std::string& key, const std::string& value);
  void validate() const;
  void echo(std::ostream& os) const;

  std::vector<std::pair<std::string, bool>> schema_entries() const;
  std::vector<std::string> metapath_specs() const;
};

}  // namespace recgraph
