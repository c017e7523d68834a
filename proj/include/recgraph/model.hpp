#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "recgraph/common.hpp"
#include "recgraph/ego.hpp"
#include "recgraph/graph.hpp"
#include "recgraph/rng.hpp"

namespace recgraph {

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

enum class ModelKind { WalkOnly, LightGcn, SageMean, SageSum };
enum class PhiMode { Uniform, Attention };

struct ModelConfig {
  ModelKind kind = ModelKind::WalkOnly;
  std::uint32_t layers = 2;  // K; ignored for WalkOnly
  std::uint32_t dim = 64;
  double alpha = 0.5;  // residual weight on h0
  PhiMode phi = PhiMode::Uniform;
  bool use_side_info = false;
  std::uint32_t num_relations = 0;

  bool is_gnn() const { return kind != ModelKind::WalkOnly; }
};

// Per-(relation, layer) COMBINE weights for the Sage aggregators. LightGCN
// carries no dense parameters.
template <class S>
struct SageLayerParams {
  MatX<S> w_self;
  MatX<S> w_neigh;
  VecX<S> bias;
};

// Shallow attention scorer shared across relations within one layer:
// logit_r = v . tanh(w * h_{v,r}).
template <class S>
struct AttnLayerParams {
  MatX<S> w;
  VecX<S> v;
};

template <class S>
struct DenseParams {
  std::vector<std::vector<SageLayerParams<S>>> sage;  // [relation][layer-1]
  std::vector<AttnLayerParams<S>> attn;               // [layer-1]

  static DenseParams shaped(const ModelConfig& cfg) {
    DenseParams p;
    const auto d = static_cast<Eigen::Index>(cfg.dim);
    if (cfg.kind == ModelKind::SageMean || cfg.kind == ModelKind::SageSum) {
      p.sage.resize(cfg.num_relations);
      for (auto& layers : p.sage) {
        layers.resize(cfg.layers);
        for (auto& l : layers) {
          l.w_self = MatX<S>::Zero(d, d);
          l.w_neigh = MatX<S>::Zero(d, d);
          l.bias = VecX<S>::Zero(d);
        }
      }
    }
    if (cfg.is_gnn() && cfg.phi == PhiMode::Attention) {
      p.attn.resize(cfg.layers);
      for (auto& a : p.attn) {
        a.w = MatX<S>::Zero(d, d);
        a.v = VecX<S>::Zero(d);
      }
    }
    return p;
  }

  static DenseParams glorot(const ModelConfig& cfg, std::uint64_t seed) {
    DenseParams p = shaped(cfg);
    Rng rng(hash_mix({seed, 0x64656e7365ull}));
    const double scale = std::sqrt(3.0 / cfg.dim);
    auto fill = [&](MatX<S>& m, double s) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          m(r, c) = static_cast<S>((rng.uniform() * 2.0 - 1.0) * s);
        }
      }
    };
    for (auto& layers : p.sage) {
      for (auto& l : layers) {
        fill(l.w_self, scale);
        fill(l.w_neigh, scale);
      }
    }
    for (auto& a : p.attn) {
      fill(a.w, scale);
      VecX<S> v(a.v.size());
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = static_cast<S>((rng.uniform() * 2.0 - 1.0) * 0.1);
      }
      a.v = v;
    }
    return p;
  }

  void set_zero() {
    for (auto& layers : sage) {
      for (auto& l : layers) {
        l.w_self.setZero();
        l.w_neigh.setZero();
        l.bias.setZero();
      }
    }
    for (auto& a : attn) {
      a.w.setZero();
      a.v.setZero();
    }
  }
};

// --- node feature composition ----------------------------------------------

// Parameter keys feeding one node's base embedding h0: the node id key plus
// the value keys of each side-info slot.
struct NodeFeatureSpec {
  std::uint64_t id_key = 0;
  std::vector<std::pair<std::uint32_t, std::vector<std::uint64_t>>> slots;
};

inline NodeFeatureSpec feature_spec(const HetGraph& g, NodeKey node,
                                    bool use_side_info) {
  NodeFeatureSpec spec;
  spec.id_key = node;
  if (use_side_info && g.has_side_info()) {
    for (const auto& sv : g.side_info(node_key_type(node), node_key_index(node))) {
      std::vector<std::uint64_t> keys;
      keys.reserve(sv.values.size());
      for (auto v : sv.values) keys.push_back(slot_value_key(sv.slot, v));
      spec.slots.emplace_back(sv.slot, std::move(keys));
    }
  }
  return spec;
}

// h0 = id vector + sum over slots of mean(value vectors within the slot).
// Lookup maps a parameter key to its pulled vector.
template <class S, class Lookup>
VecX<S> base_embedding(const NodeFeatureSpec& spec, Lookup&& vec_of) {
  VecX<S> h = vec_of(spec.id_key);
  for (const auto& [slot, keys] : spec.slots) {
    if (keys.empty()) continue;
    VecX<S> mean = VecX<S>::Zero(h.size());
    for (auto k : keys) mean += vec_of(k);
    h += mean / static_cast<S>(keys.size());
  }
  return h;
}

// Routes a gradient on h0 back to its parameter keys; Accum receives
// (key, coefficient) with coefficient 1 for the id and 1/|values| per slot
// value.
template <class Accum>
void scatter_base_gradient(const NodeFeatureSpec& spec, Accum&& add) {
  add(spec.id_key, 1.0);
  for (const auto& [slot, keys] : spec.slots) {
    if (keys.empty()) continue;
    const double coeff = 1.0 / static_cast<double>(keys.size());
    for (auto k : keys) add(k, coeff);
  }
}

// --- single-node operations (contract surface, also used by tests) ---------

// h_{v,r}^k for one node. LightGCN: plain mean of neighbor vectors (zero
// vector when there are none). Sage: ReLU(W_self h + W_neigh AGG + bias)
// with AGG in {mean, sum} and AGG(empty) = 0.
template <class S>
VecX<S> relation_layer(ModelKind kind, const VecX<S>& h_center,
                       const std::vector<VecX<S>>& h_neighbors,
                       const SageLayerParams<S>* params) {
  const auto d = h_center.size();
  VecX<S> agg = VecX<S>::Zero(d);
  for (const auto& n : h_neighbors) agg += n;
  switch (kind) {
    case ModelKind::LightGcn:
      if (!h_neighbors.empty()) agg /= static_cast<S>(h_neighbors.size());
      return agg;
    case ModelKind::SageMean:
      if (!h_neighbors.empty()) agg /= static_cast<S>(h_neighbors.size());
      break;
    case ModelKind::SageSum:
      break;
    default:
      throw ConfigError("relation_layer: not a GNN model");
  }
  VecX<S> z = params->w_self * h_center + params->w_neigh * agg + params->bias;
  return z.cwiseMax(S(0));
}

// Eq-style combination h = alpha h0 + (1 - alpha) sum_r phi_r h_{v,r}.
// Uniform keeps phi_r = 1; Attention computes
// phi = softmax_r(v . tanh(w h_{v,r})).
template <class S>
VecX<S> relation_combine(const VecX<S>& h0,
                         const std::vector<VecX<S>>& per_relation, S alpha,
                         PhiMode phi_mode, const AttnLayerParams<S>* attn,
                         VecX<S>* phis_out = nullptr) {
  VecX<S> acc = VecX<S>::Zero(h0.size());
  VecX<S> phis;
  if (phi_mode == PhiMode::Uniform) {
    phis = VecX<S>::Ones(static_cast<Eigen::Index>(per_relation.size()));
    for (const auto& h : per_relation) acc += h;
  } else {
    const auto nrel = static_cast<Eigen::Index>(per_relation.size());
    VecX<S> logits(nrel);
    for (Eigen::Index r = 0; r < nrel; ++r) {
      logits(r) = attn->v.dot((attn->w * per_relation[r]).array().tanh().matrix());
    }
    const S m = logits.maxCoeff();
    phis = (logits.array() - m).exp();
    phis /= phis.sum();
    for (Eigen::Index r = 0; r < nrel; ++r) acc += phis(r) * per_relation[r];
  }
  if (phis_out) *phis_out = phis;
  return alpha * h0 + (S(1) - alpha) * acc;
}

// --- ego-batched forward / backward -----------------------------------------

// Retained intermediates of one ego forward. Positions are ordered by hop,
// so round k touches the column prefix of size active[k].
template <class S>
struct EgoWorkspace {
  struct RelRound {
    MatX<S> agg;          // aggregated neighbor input per position
    MatX<S> z;            // Sage preactivation
    MatX<S> hvr;          // relation output h_{v,r}^k
    MatX<S> tanh_t;       // attention tanh(w hvr)
    std::vector<S> cnt;   // neighbor count per position
  };
  std::vector<std::uint32_t> active;       // active[k], k = 0..K
  std::vector<MatX<S>> h;                  // h[k]: dim x active[k]
  std::vector<std::vector<RelRound>> rel;  // [k-1][r]
  std::vector<MatX<S>> phi;                // [k-1]: R x active[k]
};

// Computes the center's K-layer representation bottom-up over the sampled
// layers. h0 holds the base embedding of every ego position (dim x P).
template <class S>
VecX<S> forward_ego(const EgoGraph& ego, const ModelConfig& cfg,
                    const DenseParams<S>& params, const MatX<S>& h0,
                    EgoWorkspace<S>& ws) {
  if (cfg.kind == ModelKind::WalkOnly) return h0.col(0);
  const std::uint32_t K = cfg.layers;
  if (ego.depth < K) {
    throw DataError("ego depth is smaller than the model layer count");
  }
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const std::uint32_t R = cfg.num_relations;
  const S alpha = static_cast<S>(cfg.alpha);

  ws.active.assign(K + 1, 0);
  for (std::uint32_t k = 0; k <= K; ++k) ws.active[k] = ego.active_count(K - k);
  ws.h.resize(K + 1);
  ws.rel.assign(K, std::vector<typename EgoWorkspace<S>::RelRound>(R));
  ws.phi.assign(K, MatX<S>());

  ws.h[0] = h0.leftCols(ws.active[0]);
  for (std::uint32_t k = 1; k <= K; ++k) {
    const std::uint32_t np = ws.active[k];
    const MatX<S>& hp = ws.h[k - 1];
    MatX<S>& hk = ws.h[k];
    hk = alpha * h0.leftCols(np);
    MatX<S> sum_rel = MatX<S>::Zero(d, np);
    MatX<S>* logits = nullptr;
    MatX<S> logit_buf;
    if (cfg.phi == PhiMode::Attention) {
      logit_buf = MatX<S>::Zero(R, np);
      logits = &logit_buf;
    }
    for (std::uint32_t r = 0; r < R; ++r) {
      auto& rr = ws.rel[k - 1][r];
      rr.agg = MatX<S>::Zero(d, np);
      rr.cnt.assign(np, S(0));
      // Children of a position active at round k live one hop deeper and are
      // active at round k-1, so h[k-1] covers them.
      for (std::uint32_t hop = 0; hop + 1 <= ego.depth && hop < K - k + 1; ++hop) {
        for (const auto& e : ego.edges[r][hop]) {
          if (e.parent >= np) break;  // positions are hop-ordered
          rr.agg.col(e.parent) += hp.col(e.child);
          rr.cnt[e.parent] += S(1);
        }
      }
      if (cfg.kind == ModelKind::LightGcn || cfg.kind == ModelKind::SageMean) {
        for (std::uint32_t p = 0; p < np; ++p) {
          if (rr.cnt[p] > S(0)) rr.agg.col(p) /= rr.cnt[p];
        }
      }
      if (cfg.kind == ModelKind::LightGcn) {
        rr.hvr = rr.agg;
      } else {
        const auto& sp = params.sage[r][k - 1];
        rr.z = sp.w_self * hp.leftCols(np) + sp.w_neigh * rr.agg;
        rr.z.colwise() += sp.bias;
        rr.hvr = rr.z.cwiseMax(S(0));
      }
      if (cfg.phi == PhiMode::Uniform) {
        sum_rel += rr.hvr;
      } else {
        const auto& ap = params.attn[k - 1];
        rr.tanh_t = (ap.w * rr.hvr).array().tanh().matrix();
        logits->row(r) = ap.v.transpose() * rr.tanh_t;
      }
    }
    if (cfg.phi == PhiMode::Attention) {
      MatX<S>& phi = ws.phi[k - 1];
      phi = *logits;
      for (std::uint32_t p = 0; p < np; ++p) {
        const S m = phi.col(p).maxCoeff();
        phi.col(p) = (phi.col(p).array() - m).exp().matrix();
        phi.col(p) /= phi.col(p).sum();
      }
      for (std::uint32_t r = 0; r < R; ++r) {
        sum_rel += ws.rel[k - 1][r].hvr * phi.row(r).asDiagonal();
      }
    }
    hk += (S(1) - alpha) * sum_rel;
  }
  return ws.h[K].col(0);
}

// Exact reverse-mode gradients of forward_ego. g_out is dL/dh_center;
// gradients on the base embeddings accumulate into gh0 (dim x P) and dense
// gradients into gparams. ReLU subgradient at 0 is 0.
template <class S>
void backward_ego(const EgoGraph& ego, const ModelConfig& cfg,
                  const DenseParams<S>& params, const MatX<S>& h0,
                  const EgoWorkspace<S>& ws, const VecX<S>& g_out,
                  MatX<S>& gh0, DenseParams<S>& gparams) {
  if (gh0.rows() != h0.rows() || gh0.cols() != h0.cols()) {
    gh0 = MatX<S>::Zero(h0.rows(), h0.cols());
  }
  if (cfg.kind == ModelKind::WalkOnly) {
    gh0.col(0) += g_out;
    return;
  }
  const std::uint32_t K = cfg.layers;
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const std::uint32_t R = cfg.num_relations;
  const S alpha = static_cast<S>(cfg.alpha);

  std::vector<MatX<S>> gh(K + 1);
  for (std::uint32_t k = 0; k <= K; ++k) gh[k] = MatX<S>::Zero(d, ws.active[k]);
  gh[K].col(0) = g_out;

  MatX<S> ghvr;
  for (std::uint32_t k = K; k >= 1; --k) {
    const std::uint32_t np = ws.active[k];
    const MatX<S>& hp = ws.h[k - 1];
    gh0.leftCols(np) += alpha * gh[k];
    for (std::uint32_t r = 0; r < R; ++r) {
      const auto& rr = ws.rel[k - 1][r];
      if (cfg.phi == PhiMode::Uniform) {
        ghvr = (S(1) - alpha) * gh[k];
      } else {
        const MatX<S>& phi = ws.phi[k - 1];
        const auto& ap = params.attn[k - 1];
        auto& gap = gparams.attn[k - 1];
        ghvr = (S(1) - alpha) * (gh[k] * phi.row(r).asDiagonal());
        // Softmax backward needs all relations' dphi; do it per position.
        for (std::uint32_t p = 0; p < np; ++p) {
          // dphi_s = (1-alpha) g . hvr_s; dlogit_r = phi_r (dphi_r - sum_s phi_s dphi_s)
          S dot_sum = S(0);
          VecX<S> dphi(R);
          for (std::uint32_t s = 0; s < R; ++s) {
            dphi(s) = (S(1) - alpha) *
                      gh[k].col(p).dot(ws.rel[k - 1][s].hvr.col(p));
            dot_sum += phi(s, p) * dphi(s);
          }
          const S dlogit = phi(r, p) * (dphi(r) - dot_sum);
          if (dlogit != S(0)) {
            gap.v += dlogit * rr.tanh_t.col(p);
            const VecX<S> gpre =
                (dlogit * ap.v.array() * (S(1) - rr.tanh_t.col(p).array().square()))
                    .matrix();
            gap.w += gpre * rr.hvr.col(p).transpose();
            ghvr.col(p) += ap.w.transpose() * gpre;
          }
        }
      }
      // Through the relation layer into neighbors (and self for Sage).
      MatX<S> gagg;
      if (cfg.kind == ModelKind::LightGcn) {
        gagg = std::move(ghvr);
      } else {
        const auto& sp = params.sage[r][k - 1];
        auto& gsp = gparams.sage[r][k - 1];
        const MatX<S> gz =
            ((rr.z.array() > S(0)).template cast<S>() * ghvr.array()).matrix();
        gsp.w_self += gz * hp.leftCols(np).transpose();
        gsp.w_neigh += gz * rr.agg.transpose();
        gsp.bias += gz.rowwise().sum();
        gh[k - 1].leftCols(np) += sp.w_self.transpose() * gz;
        gagg = sp.w_neigh.transpose() * gz;
      }
      const bool mean_agg =
          cfg.kind == ModelKind::LightGcn || cfg.kind == ModelKind::SageMean;
      for (std::uint32_t hop = 0; hop + 1 <= ego.depth && hop < K - k + 1; ++hop) {
        for (const auto& e : ego.edges[r][hop]) {
          if (e.parent >= np) break;
          if (mean_agg) {
            gh[k - 1].col(e.child) += gagg.col(e.parent) / rr.cnt[e.parent];
          } else {
            gh[k - 1].col(e.child) += gagg.col(e.parent);
          }
        }
      }
    }
  }
  gh0.leftCols(ws.active[0]) += gh[0];
}

// --- dense parameter checkpoint records --------------------------------------
// Dense matrices share the sparse checkpoint file format: each matrix row is
// one (key, dim floats) record in the reserved dense key region.

template <class S>
void append_dense_entries(
    const ModelConfig& cfg, const DenseParams<S>& p,
    std::vector<std::pair<std::uint64_t, std::vector<float>>>& out) {
  auto put_row = [&](std::uint64_t key, const auto& row) {
    std::vector<float> v(cfg.dim, 0.0f);
    for (Eigen::Index i = 0; i < row.size() && i < static_cast<Eigen::Index>(cfg.dim); ++i) {
      v[static_cast<std::size_t>(i)] = static_cast<float>(row(i));
    }
    out.emplace_back(key, std::move(v));
  };
  for (std::uint32_t r = 0; r < p.sage.size(); ++r) {
    for (std::uint32_t k = 0; k < p.sage[r].size(); ++k) {
      const auto& l = p.sage[r][k];
      for (Eigen::Index row = 0; row < l.w_self.rows(); ++row) {
        put_row(dense_param_key(r, k, DenseKind::SageSelf, row),
                l.w_self.row(row).transpose());
        put_row(dense_param_key(r, k, DenseKind::SageNeigh, row),
                l.w_neigh.row(row).transpose());
      }
      put_row(dense_param_key(r, k, DenseKind::SageBias, 0), l.bias);
    }
  }
  for (std::uint32_t k = 0; k < p.attn.size(); ++k) {
    for (Eigen::Index row = 0; row < p.attn[k].w.rows(); ++row) {
      put_row(dense_param_key(0, k, DenseKind::AttnW, row),
              p.attn[k].w.row(row).transpose());
    }
    put_row(dense_param_key(0, k, DenseKind::Attnw, 0), p.attn[k].v);
  }
}

// Fills a shaped DenseParams from checkpoint records, ignoring non-dense
// keys; returns the number of records consumed.
template <class S>
std::size_t load_dense_entries(
    const ModelConfig& cfg,
    const std::vector<std::pair<std::uint64_t, std::vector<float>>>& entries,
    DenseParams<S>& p) {
  std::size_t used = 0;
  for (const auto& [key, vec] : entries) {
    if (!is_dense_key(key)) continue;
    const DenseKeyParts parts = dense_key_parts(key);
    auto row_of = [&](auto& m) {
      for (Eigen::Index i = 0; i < m.cols(); ++i) {
        m(static_cast<Eigen::Index>(parts.row), i) = static_cast<S>(vec[i]);
      }
    };
    auto vec_of = [&](auto& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<S>(vec[i]);
    };
    switch (parts.kind) {
      case DenseKind::SageSelf:
        if (parts.relation < p.sage.size() && parts.layer < p.sage[parts.relation].size()) {
          row_of(p.sage[parts.relation][parts.layer].w_self);
          ++used;
        }
        break;
      case DenseKind::SageNeigh:
        if (parts.relation < p.sage.size() && parts.layer < p.sage[parts.relation].size()) {
          row_of(p.sage[parts.relation][parts.layer].w_neigh);
          ++used;
        }
        break;
      case DenseKind::SageBias:
        if (parts.relation < p.sage.size() && parts.layer < p.sage[parts.relation].size()) {
          vec_of(p.sage[parts.relation][parts.layer].bias);
          ++used;
        }
        break;
      case DenseKind::AttnW:
        if (parts.layer < p.attn.size()) {
          row_of(p.attn[parts.layer].w);
          ++used;
        }
        break;
      case DenseKind::Attnw:
        if (parts.layer < p.attn.size()) {
          vec_of(p.attn[parts.layer].v);
          ++used;
        }
        break;
    }
  }
  (void)cfg;
  return used;
}


}  // namespace recgraph
