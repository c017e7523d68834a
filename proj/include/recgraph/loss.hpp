#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recgraph/common.hpp"
#include "recgraph/model.hpp"
#include "recgraph/rng.hpp"

namespace recgraph {

template <class S>
S score(const VecX<S>& h_v, const VecX<S>& h_u) {
  if (h_v.size() != h_u.size()) throw DataError("score: dimension mismatch");
  return h_v.dot(h_u);
}

// log(sigmoid(z)) in the overflow-free log1p form.
template <class S>
S log_sigmoid(S z) {
  if (z >= S(0)) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

template <class S>
S sigmoid(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

template <class S>
struct ExplicitLossResult {
  S loss = S(0);
  VecX<S> g_v;     // d
  VecX<S> g_u;     // d
  MatX<S> g_neg;   // d x M
};

// L = -log sigma(h_v . h_u) - sum_m log sigma(-(h_{w_m} . h_u)) with exact
// gradients for all inputs.
template <class S>
ExplicitLossResult<S> loss_explicit(const VecX<S>& h_v, const VecX<S>& h_u,
                                    const MatX<S>& negatives) {
  ExplicitLossResult<S> out;
  const S y_pos = h_v.dot(h_u);
  out.loss = -log_sigmoid(y_pos);
  const S gd_pos = -sigmoid(-y_pos);  // dL/dy_pos
  out.g_v = gd_pos * h_u;
  out.g_u = gd_pos * h_v;
  out.g_neg = MatX<S>::Zero(h_v.size(), negatives.cols());
  for (Eigen::Index m = 0; m < negatives.cols(); ++m) {
    const S y_neg = negatives.col(m).dot(h_u);
    out.loss -= log_sigmoid(-y_neg);
    const S gd_neg = sigmoid(y_neg);  // dL/dy_neg
    out.g_neg.col(m) = gd_neg * h_u;
    out.g_u += gd_neg * negatives.col(m);
  }
  return out;
}

template <class S>
struct InBatchLossResult {
  S loss = S(0);  // mean over rows
  MatX<S> g_v;    // d x B
  MatX<S> g_u;    // d x B
};

// Draws M distinct other-row indices per row, uniformly without replacement.
inline std::vector<std::uint32_t> sample_inbatch_indices(std::uint32_t batch,
                                                         std::uint32_t m,
                                                         Rng& rng) {
  if (batch < 2) throw ConfigError("in-batch negatives need batch_size >= 2");
  if (m > batch - 1) {
    throw ConfigError("in-batch negatives need m <= batch_size - 1");
  }
  std::vector<std::uint32_t> idx(batch * m);
  std::vector<std::uint32_t> scratch;
  for (std::uint32_t b = 0; b < batch; ++b) {
    scratch.clear();
    while (scratch.size() < m) {
      auto cand = static_cast<std::uint32_t>(rng.below(batch - 1));
      if (cand >= b) ++cand;  // skip the row itself
      bool dup = false;
      for (auto s : scratch) dup |= (s == cand);
      if (!dup) scratch.push_back(cand);
    }
    for (std::uint32_t k = 0; k < m; ++k) idx[b * m + k] = scratch[k];
  }
  return idx;
}

// Per-row loss as in loss_explicit with negatives taken from other rows'
// context vectors; mean over rows. neg_idx is row-major B x M and every
// entry must differ from its own row. A context vector used as a negative
// accumulates gradient from every row that sampled it.
template <class S>
InBatchLossResult<S> loss_inbatch(const MatX<S>& h_v, const MatX<S>& h_u,
                                  const std::vector<std::uint32_t>& neg_idx,
                                  std::uint32_t m) {
  const auto batch = static_cast<std::uint32_t>(h_v.cols());
  if (batch < 2) throw ConfigError("in-batch negatives need batch_size >= 2");
  if (neg_idx.size() != std::size_t{batch} * m) {
    throw DataError("neg_idx size must be batch * m");
  }
  InBatchLossResult<S> out;
  out.g_v = MatX<S>::Zero(h_v.rows(), batch);
  out.g_u = MatX<S>::Zero(h_u.rows(), batch);
  const S inv_b = S(1) / static_cast<S>(batch);
  for (std::uint32_t b = 0; b < batch; ++b) {
    const S y_pos = h_v.col(b).dot(h_u.col(b));
    out.loss -= log_sigmoid(y_pos);
    const S gd_pos = -sigmoid(-y_pos) * inv_b;
    out.g_v.col(b) += gd_pos * h_u.col(b);
    out.g_u.col(b) += gd_pos * h_v.col(b);
    for (std::uint32_t k = 0; k < m; ++k) {
      const std::uint32_t o = neg_idx[b * m + k];
      if (o == b) throw DataError("in-batch negative equals its own row");
      const S y_neg = h_v.col(b).dot(h_u.col(o));
      out.loss -= log_sigmoid(-y_neg);
      const S gd_neg = sigmoid(y_neg) * inv_b;
      out.g_v.col(b) += gd_neg * h_u.col(o);
      out.g_u.col(o) += gd_neg * h_v.col(b);
    }
  }
  out.loss *= inv_b;
  return out;
}

}  // namespace recgraph
