#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctxval/core/error.hpp"
#include "ctxval/csm/weights.hpp"

namespace ctxval::csm {

// Global layer and scoring head.
//
// Each context row is carried as its own vector and every per-row operation
// is a matrix-vector product, so a row's result never depends on where it
// sits in the batch. Attention reductions over keys run in a canonical key
// order (lexicographic order of the input rows), which makes the output
// exactly permutation-equivariant, bit for bit.

template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <typename Scalar>
Vector<Scalar> layer_norm(const Vector<Scalar>& x, const Vector<Scalar>& weight, const Vector<Scalar>& bias,
                          Scalar eps) {
  const Scalar mean = x.mean();
  const Vector<Scalar> centered = x.array() - mean;
  const Scalar var = centered.squaredNorm() / static_cast<Scalar>(x.size());
  return (centered / std::sqrt(var + eps)).cwiseProduct(weight) + bias;
}

/// Row order used for every reduction over keys.
template <typename Scalar>
std::vector<std::size_t> canonical_order(const std::vector<Vector<Scalar>>& rows) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(rows[a].data(), rows[a].data() + rows[a].size(), rows[b].data(),
                                        rows[b].data() + rows[b].size());
  });
  return order;
}

template <typename Scalar>
std::vector<Vector<Scalar>> matrix_rows(const Matrix<Scalar>& m) {
  std::vector<Vector<Scalar>> rows;
  rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).transpose());
  return rows;
}

template <typename Scalar>
Matrix<Scalar> rows_matrix(const std::vector<Vector<Scalar>>& rows, Eigen::Index cols) {
  Matrix<Scalar> m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

template <typename Scalar>
void check_input(const std::vector<Vector<Scalar>>& L, const CsmWeights<Scalar>& w) {
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (L[i].size() != w.meta.d_model) {
      throw DataError("CSM input row " + std::to_string(i) + " has dimension " + std::to_string(L[i].size()) +
                      ", weights expect " + std::to_string(w.meta.d_model));
    }
    if (!L[i].allFinite()) throw DataError("CSM input row " + std::to_string(i) + " is not finite");
  }
}

/// G = global layer applied to the local embeddings L (one row per context).
template <typename Scalar>
std::vector<Vector<Scalar>> global_forward(const std::vector<Vector<Scalar>>& L, const CsmWeights<Scalar>& w) {
  check_input(L, w);
  const std::size_t n = L.size();
  const int d = w.meta.d_model;
  const int heads = w.meta.heads;
  const int dh = d / heads;
  const Scalar eps = static_cast<Scalar>(w.meta.layer_norm_eps);
  const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto order = canonical_order(L);

  std::vector<Vector<Scalar>> x = L;
  std::vector<Vector<Scalar>> q(n), k(n), v(n);
  std::vector<Scalar> logits(n);
  for (const auto& layer : w.layers) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vector<Scalar> h = layer_norm<Scalar>(x[i], layer.ln1_weight, layer.ln1_bias, eps);
      q[i] = layer.q_weight * h + layer.q_bias;
      k[i] = layer.k_weight * h + layer.k_bias;
      v[i] = layer.v_weight * h + layer.v_bias;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Vector<Scalar> attn = Vector<Scalar>::Zero(d);
      for (int hd = 0; hd < heads; ++hd) {
        const auto qi = q[i].segment(hd * dh, dh);
        Scalar max_logit = -std::numeric_limits<Scalar>::infinity();
        for (std::size_t j : order) {
          logits[j] = qi.dot(k[j].segment(hd * dh, dh)) * inv_sqrt_dh;
          max_logit = std::max(max_logit, logits[j]);
        }
        Scalar denom = 0;
        for (std::size_t j : order) {
          logits[j] = std::exp(logits[j] - max_logit);
          denom += logits[j];
        }
        auto out = attn.segment(hd * dh, dh);
        for (std::size_t j : order) out += (logits[j] / denom) * v[j].segment(hd * dh, dh);
      }
      x[i] += layer.o_weight * attn + layer.o_bias;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Vector<Scalar> h = layer_norm<Scalar>(x[i], layer.ln2_weight, layer.ln2_bias, eps);
      const Vector<Scalar> a = (layer.fc1_weight * h + layer.fc1_bias).unaryExpr(&gelu<Scalar>);
      x[i] += layer.fc2_weight * a + layer.fc2_bias;
    }
  }
  return x;
}

template <typename Scalar>
Matrix<Scalar> global_forward(const Matrix<Scalar>& L, const CsmWeights<Scalar>& w) {
  return rows_matrix(global_forward(matrix_rows(L), w), w.meta.d_model);
}

/// Row-wise two-layer MLP: one score per context.
template <typename Scalar>
std::vector<Scalar> score(const std::vector<Vector<Scalar>>& G, const CsmWeights<Scalar>& w) {
  check_input(G, w);
  std::vector<Scalar> out;
  out.reserve(G.size());
  for (const auto& g : G) {
    const Vector<Scalar> a = (w.head_fc1_weight * g + w.head_fc1_bias).unaryExpr(&gelu<Scalar>);
    out.push_back(w.head_fc2_weight.row(0).dot(a) + w.head_fc2_bias(0));
  }
  return out;
}

template <typename Scalar>
std::vector<Scalar> score(const Matrix<Scalar>& G, const CsmWeights<Scalar>& w) {
  return score(matrix_rows(G), w);
}

}  // namespace ctxval::csm
