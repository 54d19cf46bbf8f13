#pragma once

#include <span>
#include <vector>

#include "oneshot/autodiff/ops.hpp"

namespace oneshot::heads {

using ad::Tensor;
using ad::Var;

/// k(q, M_i) = exp(cos(q, M_i)) for a query vector [p] against rows of
/// M [m x p] -> [m], or for every row of a query matrix [n x p] -> [n x m].
inline Var similarity(Var q, Var M) {
  if (q.rank() == 1) return ad::exp(ad::cosine_rows(q, M));
  return ad::exp(ad::cosine_matrix(q, M));
}

inline Var similarity_vector(Var q, Var M) {
  if (q.rank() != 1) throw DimensionError("similarity_vector: query must be a vector");
  return similarity(q, M);
}

/// a = e / sum(e) for a vector, row-wise for a matrix.
inline Var attention_normalize(Var e) { return ad::normalize(e); }

/// h = sum_i a_i y_i with a computed from embedding similarities.
/// Returns a scalar for a single query vector, [n] for a query matrix.
inline Var attention_readout(Var queries, Var support, std::span<const int> labels) {
  if (labels.size() != support.rows() || support.rank() != 2)
    throw DimensionError("attention_readout: " + std::to_string(labels.size()) + " labels for support of shape " +
                         ad::to_string(support.shape()));
  Tensor y(ad::Shape{labels.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i];
  Var a = attention_normalize(similarity(queries, support));
  return ad::matmul(a, queries.tape().constant(std::move(y)));
}

}  // namespace oneshot::heads
