#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "oneshot/autodiff/ops.hpp"
#include "oneshot/autodiff/tape.hpp"
#include "oneshot/error.hpp"
#include "oneshot/molecule/features.hpp"
#include "oneshot/molecule/graph.hpp"
#include "oneshot/rng.hpp"

namespace oneshot::gconv {

using ad::Tensor;
using ad::Var;

/// Neighbor lists; the order of neighbors fixes the summation order.
using Adjacency = std::vector<std::vector<std::size_t>>;

/// A featurized molecule ready for encoding. Topology is shared by every layer.
struct GraphInput {
  Tensor features;
  Adjacency adjacency;

  std::size_t node_count() const noexcept { return adjacency.size(); }
};

inline GraphInput prepare(const mol::MoleculeGraph& g) { return GraphInput{mol::featurize(g), g.adjacency()}; }

enum class Activation { kIdentity, kRelu, kTanh };

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kRelu: return ad::relu(x);
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kIdentity: break;
  }
  return x;
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: break;
  }
  return "identity";
}

/// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-s, s);
  Tensor t(ad::Shape{fan_in, fan_out});
  for (double& v : t.values()) v = u(rng);
  t.set_requires_grad();
  return t;
}

inline Tensor zero_bias(std::size_t n) {
  Tensor t(ad::Shape{n});
  t.set_requires_grad();
  return t;
}

/// Degree-indexed graph convolution. Nodes of degree above max_degree use
/// the max_degree parameters.
struct GraphConvLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t max_degree = 6;
  Activation activation = Activation::kRelu;
  /// true: the self term W v + b sits inside the per-edge sum (scaled by the
  /// degree). false: it is added once per node.
  bool self_term_per_edge = true;
  std::vector<Tensor> W;  // [max_degree + 1] of in_dim x out_dim, applied to the node itself
  std::vector<Tensor> U;  // [max_degree + 1] of in_dim x out_dim, applied to each neighbor
  std::vector<Tensor> b;  // [max_degree + 1] of out_dim

  static GraphConvLayer create(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng,
                               std::size_t max_degree = 6, bool self_term_per_edge = true) {
    GraphConvLayer layer;
    layer.in_dim = in_dim;
    layer.out_dim = out_dim;
    layer.max_degree = max_degree;
    layer.activation = act;
    layer.self_term_per_edge = self_term_per_edge;
    for (std::size_t d = 0; d <= max_degree; ++d) {
      layer.W.push_back(glorot_uniform(in_dim, out_dim, rng));
      layer.U.push_back(glorot_uniform(in_dim, out_dim, rng));
      layer.b.push_back(zero_bias(out_dim));
    }
    return layer;
  }

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    for (std::size_t d = 0; d <= max_degree; ++d) {
      f(prefix + ".W" + std::to_string(d), W[d]);
      f(prefix + ".U" + std::to_string(d), U[d]);
      f(prefix + ".b" + std::to_string(d), b[d]);
    }
  }
};

inline void check_adjacency(const Var& x, const Adjacency& adj, const char* op) {
  if (x.rank() != 2 || x.value().dim(0) != adj.size())
    throw DimensionError(std::string(op) + ": features " + ad::to_string(x.shape()) + " do not match " +
                         std::to_string(adj.size()) + " nodes");
  for (const auto& nbrs : adj)
    for (std::size_t u : nbrs)
      if (u >= adj.size()) throw DimensionError(std::string(op) + ": neighbor index out of range");
}

/// Pre-activation of the graph convolution, for node v of degree k >= 1:
///   sum over neighbors u of (W^k v + U^k u + b^k)
/// and W^0 v + b^0 for isolated nodes.
inline Var graph_conv_linear(Var x, const Adjacency& adj, const GraphConvLayer& layer) {
  check_adjacency(x, adj, "graph_conv");
  if (x.value().dim(1) != layer.in_dim)
    throw DimensionError("graph_conv: feature width " + std::to_string(x.value().dim(1)) + " but layer expects " +
                         std::to_string(layer.in_dim));
  ad::Tape& tape = x.tape();
  const std::size_t nd = layer.max_degree + 1;
  std::vector<Var> inputs{x};
  for (std::size_t d = 0; d < nd; ++d) {
    inputs.push_back(tape.param(layer.W[d]));
    inputs.push_back(tape.param(layer.U[d]));
    inputs.push_back(tape.param(layer.b[d]));
  }

  const std::size_t n = adj.size(), din = layer.in_dim, dout = layer.out_dim;
  const Tensor& xv = x.value();
  Tensor out(ad::Shape{n, dout});
  std::vector<double> wv(dout), uu(dout);
  auto row_times = [&](const Tensor& M, std::size_t node, std::vector<double>& dst) {
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t k = 0; k < din; ++k) {
      const double xk = xv(node, k);
      const double* mrow = M.data() + k * dout;
      for (std::size_t j = 0; j < dout; ++j) dst[j] += xk * mrow[j];
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t d = std::min(adj[v].size(), layer.max_degree);
    const Tensor& W = tape.value(inputs[1 + 3 * d].id());
    const Tensor& U = tape.value(inputs[2 + 3 * d].id());
    const Tensor& b = tape.value(inputs[3 + 3 * d].id());
    row_times(W, v, wv);
    auto o = out.row(v);
    if (adj[v].empty() || !layer.self_term_per_edge) {
      for (std::size_t j = 0; j < dout; ++j) o[j] = wv[j] + b[j];
      for (std::size_t u : adj[v]) {
        row_times(U, u, uu);
        for (std::size_t j = 0; j < dout; ++j) o[j] += uu[j];
      }
    } else {
      for (std::size_t u : adj[v]) {
        row_times(U, u, uu);
        for (std::size_t j = 0; j < dout; ++j) o[j] += wv[j] + uu[j] + b[j];
      }
    }
  }

  std::vector<std::size_t> ids;
  for (const Var& v : inputs) ids.push_back(v.id());
  return tape.record(
      std::move(out), inputs,
      [ids = std::move(ids), adj, n, din, dout, max_degree = layer.max_degree,
       per_edge = layer.self_term_per_edge](std::span<const double> g, ad::BackwardContext& ctx) {
        const Tensor& xv = ctx.value(ids[0]);
        const bool want_x = ctx.wants(ids[0]);
        std::span<double> gx;
        if (want_x) gx = ctx.grad(ids[0]);
        std::vector<double> scaled(dout);
        for (std::size_t v = 0; v < n; ++v) {
          const std::size_t d = std::min(adj[v].size(), max_degree);
          const std::size_t iW = ids[1 + 3 * d], iU = ids[2 + 3 * d], ib = ids[3 + 3 * d];
          const double mult = (adj[v].empty() || !per_edge) ? 1.0 : static_cast<double>(adj[v].size());
          const double* gv = g.data() + v * dout;
          for (std::size_t j = 0; j < dout; ++j) scaled[j] = mult * gv[j];

          const Tensor& W = ctx.value(iW);
          if (ctx.wants(iW)) {
            auto gW = ctx.grad(iW);
            for (std::size_t k = 0; k < din; ++k) {
              const double xk = xv(v, k);
              if (xk == 0.0) continue;
              for (std::size_t j = 0; j < dout; ++j) gW[k * dout + j] += xk * scaled[j];
            }
          }
          if (ctx.wants(ib)) {
            auto gb = ctx.grad(ib);
            for (std::size_t j = 0; j < dout; ++j) gb[j] += scaled[j];
          }
          if (want_x) {
            for (std::size_t k = 0; k < din; ++k) gx[v * din + k] += ad::detail::dot(W.data() + k * dout, scaled.data(), dout);
          }
          if (adj[v].empty()) continue;
          const Tensor& U = ctx.value(iU);
          const bool want_u = ctx.wants(iU);
          std::span<double> gU;
          if (want_u) gU = ctx.grad(iU);
          for (std::size_t u : adj[v]) {
            if (want_u) {
              for (std::size_t k = 0; k < din; ++k) {
                const double xk = xv(u, k);
                if (xk == 0.0) continue;
                for (std::size_t j = 0; j < dout; ++j) gU[k * dout + j] += xk * gv[j];
              }
            }
            if (want_x) {
              for (std::size_t k = 0; k < din; ++k) gx[u * din + k] += ad::detail::dot(U.data() + k * dout, gv, dout);
            }
          }
        }
      },
      "graph_conv");
}

/// Graph convolution followed by the layer nonlinearity.
inline Var graph_conv(Var x, const Adjacency& adj, const GraphConvLayer& layer) {
  return activate(graph_conv_linear(x, adj, layer), layer.activation);
}

/// Elementwise max over each node's closed neighborhood. The gradient of
/// each output entry goes to the lowest-index node attaining the max.
inline Var graph_pool(Var x, const Adjacency& adj) {
  check_adjacency(x, adj, "graph_pool");
  const Tensor& xv = x.value();
  const std::size_t n = adj.size(), w = xv.dim(1);
  Tensor out(xv.shape());
  std::vector<std::size_t> arg(n * w);
  std::vector<std::size_t> hood;
  for (std::size_t v = 0; v < n; ++v) {
    hood.assign(adj[v].begin(), adj[v].end());
    hood.push_back(v);
    std::sort(hood.begin(), hood.end());
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t best = hood[0];
      for (std::size_t u : hood)
        if (xv(u, j) > xv(best, j)) best = u;
      out(v, j) = xv(best, j);
      arg[v * w + j] = best * w + j;
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(
      std::move(out), {x},
      [ix, arg = std::move(arg)](std::span<const double> g, ad::BackwardContext& ctx) {
        auto gx = ctx.grad(ix);
        for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
      },
      "graph_pool");
}

/// Sum of all node vectors followed by the gather nonlinearity.
inline Var graph_gather(Var x, Activation act = Activation::kTanh) {
  if (x.rank() != 2 || x.value().dim(0) == 0) throw DimensionError("graph_gather: empty graph");
  return activate(ad::reduce_sum(x, 0), act);
}

/// Node-wise affine layer.
struct DenseLayer {
  Tensor W;
  Tensor b;
  Activation activation = Activation::kTanh;

  static DenseLayer create(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng) {
    return DenseLayer{glorot_uniform(in_dim, out_dim, rng), zero_bias(out_dim), act};
  }

  Var operator()(Var x) const {
    ad::Tape& t = x.tape();
    return activate(ad::add(ad::matmul(x, t.param(W)), t.param(b)), activation);
  }

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".W", W);
    f(prefix + ".b", b);
  }
};

}  // namespace oneshot::gconv
