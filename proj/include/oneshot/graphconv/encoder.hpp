#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oneshot/graphconv/layers.hpp"
#include "oneshot/molecule/features.hpp"

namespace oneshot::gconv {

struct EncoderConfig {
  std::size_t input_width = mol::kFeatureWidth;
  std::vector<std::size_t> conv_widths{64, 128, 64};
  std::size_t dense_width = 128;
  std::size_t max_degree = 6;
  bool self_term_per_edge = true;

  /// Embedding width p.
  std::size_t output_width() const noexcept { return dense_width; }
};

/// conv(relu) -> pool, repeated per conv width, then a node-wise tanh dense
/// layer and a tanh gather. The defaults give the 64/128/64 -> 128 stack.
class Encoder {
 public:
  Encoder() = default;

  Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
    if (config.conv_widths.empty()) throw ConfigError("encoder needs at least one convolution");
    std::size_t in = config.input_width;
    for (std::size_t w : config.conv_widths) {
      convs_.push_back(GraphConvLayer::create(in, w, Activation::kRelu, rng, config.max_degree, config.self_term_per_edge));
      in = w;
    }
    dense_ = DenseLayer::create(in, config.dense_width, Activation::kTanh, rng);
  }

  const EncoderConfig& config() const noexcept { return config_; }
  std::size_t output_width() const noexcept { return config_.output_width(); }
  const std::vector<GraphConvLayer>& convs() const noexcept { return convs_; }
  std::vector<GraphConvLayer>& convs() noexcept { return convs_; }
  const DenseLayer& dense() const noexcept { return dense_; }

  /// Embedding of one molecule, shape [p].
  Var encode(ad::Tape& tape, const GraphInput& g) const {
    if (g.node_count() == 0) throw DimensionError("encode: molecule has no atoms");
    Var x = tape.constant(g.features);
    for (const GraphConvLayer& conv : convs_) {
      x = graph_conv(x, g.adjacency, conv);
      x = graph_pool(x, g.adjacency);
    }
    x = dense_(x);
    return graph_gather(x, Activation::kTanh);
  }

  /// Embeddings of several molecules stacked as rows, shape [n x p].
  Var encode_all(ad::Tape& tape, const std::vector<const GraphInput*>& graphs) const {
    std::vector<Var> rows;
    rows.reserve(graphs.size());
    for (const GraphInput* g : graphs) rows.push_back(encode(tape, *g));
    return ad::stack_rows(rows);
  }

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].for_each_parameter(prefix + "conv" + std::to_string(i), f);
    dense_.for_each_parameter(prefix + "dense", f);
  }

 private:
  EncoderConfig config_;
  std::vector<GraphConvLayer> convs_;
  DenseLayer dense_;
};

}  // namespace oneshot::gconv
