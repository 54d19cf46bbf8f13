#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>

#include "oneshot/autodiff/ops.hpp"
#include "oneshot/graphconv/layers.hpp"

namespace oneshot::heads {

using ad::Tensor;
using ad::Var;

/// LSTM cell. Gate pre-activations are x·Wx + r·Wh + b, where r is the
/// recurrent input (usually the previous hidden state; absent when
/// recurrent_width is 0). Gate column blocks, each hidden_width wide:
/// input, forget, output, candidate.
struct LSTMCell {
  std::size_t input_width = 0;
  std::size_t recurrent_width = 0;
  std::size_t hidden_width = 0;
  Tensor Wx;
  Tensor Wh;  // empty when recurrent_width == 0
  Tensor b;

  static LSTMCell create(std::size_t input_width, std::size_t recurrent_width, std::size_t hidden_width, Rng& rng) {
    LSTMCell cell;
    cell.input_width = input_width;
    cell.recurrent_width = recurrent_width;
    cell.hidden_width = hidden_width;
    cell.Wx = gconv::glorot_uniform(input_width, 4 * hidden_width, rng);
    if (recurrent_width > 0) cell.Wh = gconv::glorot_uniform(recurrent_width, 4 * hidden_width, rng);
    cell.b = gconv::zero_bias(4 * hidden_width);
    return cell;
  }

  /// One step on a vector or on every row of a matrix (rows are independent
  /// sequences sharing these weights). Returns (hidden, cell).
  std::pair<Var, Var> step(Var x, std::optional<Var> recurrent, Var c) const {
    ad::Tape& t = x.tape();
    if (x.cols() != input_width)
      throw DimensionError("LSTM input width " + std::to_string(x.cols()) + ", expected " + std::to_string(input_width));
    Var z = ad::matmul(x, t.param(Wx));
    if (recurrent_width > 0) {
      if (!recurrent) throw UsageError("LSTM cell expects a recurrent input");
      z = ad::add(z, ad::matmul(*recurrent, t.param(Wh)));
    }
    z = ad::add(z, t.param(b));
    const std::size_t h = hidden_width;
    Var in_gate = ad::sigmoid(ad::slice(z, 0, h));
    Var forget = ad::sigmoid(ad::slice(z, h, 2 * h));
    Var out_gate = ad::sigmoid(ad::slice(z, 2 * h, 3 * h));
    Var candidate = ad::tanh(ad::slice(z, 3 * h, 4 * h));
    Var c_next = ad::add(ad::mul(forget, c), ad::mul(in_gate, candidate));
    Var h_next = ad::mul(out_gate, ad::tanh(c_next));
    return {h_next, c_next};
  }

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".Wx", Wx);
    if (recurrent_width > 0) f(prefix + ".Wh", Wh);
    f(prefix + ".b", b);
  }
};

}  // namespace oneshot::heads
