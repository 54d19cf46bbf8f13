#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oneshot/autodiff/tensor.hpp"
#include "oneshot/error.hpp"

namespace oneshot::ad {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rank() const { return value().rank(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients keyed by parameter identity (the address of the parameter tensor).
class Gradients {
 public:
  void accumulate(const Tensor& param, std::span<const double> g) {
    auto [it, inserted] = grads_.try_emplace(&param, param.shape());
    auto dst = it->second.values();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  void add_zero(const Tensor& param) { grads_.try_emplace(&param, param.shape()); }

  void accumulate(const Gradients& other) {
    for (const auto& [p, g] : other.grads_) accumulate(*p, g.values());
  }

  const Tensor* find(const Tensor& param) const {
    auto it = grads_.find(&param);
    return it == grads_.end() ? nullptr : &it->second;
  }

  /// Gradient of `param`, or zeros of its shape if it never reached the loss.
  Tensor of(const Tensor& param) const {
    if (const Tensor* g = find(param)) return *g;
    return Tensor(param.shape());
  }

  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::map<const Tensor*, Tensor> grads_;
};

/// Access to values and gradient buffers during the reverse sweep.
class BackwardContext {
 public:
  inline const Tensor& value(std::size_t id) const;
  inline bool wants(std::size_t id) const;
  /// Mutable gradient buffer of node `id`, zero-initialized on first use.
  inline std::span<double> grad(std::size_t id);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::vector<std::vector<double>>& grads) : tape_(tape), grads_(grads) {}
  Tape& tape_;
  std::vector<std::vector<double>>& grads_;
};

using BackwardFn = std::function<void(std::span<const double> out_grad, BackwardContext& ctx)>;

/// Ordered record of executed operations. Each node owns its output value
/// (or references a parameter) and the closure that propagates its gradient.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr, false, {}, "constant"});
    return Var(this, nodes_.size() - 1);
  }

  /// Brings a parameter onto the tape without copying it. Parameters whose
  /// requires_grad flag is off behave like constants. Repeated calls with the
  /// same tensor return the same node.
  Var param(const Tensor& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
    nodes_.push_back(Node{Tensor(), &p, p.requires_grad(), {}, "param"});
    param_ids_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  /// Records an operation output. `inputs` decide whether the node takes part
  /// in the backward pass; `backward` is dropped when none of them do.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* name) {
    bool grad = false;
    for (const Var& in : inputs) {
      check_owned(in);
      grad = grad || nodes_[in.id()].grad;
    }
    if (!value.all_finite()) throw DomainError(std::string("non-finite result in ") + name);
    nodes_.push_back(Node{std::move(value), nullptr, grad, grad ? std::move(backward) : BackwardFn{}, name});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* name) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward), name);
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? *n.param : n.owned;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].name; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void check_owned(const Var& v) const {
    if (&v.tape() != this) throw UsageError("variable belongs to a different tape");
  }

  /// Reverse sweep from a scalar loss; gradients are added into `out`.
  /// Every parameter registered on the tape receives an entry, zero if unreached.
  void backward(const Var& loss, Gradients& out) {
    if (!loss.valid() || &loss.tape() != this) throw UsageError("loss was not produced on this tape");
    const Tensor& lv = value(loss.id());
    if (lv.size() != 1) throw DimensionError("backward needs a scalar loss, got shape " + to_string(lv.shape()));

    std::vector<std::vector<double>> grads(nodes_.size());
    BackwardContext ctx(*this, grads);
    grads[loss.id()].assign(1, 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (grads[i].empty() || !n.backward) continue;
      n.backward(std::span<const double>(grads[i]), ctx);
    }
    for (const auto& [param, id] : param_ids_) {
      if (!nodes_[id].grad) continue;
      if (grads[id].empty())
        out.add_zero(*param);
      else
        out.accumulate(*param, grads[id]);
    }
  }

  Gradients backward(const Var& loss) {
    Gradients g;
    backward(loss, g);
    return g;
  }

 private:
  struct Node {
    Tensor owned;
    const Tensor* param;
    bool grad;
    BackwardFn backward;
    const char* name;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_ids_;

  friend class BackwardContext;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

inline const Tensor& BackwardContext::value(std::size_t id) const { return tape_.value(id); }
inline bool BackwardContext::wants(std::size_t id) const { return tape_.requires_grad(id); }
inline std::span<double> BackwardContext::grad(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(tape_.value(id).size(), 0.0);
  return g;
}

}  // namespace oneshot::ad
