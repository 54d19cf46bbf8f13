#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "oneshot/autodiff/ops.hpp"
#include "oneshot/autodiff/tape.hpp"
#include "oneshot/rng.hpp"

namespace oneshot::ad {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Denominator floor of the relative error, so entries where both
  /// gradients vanish do not blow up the ratio.
  double floor = 1e-6;
  /// Entries checked per tensor; larger tensors are subsampled.
  std::size_t max_entries = std::numeric_limits<std::size_t>::max();
  std::uint64_t sample_seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for every tensor in
/// `params`. `loss` builds a scalar on a fresh tape from the current values.
inline GradCheckResult check_gradients(std::span<Tensor* const> params, const std::function<Var(Tape&)>& loss,
                                       const GradCheckOptions& opt = {}) {
  Gradients analytic;
  {
    Tape tape;
    tape.backward(loss(tape), analytic);
  }
  auto eval = [&]() {
    Tape tape;
    return loss(tape).value().item();
  };

  GradCheckResult result;
  Rng rng = named_stream(opt.sample_seed, "gradcheck");
  for (Tensor* p : params) {
    const Tensor g = analytic.of(*p);
    std::vector<std::size_t> idx(p->size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > opt.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_entries);
    }
    for (std::size_t i : idx) {
      const double saved = (*p)[i];
      (*p)[i] = saved + opt.eps;
      const double up = eval();
      (*p)[i] = saved - opt.eps;
      const double down = eval();
      (*p)[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(g[i], numeric, opt.floor));
      ++result.entries;
    }
  }
  return result;
}

/// Convenience form: the inputs themselves are the differentiated tensors.
inline GradCheckResult check_gradients(std::vector<Tensor> inputs,
                                       const std::function<Var(Tape&, std::span<const Var>)>& f,
                                       const GradCheckOptions& opt = {}) {
  std::vector<Tensor*> ptrs;
  for (Tensor& t : inputs) ptrs.push_back(&t.set_requires_grad());
  return check_gradients(ptrs,
                         [&](Tape& tape) {
                           std::vector<Var> vars;
                           for (Tensor* t : ptrs) vars.push_back(tape.param(*t));
                           return f(tape, vars);
                         },
                         opt);
}

/// Scalar sum(x * w): projects a tensor output so its whole Jacobian is exercised.
inline Var weighted_sum(Var x, const Tensor& w) { return sum(mul(x, x.tape().constant(w))); }

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace oneshot::ad
