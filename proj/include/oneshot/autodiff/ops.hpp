#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "oneshot/autodiff/tape.hpp"
#include "oneshot/autodiff/tensor.hpp"
#include "oneshot/error.hpp"

namespace oneshot::ad {

/// Norm below which cosine similarity is defined as 0 with zero gradient.
inline constexpr double kCosineNormGuard = 1e-12;

namespace detail {

// Dot product with four interleaved partial sums. The order is fixed, so
// results are reproducible, but it differs from a left-to-right sum.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

// Equal shapes, or one matrix [n x d] with one vector [d] broadcast across rows.
struct Broadcast {
  Shape out;
  bool a_vec = false;
  bool b_vec = false;
  std::size_t width = 1;
};

inline Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  Broadcast bc;
  if (a.shape() == b.shape()) {
    bc.out = a.shape();
    bc.width = a.cols();
    return bc;
  }
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
    bc.out = a.shape();
    bc.b_vec = true;
    bc.width = b.dim(0);
    return bc;
  }
  if (a.rank() == 1 && b.rank() == 2 && b.dim(1) == a.dim(0)) {
    bc.out = b.shape();
    bc.a_vec = true;
    bc.width = a.dim(0);
    return bc;
  }
  shape_error(op, a.shape(), b.shape());
}

enum class BinaryKind { kAdd, kSub, kMul };

inline Var binary(Var a, Var b, BinaryKind kind, const char* name) {
  Tape& tape = a.tape();
  tape.check_owned(b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast(av, bv, name);
  Tensor out(bc.out);
  const std::size_t n = out.size();
  const std::size_t w = bc.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[bc.a_vec ? i % w : i];
    const double y = bv[bc.b_vec ? i % w : i];
    out[i] = kind == BinaryKind::kAdd ? x + y : kind == BinaryKind::kSub ? x - y : x * y;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), {a, b},
      [ia, ib, bc, kind](std::span<const double> g, BackwardContext& ctx) {
        const std::size_t w = bc.width;
        if (ctx.wants(ia)) {
          auto ga = ctx.grad(ia);
          const Tensor& bv = ctx.value(ib);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = kind == BinaryKind::kMul ? g[i] * bv[bc.b_vec ? i % w : i] : g[i];
            ga[bc.a_vec ? i % w : i] += d;
          }
        }
        if (ctx.wants(ib)) {
          auto gb = ctx.grad(ib);
          const Tensor& av = ctx.value(ia);
          for (std::size_t i = 0; i < g.size(); ++i) {
            double d = g[i];
            if (kind == BinaryKind::kSub) d = -d;
            if (kind == BinaryKind::kMul) d *= av[bc.a_vec ? i % w : i];
            gb[bc.b_vec ? i % w : i] += d;
          }
        }
      },
      name);
}

// Unary map with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx, const char* name) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id();
  const std::size_t io = a.tape().size();  // id the output will receive
  return a.tape().record(
      std::move(out), {a},
      [ia, io, dfdx](std::span<const double> g, BackwardContext& ctx) {
        const Tensor& x = ctx.value(ia);
        const Tensor& y = ctx.value(io);
        auto gx = ctx.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
      },
      name);
}

inline void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(v.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) { return detail::binary(a, b, detail::BinaryKind::kAdd, "add"); }
inline Var sub(Var a, Var b) { return detail::binary(a, b, detail::BinaryKind::kSub, "sub"); }
inline Var mul(Var a, Var b) { return detail::binary(a, b, detail::BinaryKind::kMul, "mul"); }

inline Var scale(Var a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

inline Var add_scalar(Var a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a,
      [](double x) {
        // split by sign so exp never overflows
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var log(Var a) {
  for (double v : a.value().values())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

enum class Elementwise { kAdd, kSub, kMul, kRelu, kTanh, kSigmoid, kExp, kLog };

/// Dispatcher over the elementwise family; binary kinds take two inputs.
inline Var elementwise(Elementwise op, std::span<const Var> in) {
  const bool binary_op = op == Elementwise::kAdd || op == Elementwise::kSub || op == Elementwise::kMul;
  if (in.size() != (binary_op ? 2u : 1u)) throw UsageError("elementwise: wrong number of inputs");
  switch (op) {
    case Elementwise::kAdd: return add(in[0], in[1]);
    case Elementwise::kSub: return sub(in[0], in[1]);
    case Elementwise::kMul: return mul(in[0], in[1]);
    case Elementwise::kRelu: return relu(in[0]);
    case Elementwise::kTanh: return tanh(in[0]);
    case Elementwise::kSigmoid: return sigmoid(in[0]);
    case Elementwise::kExp: return exp(in[0]);
    case Elementwise::kLog: return log(in[0]);
  }
  throw UsageError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product. A vector on the left acts as a single row and a vector on
/// the right as a single column; the unit dimension is dropped from the result.
inline Var matmul(Var a, Var b) {
  Tape& tape = a.tape();
  tape.check_owned(b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 1 || av.rank() > 2 || bv.rank() < 1 || bv.rank() > 2) detail::shape_error("matmul", av.shape(), bv.shape());
  const std::size_t m = av.rank() == 2 ? av.dim(0) : 1;
  const std::size_t k = av.rank() == 2 ? av.dim(1) : av.dim(0);
  const std::size_t kb = bv.dim(0);
  const std::size_t n = bv.rank() == 2 ? bv.dim(1) : 1;
  if (k != kb) detail::shape_error("matmul", av.shape(), bv.shape());

  Shape out_shape;
  if (av.rank() == 2) out_shape.push_back(m);
  if (bv.rank() == 2) out_shape.push_back(n);
  Tensor out(out_shape);
  const double* A = av.data();
  const double* B = bv.data();
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }

  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), {a, b},
      [ia, ib, m, k, n](std::span<const double> g, BackwardContext& ctx) {
        const double* A = ctx.value(ia).data();
        const double* B = ctx.value(ib).data();
        if (ctx.wants(ia)) {
          double* gA = ctx.grad(ia).data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) gA[i * k + p] += detail::dot(g.data() + i * n, B + p * n, n);
        }
        if (ctx.wants(ib)) {
          double* gB = ctx.grad(ib).data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += aip * g[i * n + j];
            }
        }
      },
      "matmul");
}

inline Var transpose(Var a) {
  detail::require_rank(a, 2, "transpose");
  const Tensor& av = a.value();
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, r, c](std::span<const double> g, BackwardContext& ctx) {
        auto ga = ctx.grad(ia);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
      },
      "transpose");
}

// ---------------------------------------------------------------------------
// Normalizations

/// Softmax of a vector, or of each row of a matrix, with max-subtraction.
inline Var softmax(Var v) {
  const Tensor& x = v.value();
  if (x.size() == 0 || x.rank() == 0 || x.rank() > 2) throw DimensionError("softmax: needs a non-empty vector or matrix, got " + to_string(x.shape()));
  const std::size_t rows = x.rows(), w = x.cols();
  if (w == 0) throw DimensionError("softmax: empty rows");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < w; ++j) o[j] /= s;
  }
  const std::size_t ix = v.id();
  const std::size_t io = v.tape().size();
  return v.tape().record(
      std::move(out), {v},
      [ix, io, rows, w](std::span<const double> g, BackwardContext& ctx) {
        const Tensor& y = ctx.value(io);
        auto gx = ctx.grad(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < w; ++j) dot += g[r * w + j] * y[r * w + j];
          for (std::size_t j = 0; j < w; ++j) gx[r * w + j] += y[r * w + j] * (g[r * w + j] - dot);
        }
      },
      "softmax");
}

/// Divides a positive vector by its sum, or each row of a positive matrix by
/// its row sum.
inline Var normalize(Var e) {
  const Tensor& x = e.value();
  if (x.rank() == 0 || x.rank() > 2 || x.size() == 0) throw DimensionError("normalize: needs a non-empty vector or matrix, got " + to_string(x.shape()));
  for (double v : x.values())
    if (!(v > 0.0)) throw DomainError("normalize: entries must be positive, found " + std::to_string(v));
  const std::size_t rows = x.rows(), w = x.cols();
  Tensor out(x.shape());
  std::vector<double> sums(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    sums[r] = s;
    auto o = out.row(r);
    auto in = x.row(r);
    for (std::size_t j = 0; j < w; ++j) o[j] = in[j] / s;
  }
  const std::size_t ix = e.id();
  const std::size_t io = e.tape().size();
  return e.tape().record(
      std::move(out), {e},
      [ix, io, rows, w, sums = std::move(sums)](std::span<const double> g, BackwardContext& ctx) {
        const Tensor& y = ctx.value(io);
        auto gx = ctx.grad(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < w; ++j) dot += g[r * w + j] * y[r * w + j];
          for (std::size_t j = 0; j < w; ++j) gx[r * w + j] += (g[r * w + j] - dot) / sums[r];
        }
      },
      "normalize");
}

// ---------------------------------------------------------------------------
// Reductions

/// Sum of every element, as a scalar.
inline Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(
      Tensor::scalar(s), {a},
      [ia](std::span<const double> g, BackwardContext& ctx) {
        for (double& x : ctx.grad(ia)) x += g[0];
      },
      "sum");
}

/// Sum of a matrix over `axis` (0: over rows, the node axis; 1: over columns).
inline Var reduce_sum(Var a, std::size_t axis = 0) {
  detail::require_rank(a, 2, "reduce_sum");
  const Tensor& x = a.value();
  const std::size_t r = x.dim(0), c = x.dim(1);
  if ((axis == 0 ? r : c) == 0) throw DimensionError("reduce_sum: empty axis");
  if (axis > 1) throw DimensionError("reduce_sum: axis out of range");
  Tensor out(Shape{axis == 0 ? c : r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += x(i, j);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, r, c, axis](std::span<const double> g, BackwardContext& ctx) {
        auto gx = ctx.grad(ia);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[axis == 0 ? j : i];
      },
      "reduce_sum");
}

/// Maximum of a matrix over `axis`. The gradient goes to the lowest index
/// attaining the maximum.
inline Var reduce_max(Var a, std::size_t axis = 0) {
  detail::require_rank(a, 2, "reduce_max");
  const Tensor& x = a.value();
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (axis > 1) throw DimensionError("reduce_max: axis out of range");
  if ((axis == 0 ? r : c) == 0) throw DimensionError("reduce_max: empty axis");
  const std::size_t outer = axis == 0 ? c : r;
  const std::size_t inner = axis == 0 ? r : c;
  Tensor out(Shape{outer});
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = 0;
    double bv = axis == 0 ? x(0, o) : x(o, 0);
    for (std::size_t i = 1; i < inner; ++i) {
      const double v = axis == 0 ? x(i, o) : x(o, i);
      if (v > bv) {
        bv = v;
        best = i;
      }
    }
    out[o] = bv;
    arg[o] = axis == 0 ? best * c + o : o * c + best;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, arg = std::move(arg)](std::span<const double> g, BackwardContext& ctx) {
        auto gx = ctx.grad(ia);
        for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
      },
      "reduce_max");
}

enum class Reduce { kSumNodes, kMaxNodes };

inline Var reduce(Reduce op, Var x, std::size_t axis = 0) {
  return op == Reduce::kSumNodes ? reduce_sum(x, axis) : reduce_max(x, axis);
}

// ---------------------------------------------------------------------------
// Cosine similarity

/// Pairwise cosine similarities between the rows of `a` [n x d] and `b` [m x d].
/// Pairs where either row has norm below kCosineNormGuard are 0 and pass no gradient.
inline Var cosine_matrix(Var a, Var b) {
  Tape& tape = a.tape();
  tape.check_owned(b);
  detail::require_rank(a, 2, "cosine_matrix");
  detail::require_rank(b, 2, "cosine_matrix");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(1) != bv.dim(1)) detail::shape_error("cosine", av.shape(), bv.shape());
  const std::size_t n = av.dim(0), m = bv.dim(0), d = av.dim(1);
  std::vector<double> na(n), nb(m);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v * v;
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (double v : bv.row(j)) s += v * v;
    nb[j] = std::sqrt(s);
  }
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (na[i] < kCosineNormGuard || nb[j] < kCosineNormGuard) continue;
      double dot = 0.0;
      const double* u = av.data() + i * d;
      const double* v = bv.data() + j * d;
      for (std::size_t t = 0; t < d; ++t) dot += u[t] * v[t];
      out(i, j) = dot / (na[i] * nb[j]);
    }
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t io = tape.size();
  return tape.record(
      std::move(out), {a, b},
      [ia, ib, io, n, m, d, na = std::move(na), nb = std::move(nb)](std::span<const double> g, BackwardContext& ctx) {
        const Tensor& av = ctx.value(ia);
        const Tensor& bv = ctx.value(ib);
        const Tensor& c = ctx.value(io);
        const bool want_a = ctx.wants(ia), want_b = ctx.wants(ib);
        std::span<double> ga, gb;
        if (want_a) ga = ctx.grad(ia);
        if (want_b) gb = ctx.grad(ib);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            if (na[i] < kCosineNormGuard || nb[j] < kCosineNormGuard) continue;
            const double gij = g[i * m + j];
            if (gij == 0.0) continue;
            const double cij = c(i, j);
            const double inv = 1.0 / (na[i] * nb[j]);
            const double* u = av.data() + i * d;
            const double* v = bv.data() + j * d;
            if (want_a) {
              const double su = cij / (na[i] * na[i]);
              for (std::size_t t = 0; t < d; ++t) ga[i * d + t] += gij * (v[t] * inv - su * u[t]);
            }
            if (want_b) {
              const double sv = cij / (nb[j] * nb[j]);
              for (std::size_t t = 0; t < d; ++t) gb[j * d + t] += gij * (u[t] * inv - sv * v[t]);
            }
          }
      },
      "cosine");
}

// ---------------------------------------------------------------------------
// Structural

/// Reinterprets the values under a new shape of equal element count.
inline Var reshape(Var a, Shape shape) {
  const Tensor& av = a.value();
  if (element_count(shape) != av.size()) detail::shape_error("reshape", av.shape(), shape);
  Tensor out(std::move(shape), std::vector<double>(av.values().begin(), av.values().end()));
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia](std::span<const double> g, BackwardContext& ctx) {
        auto gx = ctx.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

/// Cosine similarity of two vectors, as a scalar.
inline Var cosine(Var u, Var v) {
  if (u.rank() != 1 || v.rank() != 1 || u.value().size() != v.value().size())
    detail::shape_error("cosine", u.shape(), v.shape());
  const std::size_t d = u.value().size();
  return reshape(cosine_matrix(reshape(u, {1, d}), reshape(v, {1, d})), {});
}

/// Cosine similarity of a vector `q` [d] against each row of `rows` [m x d].
inline Var cosine_rows(Var q, Var rows) {
  detail::require_rank(q, 1, "cosine_rows");
  const std::size_t d = q.value().size();
  Var c = cosine_matrix(reshape(q, {1, d}), rows);
  return reshape(c, {c.value().dim(1)});
}

/// Concatenation along the last axis (vectors, or matrices with equal row counts).
inline Var concat(Var a, Var b) {
  Tape& tape = a.tape();
  tape.check_owned(b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() < 1 || av.rank() > 2 || av.rows() != bv.rows())
    detail::shape_error("concat", av.shape(), bv.shape());
  const std::size_t rows = av.rows(), wa = av.cols(), wb = bv.cols();
  Shape s = av.shape();
  s.back() = wa + wb;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(wa));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), {a, b},
      [ia, ib, rows, wa, wb](std::span<const double> g, BackwardContext& ctx) {
        const std::size_t w = wa + wb;
        if (ctx.wants(ia)) {
          auto ga = ctx.grad(ia);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < wa; ++j) ga[r * wa + j] += g[r * w + j];
        }
        if (ctx.wants(ib)) {
          auto gb = ctx.grad(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < wb; ++j) gb[r * wb + j] += g[r * w + wa + j];
        }
      },
      "concat");
}

/// Columns [begin, end) of the last axis.
inline Var slice(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (av.rank() < 1 || av.rank() > 2 || begin > end || end > av.cols())
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                         to_string(av.shape()));
  const std::size_t rows = av.rows(), w = av.cols(), k = end - begin;
  Shape s = av.shape();
  s.back() = k;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = av[r * w + begin + j];
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, rows, w, k, begin](std::span<const double> g, BackwardContext& ctx) {
        auto ga = ctx.grad(ia);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < k; ++j) ga[r * w + begin + j] += g[r * k + j];
      },
      "slice");
}

/// Rows of a matrix selected by index (repeats allowed).
inline Var gather_rows(Var a, std::vector<std::size_t> index) {
  detail::require_rank(a, 2, "gather_rows");
  const Tensor& av = a.value();
  const std::size_t w = av.dim(1);
  Tensor out(Shape{index.size(), w});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= av.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::copy(av.row(index[r]).begin(), av.row(index[r]).end(), out.row(r).begin());
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, w, index = std::move(index)](std::span<const double> g, BackwardContext& ctx) {
        auto ga = ctx.grad(ia);
        for (std::size_t r = 0; r < index.size(); ++r)
          for (std::size_t j = 0; j < w; ++j) ga[index[r] * w + j] += g[r * w + j];
      },
      "gather_rows");
}

/// Row `i` of a matrix as a vector.
inline Var row(Var a, std::size_t i) {
  const std::size_t w = a.value().cols();
  return reshape(gather_rows(a, {i}), {w});
}

/// Stacks equal-length vectors into a matrix, one per row.
inline Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  Tape& tape = rows[0].tape();
  const std::size_t w = rows[0].value().size();
  Tensor out(Shape{rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    tape.check_owned(rows[r]);
    const Tensor& v = rows[r].value();
    if (v.rank() != 1 || v.size() != w) detail::shape_error("stack_rows", rows[0].shape(), v.shape());
    std::copy(v.values().begin(), v.values().end(), out.row(r).begin());
  }
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  for (const Var& v : rows) ids.push_back(v.id());
  return tape.record(
      std::move(out), rows,
      [w, ids = std::move(ids)](std::span<const double> g, BackwardContext& ctx) {
        for (std::size_t r = 0; r < ids.size(); ++r) {
          if (!ctx.wants(ids[r])) continue;
          auto gr = ctx.grad(ids[r]);
          for (std::size_t j = 0; j < w; ++j) gr[j] += g[r * w + j];
        }
      },
      "stack_rows");
}

/// Multiplies row r of a matrix by the constant factors[r].
inline Var scale_rows(Var a, std::vector<double> factors) {
  detail::require_rank(a, 2, "scale_rows");
  const Tensor& av = a.value();
  if (factors.size() != av.dim(0)) throw DimensionError("scale_rows: factor count does not match rows");
  const std::size_t w = av.dim(1);
  Tensor out(av.shape());
  for (std::size_t r = 0; r < factors.size(); ++r)
    for (std::size_t j = 0; j < w; ++j) out(r, j) = factors[r] * av(r, j);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, w, factors = std::move(factors)](std::span<const double> g, BackwardContext& ctx) {
        auto ga = ctx.grad(ia);
        for (std::size_t r = 0; r < factors.size(); ++r)
          for (std::size_t j = 0; j < w; ++j) ga[r * w + j] += factors[r] * g[r * w + j];
      },
      "scale_rows");
}

}  // namespace oneshot::ad
