#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/autodiff/ops.hpp"
#include "oneshot/graphconv/encoder.hpp"
#include "oneshot/heads/attention.hpp"
#include "oneshot/heads/lstm.hpp"

namespace oneshot::heads {

enum class HeadVariant { kSiamese, kAttnLSTM, kResLSTM };

inline const char* to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::kSiamese: return "siamese";
    case HeadVariant::kAttnLSTM: return "attnlstm";
    case HeadVariant::kResLSTM: return "reslstm";
  }
  return "unknown";
}

inline HeadVariant parse_variant(const std::string& s) {
  if (s == "siamese") return HeadVariant::kSiamese;
  if (s == "attnlstm") return HeadVariant::kAttnLSTM;
  if (s == "reslstm") return HeadVariant::kResLSTM;
  throw ConfigError("unknown head variant '" + s + "' (expected siamese, attnlstm or reslstm)");
}

struct ModelConfig {
  gconv::EncoderConfig encoder;
  HeadVariant variant = HeadVariant::kResLSTM;
  std::size_t refinement_depth = 3;  // L, ResLSTM iterations
  std::size_t attention_steps = 3;   // K, attLSTM read steps
  bool tie_encoders = true;          // query and support share one encoder
};

/// Non-owning support set: m featurized molecules and their 0/1 labels.
struct SupportSet {
  std::vector<const gconv::GraphInput*> molecules;
  std::vector<int> labels;

  std::size_t size() const noexcept { return molecules.size(); }
};

/// Per-call state of the dual residual refinement.
struct RefinementState {
  Var query_delta;              // [p] or [n x p]
  Var support_delta;            // [m x p]
  Var expected_query_features;  // r
  Var expected_support_features;  // R
  Var query_cell;
  Var support_cell;
  std::size_t iterations = 0;
};

/// g(x_i | S) = forward_h_i + backward_h_i + g'(x_i), a BiLSTM over the
/// support sequence in the given order with a residual connection.
inline Var bilstm_support(Var g_prime, const LSTMCell& forward, const LSTMCell& backward) {
  if (g_prime.rank() != 2 || g_prime.rows() == 0) throw UsageError("bilstm_support: empty support");
  ad::Tape& t = g_prime.tape();
  const std::size_t m = g_prime.rows(), p = g_prime.cols();
  std::vector<Var> rows;
  for (std::size_t i = 0; i < m; ++i) rows.push_back(ad::row(g_prime, i));

  auto run = [&](const LSTMCell& cell, bool reverse) {
    std::vector<Var> out(m);
    Var h = t.constant(Tensor(ad::Shape{cell.hidden_width}));
    Var c = t.constant(Tensor(ad::Shape{cell.hidden_width}));
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t i = reverse ? m - 1 - s : s;
      std::tie(h, c) = cell.step(rows[i], h, c);
      out[i] = h;
    }
    return out;
  };
  const std::vector<Var> fwd = run(forward, false);
  const std::vector<Var> bwd = run(backward, true);
  std::vector<Var> combined;
  for (std::size_t i = 0; i < m; ++i) combined.push_back(ad::add(ad::add(fwd[i], bwd[i]), rows[i]));
  if (forward.hidden_width != p) throw DimensionError("bilstm_support: hidden width must equal embedding width");
  return ad::stack_rows(combined);
}

/// Order-independent query embedding: K rounds of a dot-product attention
/// read over the rows of g_S followed by an LSTM step whose recurrent input is
/// [h, r]; returns h_K + f'(x). Accepts one query [p] or a matrix of queries.
inline Var attlstm_query(Var f_prime, Var g_S, std::size_t steps, const LSTMCell& cell) {
  if (g_S.rank() != 2 || g_S.rows() == 0) throw UsageError("attlstm_query: empty support");
  if (steps == 0) throw ConfigError("attlstm_query: needs at least one step");
  ad::Tape& t = f_prime.tape();
  Var h = t.constant(Tensor(f_prime.shape()));
  Var c = t.constant(Tensor(f_prime.shape()));
  Var g_T = ad::transpose(g_S);
  for (std::size_t k = 0; k < steps; ++k) {
    Var q = ad::add(h, f_prime);
    Var weights = ad::softmax(ad::matmul(q, g_T));
    Var read = ad::matmul(weights, g_S);
    std::tie(h, c) = cell.step(f_prime, ad::concat(h, read), c);
  }
  return ad::add(h, f_prime);
}

/// Dual residual LSTM refinement of query and support embeddings. Each
/// iteration:
///   e = k(f' + dz, R)       E = k(R + dZ, g')
///   a = e / sum e           A = row-normalized E
///   r = a R                 R <- A g'
///   dz <- LSTM([dz, r])     dZ <- LSTM([dZ, R])  (row-wise, shared weights)
/// and the result is (f' + dz, g' + dZ). With zero iterations f' and g' are
/// returned unchanged.
inline std::pair<Var, Var> reslstm_refine(Var f_prime, Var g_prime, std::size_t iterations, const LSTMCell& query_cell,
                                          const LSTMCell& support_cell, RefinementState* trace = nullptr) {
  if (g_prime.rank() != 2 || g_prime.rows() == 0) throw UsageError("reslstm_refine: empty support");
  if (iterations == 0) return {f_prime, g_prime};
  ad::Tape& t = f_prime.tape();
  RefinementState s;
  s.query_delta = t.constant(Tensor(f_prime.shape()));
  s.query_cell = t.constant(Tensor(f_prime.shape()));
  s.support_delta = t.constant(Tensor(g_prime.shape()));
  s.support_cell = t.constant(Tensor(g_prime.shape()));
  s.expected_support_features = g_prime;
  for (std::size_t l = 0; l < iterations; ++l) {
    Var e = similarity(ad::add(f_prime, s.query_delta), s.expected_support_features);
    Var E = similarity(ad::add(s.expected_support_features, s.support_delta), g_prime);
    Var a = attention_normalize(e);
    Var A = attention_normalize(E);
    s.expected_query_features = ad::matmul(a, s.expected_support_features);
    s.expected_support_features = ad::matmul(A, g_prime);
    std::tie(s.query_delta, s.query_cell) =
        query_cell.step(ad::concat(s.query_delta, s.expected_query_features), std::nullopt, s.query_cell);
    std::tie(s.support_delta, s.support_cell) =
        support_cell.step(ad::concat(s.support_delta, s.expected_support_features), std::nullopt, s.support_cell);
    s.iterations = l + 1;
  }
  if (trace) *trace = s;
  return {ad::add(f_prime, s.query_delta), ad::add(g_prime, s.support_delta)};
}

/// Graph-convolutional encoder(s) plus the parameters of one head variant.
/// Parameter groups a variant does not use are absent.
class OneShotModel {
 public:
  OneShotModel() = default;

  OneShotModel(const ModelConfig& config, Rng& rng) : config_(config) {
    encoder_ = gconv::Encoder(config.encoder, rng);
    if (!config.tie_encoders) query_encoder_ = gconv::Encoder(config.encoder, rng);
    const std::size_t p = config.encoder.output_width();
    switch (config.variant) {
      case HeadVariant::kSiamese: break;
      case HeadVariant::kAttnLSTM:
        bilstm_forward_ = LSTMCell::create(p, p, p, rng);
        bilstm_backward_ = LSTMCell::create(p, p, p, rng);
        attention_cell_ = LSTMCell::create(p, 2 * p, p, rng);
        break;
      case HeadVariant::kResLSTM:
        query_cell_ = LSTMCell::create(2 * p, 0, p, rng);
        support_cell_ = LSTMCell::create(2 * p, 0, p, rng);
        break;
    }
  }

  static OneShotModel create(const ModelConfig& config, std::uint64_t seed) {
    Rng rng = named_stream(seed, "init");
    return OneShotModel(config, rng);
  }

  const ModelConfig& config() const noexcept { return config_; }
  HeadVariant variant() const noexcept { return config_.variant; }
  std::size_t embedding_width() const noexcept { return config_.encoder.output_width(); }
  const gconv::Encoder& encoder() const noexcept { return encoder_; }
  gconv::Encoder& encoder() noexcept { return encoder_; }
  const gconv::Encoder& query_encoder() const noexcept { return query_encoder_ ? *query_encoder_ : encoder_; }

  const LSTMCell& bilstm_forward() const { return require(bilstm_forward_, "BiLSTM"); }
  const LSTMCell& bilstm_backward() const { return require(bilstm_backward_, "BiLSTM"); }
  const LSTMCell& attention_cell() const { return require(attention_cell_, "attLSTM"); }
  const LSTMCell& query_cell() const { return require(query_cell_, "query LSTM"); }
  const LSTMCell& support_cell() const { return require(support_cell_, "support LSTM"); }
  LSTMCell& mutable_cell(const std::string& which) {
    std::optional<LSTMCell>* slot = which == "bilstm_forward"    ? &bilstm_forward_
                                    : which == "bilstm_backward" ? &bilstm_backward_
                                    : which == "attention"       ? &attention_cell_
                                    : which == "query"           ? &query_cell_
                                                                 : &support_cell_;
    if (!*slot) throw UsageError("model variant " + std::string(to_string(variant())) + " has no " + which + " cell");
    return **slot;
  }

  Var embed_support(ad::Tape& t, const std::vector<const gconv::GraphInput*>& graphs) const {
    return encoder_.encode_all(t, graphs);
  }
  Var embed_queries(ad::Tape& t, const std::vector<const gconv::GraphInput*>& graphs) const {
    return query_encoder().encode_all(t, graphs);
  }

  /// Final (query, support) embeddings after the variant's context stage.
  std::pair<Var, Var> contextualize(Var f_prime, Var g_prime) const {
    switch (config_.variant) {
      case HeadVariant::kSiamese: return {f_prime, g_prime};
      case HeadVariant::kAttnLSTM: {
        Var g = bilstm_support(g_prime, bilstm_forward(), bilstm_backward());
        return {attlstm_query(f_prime, g, config_.attention_steps, attention_cell()), g};
      }
      case HeadVariant::kResLSTM:
        return reslstm_refine(f_prime, g_prime, config_.refinement_depth, query_cell(), support_cell());
    }
    throw UsageError("unknown head variant");
  }

  /// Activity probabilities for query embeddings [n x p] (or one [p]) given
  /// support embeddings [m x p] and labels.
  Var predict_embedded(Var f_prime, Var g_prime, std::span<const int> labels) const {
    if (g_prime.rank() != 2 || g_prime.rows() == 0) throw UsageError("predict: empty support set");
    auto [f, g] = contextualize(f_prime, g_prime);
    return attention_readout(f, g, labels);
  }

  /// Ordered (name, tensor) list of every parameter.
  std::vector<std::pair<std::string, ad::Tensor*>> parameters() {
    std::vector<std::pair<std::string, ad::Tensor*>> out;
    auto add = [&](const std::string& name, ad::Tensor& t) { out.emplace_back(name, &t); };
    encoder_.for_each_parameter("encoder.", add);
    if (query_encoder_) query_encoder_->for_each_parameter("query_encoder.", add);
    if (bilstm_forward_) bilstm_forward_->for_each_parameter("bilstm_forward", add);
    if (bilstm_backward_) bilstm_backward_->for_each_parameter("bilstm_backward", add);
    if (attention_cell_) attention_cell_->for_each_parameter("attention_lstm", add);
    if (query_cell_) query_cell_->for_each_parameter("query_lstm", add);
    if (support_cell_) support_cell_->for_each_parameter("support_lstm", add);
    return out;
  }

  std::vector<std::pair<std::string, const ad::Tensor*>> parameters() const {
    auto list = const_cast<OneShotModel*>(this)->parameters();
    std::vector<std::pair<std::string, const ad::Tensor*>> out;
    for (auto& [n, t] : list) out.emplace_back(n, t);
    return out;
  }

 private:
  template <typename T>
  const T& require(const std::optional<T>& slot, const char* what) const {
    if (!slot) throw UsageError("model variant " + std::string(to_string(variant())) + " has no " + what + " parameters");
    return *slot;
  }

  ModelConfig config_;
  gconv::Encoder encoder_;
  std::optional<gconv::Encoder> query_encoder_;
  std::optional<LSTMCell> bilstm_forward_;
  std::optional<LSTMCell> bilstm_backward_;
  std::optional<LSTMCell> attention_cell_;
  std::optional<LSTMCell> query_cell_;
  std::optional<LSTMCell> support_cell_;
};

/// Siamese readout over the raw shared-encoder embeddings.
inline double siamese_predict(const gconv::GraphInput& query, const SupportSet& support, const OneShotModel& model) {
  if (support.size() == 0) throw UsageError("siamese_predict: empty support set");
  ad::Tape t;
  Var f = model.query_encoder().encode(t, query);
  Var g = model.embed_support(t, support.molecules);
  return attention_readout(f, g, support.labels).value().item();
}

/// Probability that `query` is active given the support set, using the
/// model's head variant.
inline double predict(HeadVariant variant, const gconv::GraphInput& query, const SupportSet& support,
                      const OneShotModel& model) {
  if (variant != model.variant())
    throw UsageError(std::string("predict: requested ") + to_string(variant) + " but model holds " +
                     to_string(model.variant()) + " parameters");
  if (support.size() == 0) throw UsageError("predict: empty support set");
  if (support.labels.size() != support.size()) throw DimensionError("predict: support labels and molecules differ in count");
  ad::Tape t;
  Var f = model.query_encoder().encode(t, query);
  Var g = model.embed_support(t, support.molecules);
  return model.predict_embedded(f, g, support.labels).value().item();
}

}  // namespace oneshot::heads
