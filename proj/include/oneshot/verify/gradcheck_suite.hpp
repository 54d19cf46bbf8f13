#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oneshot/autodiff/gradcheck.hpp"
#include "oneshot/episodic/episode.hpp"
#include "oneshot/graphconv/encoder.hpp"
#include "oneshot/heads/model.hpp"

namespace oneshot::verify {

using ad::GradCheckOptions;
using ad::GradCheckResult;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

struct GradCase {
  std::string name;
  std::string group;  // autodiff, graphconv, oneshot, episodic
  std::function<GradCheckResult()> run;
};

struct GradCaseOutcome {
  std::string name;
  std::string group;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  bool passed = false;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

// Inputs in [-2, 2] with entries close to zero pushed away from the relu kink.
inline Tensor away_from_kink(Shape shape, Rng& rng) {
  Tensor t = ad::random_tensor(std::move(shape), rng);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (double& v : t.values())
    while (std::abs(v) < 1e-2) v = u(rng);
  return t;
}

inline Tensor positive(Shape shape, Rng& rng) { return ad::random_tensor(std::move(shape), rng, 0.5, 2.0); }

// Random parameters everywhere, biases included, so no gradient path is
// trivially zero.
template <typename Range>
void randomize(Range&& params, Rng& rng, double scale = 0.5) {
  for (auto& [name, p] : params)
    for (double& v : p->values()) v = std::uniform_real_distribution<double>(-scale, scale)(rng);
}

inline const std::vector<std::string>& small_molecules() {
  static const std::vector<std::string> smiles = {"CCO", "CC(C)N", "C1CC1", "CC(=O)O", "c1ccoc1", "CC(C)(C)O",
                                                  "NCC#N", "OC1CC1"};
  return smiles;
}

inline gconv::EncoderConfig reduced_encoder() {
  gconv::EncoderConfig c;
  c.conv_widths = {6, 8, 6};
  c.dense_width = 8;
  return c;
}

}  // namespace detail

/// Central-difference checks over every differentiable operation, the graph
/// layers, the three heads end to end, and the episode loss, at reduced
/// widths (p = 8, m = 2, molecules of 3 to 5 atoms).
inline std::vector<GradCase> gradcheck_cases(std::uint64_t seed = 0) {
  using namespace ad;
  std::vector<GradCase> cases;
  GradCheckOptions opt;
  opt.sample_seed = seed;

  // f maps input Vars to an output; the loss is a random projection of it.
  auto unary_case = [&](std::string name, std::vector<Tensor> inputs,
                        std::function<Var(Tape&, std::span<const Var>)> f) {
    cases.push_back({std::move(name), "autodiff", [inputs = std::move(inputs), f = std::move(f), opt, seed]() {
                       Rng rng = named_stream(seed, "gradcheck:weights");
                       std::optional<Tensor> w;
                       return check_gradients(
                           inputs,
                           [&](Tape& t, std::span<const Var> v) {
                             Var out = f(t, v);
                             if (out.value().size() == 1 && out.rank() == 0) return out;
                             if (!w) w = random_tensor(out.shape(), rng);
                             return weighted_sum(out, *w);
                           },
                           opt);
                     }});
  };

  Rng rng = named_stream(seed, "gradcheck");
  auto R = [&](Shape s) { return random_tensor(std::move(s), rng); };
  auto K = [&](Shape s) { return detail::away_from_kink(std::move(s), rng); };
  auto P = [&](Shape s) { return detail::positive(std::move(s), rng); };

  unary_case("add", {R({3, 4}), R({3, 4})}, [](Tape&, auto v) { return add(v[0], v[1]); });
  unary_case("add_broadcast", {R({3, 4}), R({4})}, [](Tape&, auto v) { return add(v[0], v[1]); });
  unary_case("sub", {R({3, 4}), R({4})}, [](Tape&, auto v) { return sub(v[0], v[1]); });
  unary_case("mul", {R({3, 4}), R({3, 4})}, [](Tape&, auto v) { return mul(v[0], v[1]); });
  unary_case("mul_broadcast", {R({3, 4}), R({4})}, [](Tape&, auto v) { return mul(v[0], v[1]); });
  unary_case("scale", {R({5})}, [](Tape&, auto v) { return scale(v[0], -1.7); });
  unary_case("add_scalar", {R({5})}, [](Tape&, auto v) { return add_scalar(v[0], 0.3); });
  unary_case("relu", {K({3, 4})}, [](Tape&, auto v) { return relu(v[0]); });
  unary_case("tanh", {R({3, 4})}, [](Tape&, auto v) { return tanh(v[0]); });
  unary_case("sigmoid", {R({3, 4})}, [](Tape&, auto v) { return sigmoid(v[0]); });
  unary_case("exp", {R({3, 4})}, [](Tape&, auto v) { return exp(v[0]); });
  unary_case("log", {P({3, 4})}, [](Tape&, auto v) { return log(v[0]); });
  unary_case("matmul", {R({3, 4}), R({4, 2})}, [](Tape&, auto v) { return matmul(v[0], v[1]); });
  unary_case("matmul_vector", {R({4}), R({4, 3})}, [](Tape&, auto v) { return matmul(v[0], v[1]); });
  unary_case("transpose", {R({3, 4})}, [](Tape&, auto v) { return transpose(v[0]); });
  unary_case("softmax", {R({5})}, [](Tape&, auto v) { return softmax(v[0]); });
  unary_case("softmax_rows", {R({3, 5})}, [](Tape&, auto v) { return softmax(v[0]); });
  unary_case("normalize", {P({5})}, [](Tape&, auto v) { return normalize(v[0]); });
  unary_case("normalize_rows", {P({3, 4})}, [](Tape&, auto v) { return normalize(v[0]); });
  unary_case("sum", {R({3, 4})}, [](Tape&, auto v) { return sum(v[0]); });
  unary_case("reduce_sum", {R({3, 4})}, [](Tape&, auto v) { return reduce_sum(v[0], 0); });
  unary_case("reduce_sum_rows", {R({3, 4})}, [](Tape&, auto v) { return reduce_sum(v[0], 1); });
  unary_case("reduce_max", {R({4, 3})}, [](Tape&, auto v) { return reduce_max(v[0], 0); });
  unary_case("reduce_max_rows", {R({4, 3})}, [](Tape&, auto v) { return reduce_max(v[0], 1); });
  unary_case("cosine", {R({6}), R({6})}, [](Tape&, auto v) { return cosine(v[0], v[1]); });
  unary_case("cosine_matrix", {R({3, 5}), R({4, 5})}, [](Tape&, auto v) { return cosine_matrix(v[0], v[1]); });
  unary_case("cosine_rows", {R({5}), R({4, 5})}, [](Tape&, auto v) { return cosine_rows(v[0], v[1]); });
  unary_case("concat", {R({3, 2}), R({3, 4})}, [](Tape&, auto v) { return concat(v[0], v[1]); });
  unary_case("slice", {R({7})}, [](Tape&, auto v) { return slice(v[0], 2, 5); });
  unary_case("gather_rows", {R({4, 3})}, [](Tape&, auto v) { return gather_rows(v[0], {2, 0, 2, 3}); });
  unary_case("row", {R({4, 3})}, [](Tape&, auto v) { return row(v[0], 1); });
  unary_case("stack_rows", {R({3}), R({3})}, [](Tape&, auto v) { return stack_rows(v); });
  unary_case("scale_rows", {R({3, 4})}, [](Tape&, auto v) { return scale_rows(v[0], {0.5, -2.0, 3.0}); });
  unary_case("reshape", {R({3, 4})}, [](Tape&, auto v) { return reshape(v[0], Shape{4, 3}); });
  unary_case("composite", {R({3, 4}), R({4, 5})},
             [](Tape&, auto v) { return sum(log(softmax(tanh(matmul(v[0], v[1]))))); });

  // Graph layers on small molecules.
  std::vector<gconv::GraphInput> graphs;
  for (const auto& s : detail::small_molecules()) graphs.push_back(gconv::prepare(mol::parse_smiles(s)));

  auto layer_case = [&](std::string name, auto make) {
    cases.push_back({std::move(name), "graphconv", [make, graphs, opt, seed]() {
                       Rng r = named_stream(seed, "gradcheck:graph");
                       auto [params, loss] = make(r, graphs);
                       std::vector<Tensor*> ptrs;
                       for (Tensor* p : params) ptrs.push_back(p);
                       GradCheckResult res = check_gradients(ptrs, loss, opt);
                       return res;
                     }});
  };

  // Each maker returns the differentiated tensors (owned by a shared state)
  // and the loss closure.
  auto conv_maker = [](bool per_edge, gconv::Activation act) {
    return [per_edge, act](Rng& r, const std::vector<gconv::GraphInput>& gs) {
      struct State {
        gconv::GraphConvLayer layer;
        std::vector<Tensor> x;
        std::vector<Tensor> w;
      };
      auto st = std::make_shared<State>();
      st->layer = gconv::GraphConvLayer::create(mol::kFeatureWidth, 5, act, r, 6, per_edge);
      for (auto& b : st->layer.b)
        for (double& v : b.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(r);
      for (const auto& g : gs) {
        Tensor x = g.features;
        for (double& v : x.values()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(r);
        st->x.push_back(x.set_requires_grad());
        st->w.push_back(random_tensor(Shape{g.node_count(), 5}, r));
      }
      std::vector<Tensor*> params;
      st->layer.for_each_parameter("conv", [&](const std::string&, Tensor& t) { params.push_back(&t); });
      for (auto& x : st->x) params.push_back(&x);
      auto loss = [st, &gs](Tape& t) {
        Var total = t.constant(Tensor::scalar(0.0));
        for (std::size_t i = 0; i < gs.size(); ++i) {
          Var y = gconv::graph_conv(t.param(st->x[i]), gs[i].adjacency, st->layer);
          total = add(total, weighted_sum(y, st->w[i]));
        }
        return total;
      };
      return std::make_pair(params, std::function<Var(Tape&)>(loss));
    };
  };
  layer_case("graph_conv", conv_maker(true, gconv::Activation::kTanh));
  layer_case("graph_conv_once_per_node", conv_maker(false, gconv::Activation::kTanh));

  auto node_op_maker = [](std::function<Var(Var, const gconv::Adjacency&)> op, std::size_t out_width) {
    return [op, out_width](Rng& r, const std::vector<gconv::GraphInput>& gs) {
      struct State {
        std::vector<Tensor> x, w;
      };
      auto st = std::make_shared<State>();
      for (const auto& g : gs) {
        st->x.push_back(random_tensor(Shape{g.node_count(), 4}, r).set_requires_grad());
        st->w.push_back(random_tensor(out_width ? Shape{g.node_count(), out_width} : Shape{4}, r));
      }
      std::vector<Tensor*> params;
      for (auto& x : st->x) params.push_back(&x);
      auto loss = [st, op, &gs](Tape& t) {
        Var total = t.constant(Tensor::scalar(0.0));
        for (std::size_t i = 0; i < gs.size(); ++i)
          total = add(total, weighted_sum(op(t.param(st->x[i]), gs[i].adjacency), st->w[i]));
        return total;
      };
      return std::make_pair(params, std::function<Var(Tape&)>(loss));
    };
  };
  layer_case("graph_pool", node_op_maker([](Var x, const gconv::Adjacency& a) { return gconv::graph_pool(x, a); }, 4));
  layer_case("graph_gather", node_op_maker([](Var x, const gconv::Adjacency&) { return gconv::graph_gather(x); }, 0));
  layer_case("dense", [](Rng& r, const std::vector<gconv::GraphInput>& gs) {
    struct State {
      gconv::DenseLayer dense;
      Tensor x, w;
    };
    auto st = std::make_shared<State>();
    st->dense = gconv::DenseLayer::create(4, 3, gconv::Activation::kTanh, r);
    for (double& v : st->dense.b.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(r);
    st->x = random_tensor(Shape{5, 4}, r).set_requires_grad();
    st->w = random_tensor(Shape{5, 3}, r);
    std::vector<Tensor*> params{&st->dense.W, &st->dense.b, &st->x};
    (void)gs;
    auto loss = [st](Tape& t) { return weighted_sum(st->dense(t.param(st->x)), st->w); };
    return std::make_pair(params, std::function<Var(Tape&)>(loss));
  });
  layer_case("encode", [](Rng& r, const std::vector<gconv::GraphInput>& gs) {
    struct State {
      gconv::Encoder enc;
      Tensor w;
    };
    auto st = std::make_shared<State>();
    st->enc = gconv::Encoder(detail::reduced_encoder(), r);
    std::vector<Tensor*> params;
    // small weights keep the tanh stages out of saturation, where gradients
    // shrink to the finite-difference noise level
    st->enc.for_each_parameter("", [&](const std::string&, Tensor& t) {
      for (double& v : t.values()) v = std::uniform_real_distribution<double>(-0.25, 0.25)(r);
      params.push_back(&t);
    });
    st->w = random_tensor(Shape{gs.size(), 8}, r);
    auto loss = [st, &gs](Tape& t) {
      std::vector<const gconv::GraphInput*> ptrs;
      for (const auto& g : gs) ptrs.push_back(&g);
      return weighted_sum(st->enc.encode_all(t, ptrs), st->w);
    };
    return std::make_pair(params, std::function<Var(Tape&)>(loss));
  });

  // LSTM cell and head building blocks.
  cases.push_back({"lstm_cell", "oneshot", [opt, seed]() {
                     Rng r = named_stream(seed, "gradcheck:lstm");
                     heads::LSTMCell cell = heads::LSTMCell::create(3, 4, 4, r);
                     for (double& v : cell.b.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(r);
                     Tensor x = random_tensor(Shape{2, 3}, r).set_requires_grad();
                     Tensor h = random_tensor(Shape{2, 4}, r).set_requires_grad();
                     Tensor c = random_tensor(Shape{2, 4}, r).set_requires_grad();
                     Tensor w1 = random_tensor(Shape{2, 4}, r), w2 = random_tensor(Shape{2, 4}, r);
                     std::vector<Tensor*> params{&cell.Wx, &cell.Wh, &cell.b, &x, &h, &c};
                     return check_gradients(params,
                                            [&](Tape& t) {
                                              auto [h1, c1] = cell.step(t.param(x), t.param(h), t.param(c));
                                              return add(weighted_sum(h1, w1), weighted_sum(c1, w2));
                                            },
                                            opt);
                   }});
  cases.push_back({"attention_readout", "oneshot", [opt, seed]() {
                     Rng r = named_stream(seed, "gradcheck:attention");
                     std::vector<Tensor> in{random_tensor(Shape{3, 8}, r), random_tensor(Shape{2, 8}, r)};
                     Tensor w = random_tensor(Shape{3}, r);
                     std::vector<int> labels{1, 0};
                     return check_gradients(
                         in,
                         [&](Tape&, std::span<const Var> v) {
                           return weighted_sum(heads::attention_readout(v[0], v[1], labels), w);
                         },
                         opt);
                   }});

  // End-to-end predictions and episode loss over every parameter group.
  struct Instance {
    episodic::Task task;
    episodic::Episode episode;
  };
  auto instance = [](std::uint64_t s) {
    Instance in;
    in.task.name = "gradcheck";
    const auto& smiles = detail::small_molecules();
    for (std::size_t i = 0; i < smiles.size(); ++i)
      in.task.examples.push_back({episodic::make_molecule(smiles[i]), static_cast<int>(i % 2)});
    // m = 2 support (one per class), three queries
    Rng r = named_stream(s, "gradcheck:episode");
    in.episode = *episodic::sample_episode(in.task, episodic::EpisodeSpec{1, 1, 3}, r);
    return in;
  };
  for (heads::HeadVariant variant :
       {heads::HeadVariant::kSiamese, heads::HeadVariant::kAttnLSTM, heads::HeadVariant::kResLSTM}) {
    auto make_model = [variant, seed]() {
      heads::ModelConfig mc;
      mc.encoder = detail::reduced_encoder();
      mc.variant = variant;
      mc.refinement_depth = 2;
      mc.attention_steps = 2;
      heads::OneShotModel model = heads::OneShotModel::create(mc, seed);
      Rng r = named_stream(seed, "gradcheck:model");
      detail::randomize(model.parameters(), r);
      return model;
    };
    GradCheckOptions sub = opt;
    sub.max_entries = 6;
    cases.push_back({std::string("predict_") + heads::to_string(variant), "oneshot", [=]() {
                       heads::OneShotModel model = make_model();
                       Instance in = instance(seed);
                       Rng r = named_stream(seed, "gradcheck:predict");
                       Tensor w = random_tensor(Shape{in.episode.batch.size()}, r);
                       std::vector<Tensor*> params;
                       for (auto& [n, p] : model.parameters()) params.push_back(p);
                       return check_gradients(params,
                                              [&](Tape& t) {
                                                const heads::SupportSet s = episodic::support_set(in.task, in.episode.support);
                                                Var g = model.embed_support(t, s.molecules);
                                                Var f = model.embed_queries(t, episodic::inputs_of(in.task, in.episode.batch));
                                                return weighted_sum(model.predict_embedded(f, g, s.labels), w);
                                              },
                                              sub);
                     }});
    cases.push_back({std::string("episode_loss_") + heads::to_string(variant), "episodic", [=]() {
                       heads::OneShotModel model = make_model();
                       Instance in = instance(seed);
                       std::vector<Tensor*> params;
                       for (auto& [n, p] : model.parameters()) params.push_back(p);
                       return check_gradients(
                           params, [&](Tape& t) { return episodic::episode_loss(t, model, in.task, in.episode); }, sub);
                     }});
  }
  return cases;
}

inline std::vector<GradCaseOutcome> run_gradcheck(const std::vector<GradCase>& cases,
                                                  double tolerance = kGradTolerance) {
  std::vector<GradCaseOutcome> out;
  for (const GradCase& c : cases) {
    GradCaseOutcome o{c.name, c.group};
    const GradCheckResult r = c.run();
    o.max_rel_error = r.max_rel_error;
    o.entries = r.entries;
    o.passed = r.entries > 0 && r.max_rel_error < tolerance;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace oneshot::verify
