#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "oneshot/autodiff/gradcheck.hpp"
#include "oneshot/heads/model.hpp"
#include "oneshot/molecule/smiles.hpp"
#include "support/oracles.hpp"

using namespace oneshot;
using namespace oneshot::heads;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Mat to_mat(const Tensor& t) {
  Mat m;
  for (std::size_t i = 0; i < t.rows(); ++i) m.push_back(oracle::row_of(t, i));
  return m;
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

// a = exp(cos(q, rows)) / sum, then sum_i a_i rows_i.
Vec attention_read(const Vec& q, const Mat& keys, const Mat& values) {
  Vec w;
  for (const Vec& k : keys) w.push_back(std::exp(oracle::cosine(q, k)));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  Vec out(values[0].size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] / total * values[i][j];
  return out;
}

// Refinement written out with plain vectors, one support row at a time.
std::pair<Vec, Mat> reslstm_oracle(const Vec& f, const Mat& g, std::size_t L, const LSTMCell& qc, const LSTMCell& sc) {
  const std::size_t m = g.size(), p = f.size();
  Vec dz(p, 0.0), cz(p, 0.0);
  Mat dZ(m, Vec(p, 0.0)), cZ(m, Vec(p, 0.0));
  Mat R = g;
  for (std::size_t l = 0; l < L; ++l) {
    const Vec r = attention_read(add(f, dz), R, R);
    Mat R_next;
    for (std::size_t i = 0; i < m; ++i) R_next.push_back(attention_read(add(R[i], dZ[i]), g, g));
    R = R_next;
    auto q = oracle::lstm_step(qc.Wx, qc.Wh, qc.b, concat(dz, r), {}, cz);
    dz = q.h;
    cz = q.c;
    for (std::size_t i = 0; i < m; ++i) {
      auto s = oracle::lstm_step(sc.Wx, sc.Wh, sc.b, concat(dZ[i], R[i]), {}, cZ[i]);
      dZ[i] = s.h;
      cZ[i] = s.c;
    }
  }
  Mat out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(add(g[i], dZ[i]));
  return {add(f, dz), out};
}

void randomize(LSTMCell& cell, Rng& rng, double scale = 0.5) {
  cell.for_each_parameter("", [&](const std::string&, Tensor& t) {
    for (double& v : t.values()) v = std::uniform_real_distribution<double>(-scale, scale)(rng);
  });
}

ModelConfig small_config(HeadVariant v) {
  ModelConfig c;
  c.variant = v;
  c.encoder.conv_widths = {8, 8};
  c.encoder.dense_width = 8;
  return c;
}

std::vector<gconv::GraphInput> molecules(std::initializer_list<const char*> smiles) {
  std::vector<gconv::GraphInput> out;
  for (const char* s : smiles) out.push_back(gconv::prepare(mol::parse_smiles(s)));
  return out;
}

const char* kVariants[] = {"siamese", "attnlstm", "reslstm"};

}  // namespace

TEST(Similarity, Examples) {
  Tape t;
  Var q = t.constant(Tensor::vector({1, 2}));
  const Tensor same = similarity_vector(q, t.constant(Tensor::matrix({{1, 2}, {2, 4}}))).value();
  EXPECT_NEAR(same[0], std::exp(1.0), 1e-15);
  EXPECT_NEAR(same[1], std::exp(1.0), 1e-15);
  EXPECT_EQ(similarity_vector(q, t.constant(Tensor::matrix({{-2, 1}}))).value()[0], 1.0);
  EXPECT_THROW(similarity_vector(q, t.constant(Tensor(Shape{2, 3}))), DimensionError);
}

TEST(Similarity, MatchesScalarLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = ad::random_tensor(Shape{6}, rng), M = ad::random_tensor(Shape{5, 6}, rng);
    Tape t;
    const Tensor e = similarity_vector(t.constant(q), t.constant(M)).value();
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(e[i], std::exp(oracle::cosine(Vec(q.values().begin(), q.values().end()), oracle::row_of(M, i))), 1e-14);
      EXPECT_GT(e[i], 0.0);
    }
  }
}

TEST(Normalize, Examples) {
  Tape t;
  const Tensor u = attention_normalize(t.constant(Tensor::vector({2, 2, 2, 2}))).value();
  for (double v : u.values()) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(attention_normalize(t.constant(Tensor::vector({3.5}))).value()[0], 1.0);
  EXPECT_THROW(attention_normalize(t.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(attention_normalize(t.constant(Tensor::vector({1.0, -2.0}))), DomainError);
}

TEST(Normalize, RowsSumToOne) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor E = ad::random_tensor(Shape{7, 7}, rng, 1e-3, 10.0);
    Tape t;
    const Tensor A = attention_normalize(t.constant(E)).value();
    for (std::size_t i = 0; i < 7; ++i) {
      const auto r = A.row(i);
      EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-12);
    }
  }
}

TEST(Readout, HandSetTwoElementSupport) {
  // Query aligned with the first support row, orthogonal to the second:
  // e = [exp(1), exp(0)], labels [1, 0].
  Tape t;
  const double h = attention_readout(t.constant(Tensor::vector({1, 0})), t.constant(Tensor::matrix({{3, 0}, {0, 5}})),
                                     std::vector<int>{1, 0})
                       .value()
                       .item();
  EXPECT_NEAR(h, std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(h, 0.7311, 1e-4);
}

TEST(Predict, HomogeneousSupportGivesItsLabel) {
  const auto mols = molecules({"CCO", "c1ccccc1", "CC(=O)O", "CN"});
  for (const char* name : kVariants) {
    const OneShotModel model = OneShotModel::create(small_config(parse_variant(name)), 3);
    for (int c : {0, 1}) {
      SupportSet s{{&mols[1], &mols[2], &mols[3]}, {c, c, c}};
      EXPECT_EQ(predict(model.variant(), mols[0], s, model), static_cast<double>(c)) << name;
    }
  }
  const OneShotModel siamese = OneShotModel::create(small_config(HeadVariant::kSiamese), 3);
  SupportSet s{{&mols[1], &mols[2]}, {1, 1}};
  EXPECT_EQ(siamese_predict(mols[0], s, siamese), 1.0);
}

TEST(Predict, ErrorsOnEmptySupportAndVariantMismatch) {
  const auto mols = molecules({"CCO", "CN"});
  const OneShotModel model = OneShotModel::create(small_config(HeadVariant::kSiamese), 3);
  EXPECT_THROW(predict(HeadVariant::kSiamese, mols[0], SupportSet{}, model), UsageError);
  EXPECT_THROW(siamese_predict(mols[0], SupportSet{}, model), UsageError);
  EXPECT_THROW(predict(HeadVariant::kResLSTM, mols[0], SupportSet{{&mols[1]}, {1}}, model), UsageError);
  EXPECT_THROW(model.query_cell(), UsageError);
}

TEST(Predict, UnusedParameterGroupsAreAbsent) {
  auto names = [](HeadVariant v) {
    std::vector<std::string> out;
    for (const auto& [n, t] : OneShotModel::create(small_config(v), 0).parameters()) out.push_back(n);
    return out;
  };
  auto has = [](const std::vector<std::string>& names, const std::string& prefix) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
  };
  const auto s = names(HeadVariant::kSiamese), a = names(HeadVariant::kAttnLSTM), r = names(HeadVariant::kResLSTM);
  EXPECT_FALSE(has(s, "bilstm") || has(s, "attention") || has(s, "query_lstm"));
  EXPECT_TRUE(has(a, "bilstm_forward") && has(a, "attention_lstm") && !has(a, "query_lstm"));
  EXPECT_TRUE(has(r, "query_lstm") && has(r, "support_lstm") && !has(r, "bilstm"));
}

TEST(Predict, DuplicatedSupportLeavesSiameseUnchanged) {
  const auto mols = molecules({"CCO", "c1ccccc1", "CC(=O)O", "CN", "OCCO"});
  const OneShotModel model = OneShotModel::create(small_config(HeadVariant::kSiamese), 4);
  SupportSet s{{&mols[1], &mols[2], &mols[3], &mols[4]}, {1, 0, 1, 0}};
  SupportSet twice = s;
  twice.molecules.insert(twice.molecules.end(), s.molecules.begin(), s.molecules.end());
  twice.labels.insert(twice.labels.end(), s.labels.begin(), s.labels.end());
  EXPECT_NEAR(siamese_predict(mols[0], twice, model), siamese_predict(mols[0], s, model), 1e-15);
}

TEST(Predict, ConvexCombinationOfLabels) {
  Rng rng(5);
  for (const char* name : kVariants) {
    OneShotModel model = OneShotModel::create(small_config(parse_variant(name)), 5);
    for (int trial = 0; trial < 10; ++trial) {
      Tape t;
      const Tensor g = ad::random_tensor(Shape{6, 8}, rng);
      const Tensor f = ad::random_tensor(Shape{3, 8}, rng);
      std::vector<int> y{1, 0, 1, 1, 0, 0};
      const Tensor h = model.predict_embedded(t.constant(f), t.constant(g), y).value();
      for (double v : h.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(BiLSTM, ZeroWeightsReturnInputs) {
  Rng rng(6);
  LSTMCell fwd = LSTMCell::create(4, 4, 4, rng), bwd = LSTMCell::create(4, 4, 4, rng);
  for (LSTMCell* c : {&fwd, &bwd}) {
    c->Wx.fill(0.0);
    c->Wh.fill(0.0);
  }
  const Tensor g = ad::random_tensor(Shape{3, 4}, rng);
  Tape t;
  EXPECT_EQ(bilstm_support(t.constant(g), fwd, bwd).value(), g);
  const Tensor one = ad::random_tensor(Shape{1, 4}, rng);
  EXPECT_EQ(bilstm_support(t.constant(one), fwd, bwd).value().shape(), (Shape{1, 4}));
  EXPECT_THROW(bilstm_support(t.constant(Tensor(Shape{0, 4})), fwd, bwd), UsageError);
}

TEST(BiLSTM, MatchesStepOracleInBothOrders) {
  Rng rng(7);
  LSTMCell fwd = LSTMCell::create(3, 3, 3, rng), bwd = LSTMCell::create(3, 3, 3, rng);
  randomize(fwd, rng);
  randomize(bwd, rng);
  const Tensor g = ad::random_tensor(Shape{4, 3}, rng);
  auto oracle_bilstm = [&](const Mat& rows) {
    const std::size_t m = rows.size();
    Mat f(m), b(m);
    Vec h(3, 0.0), c(3, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      auto s = oracle::lstm_step(fwd.Wx, fwd.Wh, fwd.b, rows[i], h, c);
      h = f[i] = s.h;
      c = s.c;
    }
    h.assign(3, 0.0);
    c.assign(3, 0.0);
    for (std::size_t i = m; i-- > 0;) {
      auto s = oracle::lstm_step(bwd.Wx, bwd.Wh, bwd.b, rows[i], h, c);
      h = b[i] = s.h;
      c = s.c;
    }
    Mat out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(add(add(f[i], b[i]), rows[i]));
    return out;
  };
  Mat rows = to_mat(g);
  Mat reversed(rows.rbegin(), rows.rend());
  Tensor rg(Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) rg(i, j) = reversed[i][j];
  for (const auto& [input, expect] : {std::pair{g, oracle_bilstm(rows)}, std::pair{rg, oracle_bilstm(reversed)}}) {
    Tape t;
    const Mat got = to_mat(bilstm_support(t.constant(input), fwd, bwd).value());
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got[i][j], expect[i][j], 1e-14);
  }
}

TEST(AttLSTM, SingleStepMatchesOracle) {
  Rng rng(8);
  const std::size_t p = 3;
  LSTMCell cell = LSTMCell::create(p, 2 * p, p, rng);
  randomize(cell, rng);
  const Tensor f = ad::random_tensor(Shape{p}, rng), g = ad::random_tensor(Shape{4, p}, rng);
  // h0 = 0: q = f'; weights softmax(q . g_i); r = sum w_i g_i; one step with [h0, r].
  const Vec fv = oracle::row_of(f, 0);
  const Mat rows = to_mat(g);
  Vec logits;
  for (const Vec& r : rows) logits.push_back(std::inner_product(fv.begin(), fv.end(), r.begin(), 0.0));
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - mx));
  Vec read(p, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < p; ++j) read[j] += logits[i] / z * rows[i][j];
  auto s = oracle::lstm_step(cell.Wx, cell.Wh, cell.b, fv, concat(Vec(p, 0.0), read), Vec(p, 0.0));
  const Vec expect = add(s.h, fv);
  Tape t;
  const Tensor got = attlstm_query(t.constant(f), t.constant(g), 1, cell).value();
  for (std::size_t j = 0; j < p; ++j) EXPECT_NEAR(got[j], expect[j], 1e-14);
}

TEST(AttLSTM, ZeroWeightsAndPermutationInvariance) {
  Rng rng(9);
  LSTMCell cell = LSTMCell::create(5, 10, 5, rng);
  const Tensor f = ad::random_tensor(Shape{5}, rng), g = ad::random_tensor(Shape{6, 5}, rng);
  {
    LSTMCell zero = cell;
    zero.Wx.fill(0.0);
    zero.Wh.fill(0.0);
    Tape t;
    EXPECT_EQ(attlstm_query(t.constant(f), t.constant(g), 3, zero).value(), f);
  }
  randomize(cell, rng);
  Tape t;
  const Tensor base = attlstm_query(t.constant(f), t.constant(g), 3, cell).value();
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor pg = oracle::permute_rows(g, oracle::random_permutation(6, rng));
    const Tensor got = attlstm_query(t.constant(f), t.constant(pg), 3, cell).value();
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(got[j], base[j], 1e-12);
  }
  EXPECT_THROW(attlstm_query(t.constant(f), t.constant(g), 0, cell), ConfigError);
}

TEST(AttnLSTMModel, PredictionDependsOnSupportOrder) {
  // The BiLSTM reads the support as a sequence, so reordering it changes the
  // prediction; this is a known property of the head, not a defect.
  Rng rng(10);
  OneShotModel model = OneShotModel::create(small_config(HeadVariant::kAttnLSTM), 10);
  for (const char* c : {"bilstm_forward", "bilstm_backward"}) randomize(model.mutable_cell(c), rng, 1.0);
  const Tensor f = ad::random_tensor(Shape{8}, rng), g = ad::random_tensor(Shape{4, 8}, rng);
  const std::vector<int> y{1, 0, 0, 1};
  Tape t;
  const double base = model.predict_embedded(t.constant(f), t.constant(g), y).value().item();
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<int> py(4);
  for (std::size_t i = 0; i < 4; ++i) py[perm[i]] = y[i];
  const double permuted = model.predict_embedded(t.constant(f), t.constant(oracle::permute_rows(g, perm)), py).value().item();
  EXPECT_GT(std::abs(permuted - base), 1e-9);
}

TEST(ResLSTM, ZeroIterationsReturnInputsUnchanged) {
  Rng rng(11);
  LSTMCell qc = LSTMCell::create(4, 0, 2, rng), sc = LSTMCell::create(4, 0, 2, rng);
  Tape t;
  Var f = t.constant(ad::random_tensor(Shape{2}, rng));
  Var g = t.constant(ad::random_tensor(Shape{3, 2}, rng));
  auto [rf, rg] = reslstm_refine(f, g, 0, qc, sc);
  EXPECT_EQ(rf.id(), f.id());
  EXPECT_EQ(rg.id(), g.id());
}

TEST(ResLSTM, OneIterationMatchesHandTrace) {
  // L=1, m=2, p=2 with fixed weights; the oracle evaluates the eight update
  // equations with scalar loops.
  Rng rng(12);
  LSTMCell qc = LSTMCell::create(4, 0, 2, rng), sc = LSTMCell::create(4, 0, 2, rng);
  for (std::size_t i = 0; i < qc.Wx.size(); ++i) {
    qc.Wx[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
    sc.Wx[i] = 0.05 * static_cast<double>(i % 5) - 0.1;
  }
  for (std::size_t i = 0; i < qc.b.size(); ++i) {
    qc.b[i] = 0.1 * static_cast<double>(i);
    sc.b[i] = -0.05 * static_cast<double>(i);
  }
  const Tensor f = Tensor::vector({0.6, -0.2});
  const Tensor g = Tensor::matrix({{1.0, 0.5}, {-0.3, 0.8}});
  auto [ef, eg] = reslstm_oracle(oracle::row_of(f, 0), to_mat(g), 1, qc, sc);
  Tape t;
  RefinementState state;
  auto [rf, rg] = reslstm_refine(t.constant(f), t.constant(g), 1, qc, sc, &state);
  EXPECT_EQ(state.iterations, 1u);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(rf.value()[j], ef[j], 1e-15);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(rg.value()(i, j), eg[i][j], 1e-15);
}

TEST(ResLSTM, SeveralIterationsMatchOracle) {
  Rng rng(13);
  LSTMCell qc = LSTMCell::create(10, 0, 5, rng), sc = LSTMCell::create(10, 0, 5, rng);
  randomize(qc, rng);
  randomize(sc, rng);
  const Tensor f = ad::random_tensor(Shape{5}, rng), g = ad::random_tensor(Shape{4, 5}, rng);
  auto [ef, eg] = reslstm_oracle(oracle::row_of(f, 0), to_mat(g), 3, qc, sc);
  Tape t;
  auto [rf, rg] = reslstm_refine(t.constant(f), t.constant(g), 3, qc, sc);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(rf.value()[j], ef[j], 1e-13);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(rg.value()(i, j), eg[i][j], 1e-13);
}

TEST(ResLSTM, SupportPermutationEquivariance) {
  Rng rng(14);
  OneShotModel model = OneShotModel::create(small_config(HeadVariant::kResLSTM), 14);
  randomize(model.mutable_cell("query"), rng);
  randomize(model.mutable_cell("support"), rng);
  const Tensor f = ad::random_tensor(Shape{8}, rng), g = ad::random_tensor(Shape{5, 8}, rng);
  const std::vector<int> y{1, 0, 1, 0, 0};
  Tape t;
  auto [rf, rg] = reslstm_refine(t.constant(f), t.constant(g), 3, model.query_cell(), model.support_cell());
  const double base = model.predict_embedded(t.constant(f), t.constant(g), y).value().item();
  for (int trial = 0; trial < 10; ++trial) {
    const auto perm = oracle::random_permutation(5, rng);
    std::vector<int> py(5);
    for (std::size_t i = 0; i < 5; ++i) py[perm[i]] = y[i];
    const Tensor pg = oracle::permute_rows(g, perm);
    auto [pf, prg] = reslstm_refine(t.constant(f), t.constant(pg), 3, model.query_cell(), model.support_cell());
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(pf.value()[j], rf.value()[j], 1e-12);
    const Tensor expect = oracle::permute_rows(rg.value(), perm);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(prg.value()[i], expect[i], 1e-12);
    EXPECT_NEAR(model.predict_embedded(t.constant(f), t.constant(pg), py).value().item(), base, 1e-12);
  }
}

TEST(ResLSTM, ZeroDepthReproducesSiameseBitForBit) {
  ModelConfig rc = small_config(HeadVariant::kResLSTM);
  rc.refinement_depth = 0;
  const OneShotModel res = OneShotModel::create(rc, 15);
  OneShotModel siamese = OneShotModel::create(small_config(HeadVariant::kSiamese), 99);
  siamese.encoder() = res.encoder();
  const auto mols = molecules({"CCO", "c1ccccc1", "CC(=O)O", "CN", "OCCO", "CCl"});
  SupportSet s{{&mols[1], &mols[2], &mols[3], &mols[4], &mols[5]}, {1, 0, 1, 0, 0}};
  const double a = predict(HeadVariant::kResLSTM, mols[0], s, res);
  const double b = siamese_predict(mols[0], s, siamese);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Predict, GradientMatchesFiniteDifferences) {
  const auto mols = molecules({"CCO", "CN", "OC=O"});
  for (const char* name : kVariants) {
    ModelConfig cfg = small_config(parse_variant(name));
    cfg.refinement_depth = 2;
    cfg.attention_steps = 2;
    OneShotModel model = OneShotModel::create(cfg, 16);
    Rng rng(16);
    std::vector<Tensor*> params;
    for (auto& [n, p] : model.parameters()) {
      for (double& v : p->values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
      params.push_back(p);
    }
    ad::GradCheckOptions opt;
    opt.max_entries = 6;
    const std::vector<int> y{1, 0};
    auto r = ad::check_gradients(params, [&](Tape& t) {
      Var f = model.query_encoder().encode(t, mols[0]);
      Var g = model.embed_support(t, {&mols[1], &mols[2]});
      return model.predict_embedded(f, g, y);
    }, opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << name;
  }
}
