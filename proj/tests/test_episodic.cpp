#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "oneshot/autodiff/gradcheck.hpp"
#include "oneshot/episodic/train.hpp"

using namespace oneshot;
using namespace oneshot::episodic;

namespace {

Task toy_task(std::size_t positives, std::size_t negatives, const std::string& name = "toy") {
  Task t{name, {}};
  const auto pos = make_molecule("CCN");
  const auto neg = make_molecule("CCO");
  for (std::size_t i = 0; i < positives; ++i) t.examples.push_back({pos, 1});
  for (std::size_t i = 0; i < negatives; ++i) t.examples.push_back({neg, 0});
  return t;
}

// Nitrogen-labelled task over small distinct molecules.
Task nitrogen_task() {
  const char* smiles[] = {"CCN", "CN", "NCCO", "CCCN", "NC=O", "c1ccncc1", "CC(N)C", "NCCN", "CNC", "N#CC",
                          "CCO", "CO", "OCCO", "CCCC", "C=O", "c1ccccc1", "CC(O)C", "CCCl", "COC", "CC#C",
                          "CCNC", "NCC(=O)O", "CCCCN", "OCCN", "CCC", "CCCO", "FCC", "CCBr", "C1CC1", "CC=C"};
  Task t{"has_nitrogen", {}};
  for (const char* s : smiles) {
    auto m = make_molecule(s);
    int y = 0;
    for (const auto& a : m->graph.atoms) y |= a.symbol == "N";
    t.examples.push_back({m, y});
  }
  return t;
}

heads::ModelConfig small_model(heads::HeadVariant v = heads::HeadVariant::kResLSTM) {
  heads::ModelConfig c;
  c.variant = v;
  c.encoder.conv_widths = {16, 16};
  c.encoder.dense_width = 16;
  return c;
}

bool same_parameters(const heads::OneShotModel& a, const heads::OneShotModel& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || pa[i].second->shape() != pb[i].second->shape()) return false;
    if (std::memcmp(pa[i].second->data(), pb[i].second->data(), pa[i].second->size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(Episode, SpecValidation) {
  EXPECT_THROW((EpisodeSpec{0, 0, 4}.validate()), ConfigError);
  EXPECT_THROW((EpisodeSpec{1, 1, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((EpisodeSpec{1, 0, 1}.validate()));
  EXPECT_EQ((EpisodeSpec{10, 10, 128}.label()), "10 pos, 10 neg");
}

TEST(Episode, ExactlyOneSpareExampleGivesBatchOfOne) {
  const Task t = toy_task(3, 3);
  Rng rng(1);
  const auto ep = sample_episode(t, EpisodeSpec{3, 2, 128}, rng);
  ASSERT_TRUE(ep);
  EXPECT_EQ(ep->support.size(), 5u);
  EXPECT_EQ(ep->batch.size(), 1u);
}

TEST(Episode, CompositionAndDisjointness) {
  const Task t = toy_task(12, 30);
  Rng rng(2);
  for (int draw = 0; draw < 200; ++draw) {
    const auto ep = sample_episode(t, EpisodeSpec{4, 5, 10}, rng);
    ASSERT_TRUE(ep);
    std::size_t pos = 0;
    for (std::size_t i : ep->support) pos += t.examples[i].label;
    EXPECT_EQ(pos, 4u);
    EXPECT_EQ(ep->support.size(), 9u);
    EXPECT_EQ(ep->batch.size(), 10u);
    std::vector<int> seen(t.examples.size(), 0);
    for (std::size_t i : ep->support) ++seen[i];
    for (std::size_t i : ep->batch) ++seen[i];
    for (int c : seen) EXPECT_LE(c, 1);
  }
}

TEST(Episode, TooFewExamplesSignalsSkip) {
  Rng rng(3);
  EXPECT_FALSE(sample_episode(toy_task(2, 10), EpisodeSpec{3, 3, 4}, rng));
  EXPECT_FALSE(sample_episode(toy_task(10, 2), EpisodeSpec{3, 3, 4}, rng));
  // Enough of each class but nothing left for the batch.
  EXPECT_FALSE(sample_episode(toy_task(3, 3), EpisodeSpec{3, 3, 4}, rng));
}

TEST(Episode, SameSeedSameEpisode) {
  const Task t = toy_task(20, 20);
  Rng a(4), b(4);
  for (int draw = 0; draw < 20; ++draw) {
    const auto ea = sample_episode(t, EpisodeSpec{5, 5, 8}, a);
    const auto eb = sample_episode(t, EpisodeSpec{5, 5, 8}, b);
    EXPECT_EQ(ea->support, eb->support);
    EXPECT_EQ(ea->batch, eb->batch);
  }
}

TEST(Episode, SupportFrequencyIsUniformWithinClass) {
  // Each positive should appear with frequency n_pos / |positives|; the
  // tolerance is three binomial standard deviations.
  const Task t = toy_task(10, 10);
  const EpisodeSpec spec{3, 3, 4};
  const int draws = 10000;
  std::vector<int> count(t.examples.size(), 0);
  Rng rng(5);
  for (int d = 0; d < draws; ++d) {
    const auto ep = sample_episode(t, spec, rng);
    for (std::size_t i : ep->support) ++count[i];
  }
  const double p = 0.3;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (std::size_t i = 0; i < count.size(); ++i)
    EXPECT_NEAR(static_cast<double>(count[i]) / draws, p, 3 * sigma) << "example " << i;
}

TEST(EpisodeLoss, PerfectPredictionsGiveNearZeroLoss) {
  const Task t = toy_task(6, 0);
  const auto model = heads::OneShotModel::create(small_model(), 1);
  Episode ep{{0, 1, 2}, {3, 4, 5}};
  ad::Tape tape;
  const double loss = episode_loss(tape, model, t, ep).value().item();
  EXPECT_NEAR(loss, -std::log(1.0 + kLossClamp), 1e-15);
}

TEST(EpisodeLoss, HalfPredictionsGiveLogTwo) {
  // Identical molecules on both sides of the support give equal attention.
  Task t{"half", {}};
  const auto m = make_molecule("CCO");
  for (int y : {1, 0, 1, 0}) t.examples.push_back({m, y});
  for (const char* name : {"siamese", "reslstm"}) {
    const auto model = heads::OneShotModel::create(small_model(heads::parse_variant(name)), 1);
    ad::Tape tape;
    const double loss = episode_loss(tape, model, t, Episode{{0, 1}, {2, 3}}).value().item();
    EXPECT_NEAR(loss, -std::log(0.5 + kLossClamp), 1e-12) << name;
    EXPECT_NEAR(loss, std::log(2.0), 1e-6) << name;
  }
  ad::Tape tape;
  EXPECT_THROW(episode_loss(tape, heads::OneShotModel::create(small_model(), 1), t, Episode{{0, 1}, {}}), UsageError);
}

TEST(EpisodeLoss, GradientMatchesFiniteDifferences) {
  const Task t = nitrogen_task();
  heads::ModelConfig cfg = small_model();
  cfg.encoder.conv_widths = {6, 6};
  cfg.encoder.dense_width = 6;
  cfg.refinement_depth = 2;
  auto model = heads::OneShotModel::create(cfg, 2);
  Rng rng(6);
  std::vector<ad::Tensor*> params;
  for (auto& [n, p] : model.parameters()) {
    for (double& v : p->values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    params.push_back(p);
  }
  const Episode ep{{0, 12}, {1, 13, 20}};
  ad::GradCheckOptions opt;
  opt.max_entries = 6;
  const auto r = ad::check_gradients(params, [&](ad::Tape& tape) { return episode_loss(tape, model, t, ep); }, opt);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Train, NoUsableTaskIsAConfigError) {
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.episodes = 3;
  cfg.spec = {10, 10, 8};
  auto model = heads::OneShotModel::create(cfg.model, 0);
  const auto before = heads::OneShotModel(model);
  EXPECT_THROW(train_model(model, {toy_task(3, 30)}, cfg), ConfigError);
  EXPECT_TRUE(same_parameters(model, before));
  EXPECT_THROW(train({}, cfg), ConfigError);
  cfg.episodes = 0;
  EXPECT_THROW(train({toy_task(30, 30)}, cfg), ConfigError);
}

TEST(Train, SameSeedGivesBitIdenticalParameters) {
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.episodes = 6;
  cfg.spec = {3, 3, 6};
  cfg.seed = 11;
  const std::vector<Task> tasks{nitrogen_task()};
  const auto a = train(tasks, cfg), b = train(tasks, cfg);
  EXPECT_TRUE(same_parameters(a.model, b.model));
  ASSERT_EQ(a.trace.size(), 6u);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].episode, i);
    EXPECT_EQ(a.trace[i].loss, b.trace[i].loss);
  }
  cfg.seed = 12;
  EXPECT_FALSE(same_parameters(a.model, train(tasks, cfg).model));
}

TEST(Train, ParametersMoveIffGradientsAreNonZero) {
  // A homogeneous support predicts its label whatever the parameters are, so
  // the gradient vanishes and the step must leave everything in place.
  auto model = heads::OneShotModel::create(small_model(), 3);
  const auto before = heads::OneShotModel(model);
  ad::AdamState adam;
  const Task same = toy_task(6, 0);
  optimizer_step(model, adam, [&](ad::Tape& t) { return episode_loss(t, model, same, Episode{{0, 1}, {2, 3}}); });
  EXPECT_EQ(adam.t(), 1u);
  EXPECT_TRUE(same_parameters(model, before));
  const Task mixed = nitrogen_task();
  optimizer_step(model, adam, [&](ad::Tape& t) { return episode_loss(t, model, mixed, Episode{{0, 12}, {1, 13}}); });
  EXPECT_FALSE(same_parameters(model, before));
}

TEST(Train, UniformTaskDraw) {
  TrainConfig cfg;
  cfg.model = small_model(heads::HeadVariant::kSiamese);
  cfg.model.encoder.conv_widths = {4};
  cfg.model.encoder.dense_width = 4;
  cfg.episodes = 600;
  cfg.spec = {1, 1, 1};
  std::vector<Task> tasks{toy_task(3, 3, "a"), toy_task(3, 3, "b"), toy_task(3, 3, "c"), toy_task(1, 1, "unusable")};
  std::map<std::string, int> count;
  for (const auto& r : train(tasks, cfg).trace) ++count[r.task];
  EXPECT_EQ(count.count("unusable"), 0u);
  for (const char* n : {"a", "b", "c"}) EXPECT_NEAR(count[n], 200, 3 * std::sqrt(600 * (1.0 / 3) * (2.0 / 3))) << n;
}

TEST(Train, LossFallsOnNitrogenTask) {
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.episodes = 2000;
  cfg.spec = {3, 3, 8};
  cfg.seed = 3;
  const auto r = train({nitrogen_task()}, cfg);
  auto median_loss = [&](std::size_t begin) {
    std::vector<double> v;
    for (std::size_t i = begin; i < begin + 100; ++i) v.push_back(r.trace[i].loss);
    std::nth_element(v.begin(), v.begin() + 50, v.end());
    return v[50];
  };
  EXPECT_LT(median_loss(cfg.episodes - 100), median_loss(0));
}
