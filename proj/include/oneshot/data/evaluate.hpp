#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "oneshot/data/collection.hpp"
#include "oneshot/data/metrics.hpp"
#include "oneshot/episodic/episode.hpp"
#include "oneshot/episodic/train.hpp"
#include "oneshot/heads/model.hpp"

namespace oneshot::data {

/// Scores for `queries` of `task` given the support indices. Both index
/// into task.examples.
using Predictor = std::function<std::vector<double>(const Task& task, const std::vector<std::size_t>& support,
                                                    const std::vector<std::size_t>& queries)>;

struct TaskReport {
  std::string task;
  bool skipped = false;
  std::string skip_reason;
  std::vector<double> auc;       // one per trial
  std::vector<double> accuracy;  // one per trial
  double mean_auc = 0.0;
  double mean_accuracy = 0.0;
  std::size_t redraws = 0;
};

struct EvalReport {
  std::vector<TaskReport> tasks;
  double median_auc = 0.0;
  double median_accuracy = 0.0;
  std::string metric = "roc_auc";
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_trials = 0;
  std::uint64_t seed = 0;
  std::string variant;
  bool transfer = false;
  std::string train_collection;
  std::string test_collection;

  std::string spec_label() const { return std::to_string(n_pos) + " pos, " + std::to_string(n_neg) + " neg"; }

  /// Median of the stored per-task means, recomputed from the trial lists.
  double recompute_median_auc() const {
    std::vector<double> means;
    for (const auto& t : tasks) {
      if (t.skipped) continue;
      double s = 0.0;
      for (double a : t.auc) s += a;
      means.push_back(s / static_cast<double>(t.auc.size()));
    }
    return means.empty() ? 0.0 : lower_median(std::move(means));
  }
};

inline constexpr std::size_t kMaxRedraws = 100;

/// Per task, n_trials support draws; each trial scores every remaining
/// example of the task. Trials whose queries hold a single class are
/// redrawn. Tasks too small for the episode spec are reported as skipped
/// and left out of the median.
inline EvalReport evaluate(const Predictor& predictor, const std::vector<Task>& test_tasks,
                           const episodic::EpisodeSpec& spec, std::size_t n_trials, std::uint64_t seed) {
  spec.validate();
  if (n_trials == 0) throw ConfigError("evaluate: n_trials must be at least 1");
  EvalReport report;
  report.n_pos = spec.n_pos;
  report.n_neg = spec.n_neg;
  report.n_trials = n_trials;
  report.seed = seed;

  episodic::EpisodeSpec all = spec;
  all.batch_size = std::numeric_limits<std::size_t>::max();
  std::vector<double> means_auc, means_acc;
  for (const Task& task : test_tasks) {
    TaskReport tr;
    tr.task = task.name;
    if (!episodic::task_usable(task, spec)) {
      tr.skipped = true;
      tr.skip_reason = "task has " + std::to_string(task.positives()) + " positives and " +
                       std::to_string(task.negatives()) + " negatives";
      report.tasks.push_back(std::move(tr));
      continue;
    }
    Rng rng = named_stream(seed, "eval:" + task.name);
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
      episodic::Episode ep;
      std::vector<int> labels;
      for (std::size_t attempt = 0;; ++attempt) {
        if (attempt > kMaxRedraws)
          throw std::runtime_error("evaluate: task " + task.name + " kept producing single-class query sets");
        ep = *episodic::sample_episode(task, all, rng);
        labels.clear();
        for (std::size_t q : ep.batch) labels.push_back(task.examples[q].label);
        const bool both = std::find(labels.begin(), labels.end(), 1) != labels.end() &&
                          std::find(labels.begin(), labels.end(), 0) != labels.end();
        if (both) break;
        ++tr.redraws;
      }
      for (std::size_t s : ep.support)
        if (std::find(ep.batch.begin(), ep.batch.end(), s) != ep.batch.end())
          throw std::logic_error("evaluate: support example leaked into the query set");
      const std::vector<double> scores = predictor(task, ep.support, ep.batch);
      tr.auc.push_back(*roc_auc(scores, labels));
      tr.accuracy.push_back(accuracy(scores, labels));
    }
    double sa = 0.0, sc = 0.0;
    for (std::size_t i = 0; i < n_trials; ++i) {
      sa += tr.auc[i];
      sc += tr.accuracy[i];
    }
    tr.mean_auc = sa / static_cast<double>(n_trials);
    tr.mean_accuracy = sc / static_cast<double>(n_trials);
    means_auc.push_back(tr.mean_auc);
    means_acc.push_back(tr.mean_accuracy);
    report.tasks.push_back(std::move(tr));
  }
  if (!means_auc.empty()) {
    report.median_auc = lower_median(means_auc);
    report.median_accuracy = lower_median(means_acc);
  }
  return report;
}

/// Predictor backed by a model with frozen parameters. Each molecule is
/// encoded once and its embedding reused across trials and tasks.
class ModelPredictor {
 public:
  explicit ModelPredictor(const heads::OneShotModel& model) : model_(&model) {}

  std::vector<double> operator()(const Task& task, const std::vector<std::size_t>& support,
                                 const std::vector<std::size_t>& queries) {
    const std::size_t p = model_->embedding_width();
    ad::Tensor g(ad::Shape{support.size(), p});
    ad::Tensor f(ad::Shape{queries.size(), p});
    std::vector<int> labels;
    for (std::size_t i = 0; i < support.size(); ++i) {
      const auto& e = task.examples[support[i]];
      const ad::Tensor& emb = embedding(e.molecule, false);
      std::copy(emb.values().begin(), emb.values().end(), g.row(i).begin());
      labels.push_back(e.label);
    }
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const ad::Tensor& emb = embedding(task.examples[queries[i]].molecule, true);
      std::copy(emb.values().begin(), emb.values().end(), f.row(i).begin());
    }
    ad::Tape tape;
    ad::Var h = model_->predict_embedded(tape.constant(std::move(f)), tape.constant(std::move(g)), labels);
    return {h.value().values().begin(), h.value().values().end()};
  }

 private:
  const ad::Tensor& embedding(const episodic::MoleculePtr& m, bool query) {
    auto& cache = query && !model_->config().tie_encoders ? query_cache_ : support_cache_;
    auto it = cache.find(m.get());
    if (it != cache.end()) return it->second.second;
    ad::Tape tape;
    const gconv::Encoder& enc = query ? model_->query_encoder() : model_->encoder();
    ad::Tensor emb = enc.encode(tape, m->input).value();
    return cache.emplace(m.get(), std::make_pair(m, std::move(emb))).first->second.second;
  }

  const heads::OneShotModel* model_;
  std::map<const episodic::Molecule*, std::pair<episodic::MoleculePtr, ad::Tensor>> support_cache_;
  std::map<const episodic::Molecule*, std::pair<episodic::MoleculePtr, ad::Tensor>> query_cache_;
};

inline EvalReport evaluate(const heads::OneShotModel& model, const std::vector<Task>& test_tasks,
                           const episodic::EpisodeSpec& spec, std::size_t n_trials = 20, std::uint64_t seed = 0) {
  ModelPredictor mp(model);
  EvalReport r = evaluate(Predictor(std::ref(mp)), test_tasks, spec, n_trials, seed);
  r.variant = heads::to_string(model.variant());
  return r;
}

/// Trains on every task of `train_collection` (no training when
/// config.episodes is 0) and evaluates on the test split of `test_collection`.
inline EvalReport transfer_eval(const TaskCollection& train_collection, const TaskCollection& test_collection,
                                const SplitSpec& test_split, episodic::TrainConfig config,
                                const episodic::EpisodeSpec& eval_spec, std::size_t n_trials = 20,
                                heads::OneShotModel* trained = nullptr) {
  heads::OneShotModel model = heads::OneShotModel::create(config.model, config.seed);
  if (config.episodes > 0) episodic::train_model(model, train_collection.tasks, config);
  const auto [unused, test_tasks] = split(test_collection, test_split);
  EvalReport r = evaluate(model, test_tasks, eval_spec, n_trials, config.seed);
  r.transfer = true;
  r.train_collection = train_collection.name;
  r.test_collection = test_collection.name;
  if (trained) *trained = std::move(model);
  return r;
}

}  // namespace oneshot::data
