#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oneshot/autodiff/adam.hpp"
#include "oneshot/episodic/episode.hpp"
#include "oneshot/heads/model.hpp"

namespace oneshot::episodic {

struct TrainConfig {
  std::size_t episodes = 2000;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  heads::ModelConfig model;
  EpisodeSpec spec;
  /// Optimizer steps taken on each sampled episode.
  std::size_t steps_per_episode = 1;

  void validate() const {
    if (episodes == 0) throw ConfigError("episodes must be at least 1");
    if (steps_per_episode == 0) throw ConfigError("steps_per_episode must be at least 1");
    spec.validate();
  }
};

struct LossRecord {
  std::size_t episode = 0;
  std::string task;
  double loss = 0.0;
};

struct TrainResult {
  heads::OneShotModel model;
  std::vector<LossRecord> trace;
};

using EpisodeCallback = std::function<void(const LossRecord&)>;

/// One optimizer step on `loss_of(tape)`; returns the loss before the step.
template <typename LossFn>
double optimizer_step(heads::OneShotModel& model, ad::AdamState& adam, LossFn&& loss_of) {
  ad::Tape tape;
  ad::Var loss = loss_of(tape);
  ad::Gradients grads;
  tape.backward(loss, grads);
  std::vector<ad::Tensor*> params;
  std::vector<ad::Tensor> g;
  for (auto& [name, p] : model.parameters()) {
    params.push_back(p);
    g.push_back(grads.of(*p));
  }
  ad::adam_step(params, g, adam);
  return loss.value().item();
}

/// Continues training `model` in place for config.episodes episodes.
inline std::vector<LossRecord> train_model(heads::OneShotModel& model, const std::vector<Task>& tasks,
                                           const TrainConfig& config, const EpisodeCallback& on_episode = {}) {
  config.validate();
  std::vector<const Task*> usable;
  for (const Task& t : tasks)
    if (task_usable(t, config.spec)) usable.push_back(&t);
  if (usable.empty())
    throw ConfigError("no task has " + std::to_string(config.spec.n_pos) + " positives, " +
                      std::to_string(config.spec.n_neg) + " negatives and a spare query example");

  Rng rng = named_stream(config.seed, "episodes");
  ad::AdamState adam(config.adam);
  std::vector<LossRecord> trace;
  trace.reserve(config.episodes);
  std::uniform_int_distribution<std::size_t> pick_task(0, usable.size() - 1);
  for (std::size_t e = 0; e < config.episodes; ++e) {
    const Task& task = *usable[pick_task(rng)];
    const Episode ep = *sample_episode(task, config.spec, rng);
    double loss = 0.0;
    for (std::size_t s = 0; s < config.steps_per_episode; ++s) {
      const double l = optimizer_step(model, adam, [&](ad::Tape& t) { return episode_loss(t, model, task, ep); });
      if (s == 0) loss = l;
    }
    trace.push_back(LossRecord{e, task.name, loss});
    if (on_episode) on_episode(trace.back());
  }
  return trace;
}

/// Fresh model from config.seed, trained episodically: each episode draws a
/// task uniformly, samples a support and a disjoint query batch, and takes
/// one ADAM step on the mean log-likelihood loss.
inline TrainResult train(const std::vector<Task>& tasks, const TrainConfig& config,
                         const EpisodeCallback& on_episode = {}) {
  config.validate();
  if (tasks.empty()) throw ConfigError("train: no tasks given");
  TrainResult r{heads::OneShotModel::create(config.model, config.seed), {}};
  r.trace = train_model(r.model, tasks, config, on_episode);
  return r;
}

}  // namespace oneshot::episodic
