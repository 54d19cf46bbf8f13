#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "oneshot/autodiff/ops.hpp"
#include "oneshot/episodic/task.hpp"
#include "oneshot/heads/model.hpp"

namespace oneshot::episodic {

struct EpisodeSpec {
  std::size_t n_pos = 10;
  std::size_t n_neg = 10;
  std::size_t batch_size = 128;

  std::size_t support_size() const noexcept { return n_pos + n_neg; }

  void validate() const {
    if (n_pos + n_neg == 0) throw ConfigError("episode support must hold at least one molecule");
    if (batch_size == 0) throw ConfigError("episode batch size must be at least 1");
  }

  /// "10 pos, 10 neg"
  std::string label() const { return std::to_string(n_pos) + " pos, " + std::to_string(n_neg) + " neg"; }
};

/// Indices into Task::examples. Support and batch never overlap.
struct Episode {
  std::vector<std::size_t> support;
  std::vector<std::size_t> batch;
};

namespace detail {

// First k entries of `pool` become a uniform draw without replacement.
inline void partial_shuffle(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k && i + 1 < pool.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

}  // namespace detail

/// Whether a task can yield an episode: enough of each class and at least
/// one example left over for the query batch.
inline bool task_usable(const Task& task, const EpisodeSpec& spec) {
  return task.positives() >= spec.n_pos && task.negatives() >= spec.n_neg &&
         task.examples.size() > spec.support_size();
}

/// Support drawn uniformly without replacement within each class (then put
/// in random order), batch drawn uniformly from the remaining examples.
/// Returns nullopt when the task is too small for `spec`.
inline std::optional<Episode> sample_episode(const Task& task, const EpisodeSpec& spec, Rng& rng,
                                             std::size_t max_batch = static_cast<std::size_t>(-1)) {
  if (!task_usable(task, spec)) return std::nullopt;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < task.examples.size(); ++i) (task.examples[i].label == 1 ? pos : neg).push_back(i);
  detail::partial_shuffle(pos, spec.n_pos, rng);
  detail::partial_shuffle(neg, spec.n_neg, rng);

  Episode ep;
  ep.support.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(spec.n_pos));
  ep.support.insert(ep.support.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(spec.n_neg));
  detail::partial_shuffle(ep.support, ep.support.size(), rng);

  std::vector<char> taken(task.examples.size(), 0);
  for (std::size_t i : ep.support) taken[i] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < task.examples.size(); ++i)
    if (!taken[i]) rest.push_back(i);
  const std::size_t k = std::min({spec.batch_size, rest.size(), max_batch});
  detail::partial_shuffle(rest, k, rng);
  ep.batch.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i : ep.batch)
    if (taken[i]) throw std::logic_error("sample_episode: support and batch overlap");
  return ep;
}

inline heads::SupportSet support_set(const Task& task, const std::vector<std::size_t>& indices) {
  heads::SupportSet s;
  for (std::size_t i : indices) {
    s.molecules.push_back(&task.examples[i].molecule->input);
    s.labels.push_back(task.examples[i].label);
  }
  return s;
}

inline std::vector<const gconv::GraphInput*> inputs_of(const Task& task, const std::vector<std::size_t>& indices) {
  std::vector<const gconv::GraphInput*> out;
  for (std::size_t i : indices) out.push_back(&task.examples[i].molecule->input);
  return out;
}

inline constexpr double kLossClamp = 1e-7;

/// Mean negative log-likelihood of the batch labels:
///   -(1/|B|) sum [y log(h + eps) + (1 - y) log(1 - h + eps)]
inline ad::Var episode_loss(ad::Tape& tape, const heads::OneShotModel& model, const Task& task, const Episode& ep) {
  if (ep.batch.empty()) throw UsageError("episode_loss: empty query batch");
  const heads::SupportSet s = support_set(task, ep.support);
  ad::Var g = model.embed_support(tape, s.molecules);
  ad::Var f = model.embed_queries(tape, inputs_of(task, ep.batch));
  ad::Var h = model.predict_embedded(f, g, s.labels);

  ad::Tensor y(ad::Shape{ep.batch.size()}), not_y(ad::Shape{ep.batch.size()});
  for (std::size_t i = 0; i < ep.batch.size(); ++i) {
    y[i] = task.examples[ep.batch[i]].label;
    not_y[i] = 1.0 - y[i];
  }
  ad::Var log_h = ad::log(ad::add_scalar(h, kLossClamp));
  ad::Var log_not_h = ad::log(ad::add_scalar(ad::scale(h, -1.0), 1.0 + kLossClamp));
  ad::Var ll = ad::add(ad::mul(log_h, tape.constant(std::move(y))), ad::mul(log_not_h, tape.constant(std::move(not_y))));
  return ad::scale(ad::sum(ll), -1.0 / static_cast<double>(ep.batch.size()));
}

}  // namespace oneshot::episodic
