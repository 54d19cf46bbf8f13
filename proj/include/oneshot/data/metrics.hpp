#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "oneshot/error.hpp"

namespace oneshot::data {

/// ROC-AUC as the Mann-Whitney statistic with midranks, so tied scores
/// contribute 1/2 per positive-negative pair. nullopt when only one class
/// is present.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// Fraction of predictions on the right side of 0.5 (>= 0.5 means active).
inline double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  if (scores.size() != labels.size()) throw DimensionError("accuracy: scores and labels differ in length");
  if (scores.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] >= threshold ? 1 : 0) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

/// Median with the lower-middle element for even counts.
inline double lower_median(std::vector<double> v) {
  if (v.empty()) throw DimensionError("median of an empty list");
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace oneshot::data
