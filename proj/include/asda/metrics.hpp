#pragma once

// Downstream evaluation metrics: exact-match accuracy and mean Average
// Precision. AP averages precision at each positive's rank; ties are broken
// by ascending example index (stable), and precision terms accumulate in
// ascending rank order so results are reproducible bit for bit. Classes
// without a single positive are skipped and reported.

#include <algorithm>
#include <numeric>

#include "asda/ops.hpp"

namespace asda {

inline double accuracy(const std::vector<std::size_t>& predicted,
                       const std::vector<std::size_t>& truth) {
  detail::require(!predicted.empty(), "accuracy: empty input");
  detail::require(predicted.size() == truth.size(),
                  "accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                      std::to_string(truth.size()) + " labels");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

// AP for one class: scores and binary labels over N examples.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& labels) {
  detail::require(scores.size() == labels.size(), "average_precision: size mismatch");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  detail::require(n_pos > 0, "average_precision: class has no positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t seen_pos = 0;
  for (std::size_t rank = 1; rank <= order.size(); ++rank) {
    if (labels[order[rank - 1]]) {
      ++seen_pos;
      ap += static_cast<double>(seen_pos) / static_cast<double>(rank);
    }
  }
  return ap / static_cast<double>(n_pos);
}

struct MapResult {
  double map = 0.0;
  std::vector<double> per_class;       // AP for evaluated classes, NaN for skipped
  std::size_t evaluated_classes = 0;
  std::size_t skipped_classes = 0;
};

// scores (N, C), labels binary (N, C) as flat row-major vectors.
inline MapResult mean_average_precision(const std::vector<double>& scores,
                                        const std::vector<std::uint8_t>& labels, std::size_t n,
                                        std::size_t c) {
  detail::require(n > 0 && c > 0, "mean_average_precision: empty input");
  detail::require(scores.size() == n * c && labels.size() == n * c,
                  "mean_average_precision: buffers do not match " + std::to_string(n) + "x" +
                      std::to_string(c));
  MapResult out;
  out.per_class.assign(c, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    std::vector<double> col_scores(n);
    std::vector<std::uint8_t> col_labels(n);
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col_scores[i] = scores[i * c + j];
      col_labels[i] = labels[i * c + j];
      n_pos += col_labels[i] ? 1 : 0;
    }
    if (n_pos == 0) {
      ++out.skipped_classes;
      continue;
    }
    out.per_class[j] = average_precision(col_scores, col_labels);
    sum += out.per_class[j];
    ++out.evaluated_classes;
  }
  detail::require(out.evaluated_classes > 0, "mean_average_precision: every class is empty");
  out.map = sum / static_cast<double>(out.evaluated_classes);
  return out;
}

}  // namespace asda
