#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kvit {

/// P(score+ > score-) + P(tie)/2 over all positive/negative pairs, computed
/// from average ranks in O(n log n). labels are 0/1. Throws DomainError unless
/// both classes are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Average precision: sum over distinct thresholds (descending) of
/// (recall_k - recall_{k-1}) * precision_k. Throws DomainError without positives.
double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ClassMetrics {
  double auroc = 0.0;
  double auprc = 0.0;
  std::vector<double> per_class_auroc;  // one-vs-rest when classes > 2; -1 where undefined
  std::vector<double> per_class_auprc;
};

/// probs is n×C row-major. Two classes: metrics of class 1's probability.
/// More classes: unweighted mean of one-vs-rest metrics over classes that
/// have both positives and negatives.
ClassMetrics classification_metrics(std::span<const double> probs, std::size_t classes,
                                    std::span<const std::size_t> labels);

}  // namespace kvit
