#include "kvit/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "kvit/error.hpp"

namespace kvit {

namespace {

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

void check_sizes(std::span<const double> scores, std::span<const std::uint8_t> labels, const char* who) {
  if (scores.size() != labels.size()) throw ShapeError(std::string(who) + ": scores and labels differ in length");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_sizes(scores, labels, "auroc");
  const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DomainError("auroc: needs both positive and negative labels");

  const auto idx = order_by_score(scores, false);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]]) rank_sum += avg_rank;
    }
    i = j;
  }
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_sizes(scores, labels, "auprc");
  const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (n_pos == 0) throw DomainError("auprc: needs at least one positive label");

  const auto idx = order_by_score(scores, true);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / n_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ClassMetrics classification_metrics(std::span<const double> probs, std::size_t classes,
                                    std::span<const std::size_t> labels) {
  if (classes < 2) throw DomainError("classification_metrics: need at least two classes");
  if (probs.size() != labels.size() * classes) throw ShapeError("classification_metrics: probs is not n×C");
  const std::size_t n = labels.size();
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  auto one_vs_rest = [&](std::size_t c) {
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = probs[i * classes + c];
      y[i] = labels[i] == c ? 1 : 0;
    }
  };

  ClassMetrics m;
  if (classes == 2) {
    one_vs_rest(1);
    m.auroc = auroc(s, y);
    m.auprc = auprc(s, y);
    return m;
  }
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    one_vs_rest(c);
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(n)) {
      m.per_class_auroc.push_back(-1.0);
      m.per_class_auprc.push_back(-1.0);
      continue;
    }
    m.per_class_auroc.push_back(auroc(s, y));
    m.per_class_auprc.push_back(auprc(s, y));
    m.auroc += m.per_class_auroc.back();
    m.auprc += m.per_class_auprc.back();
    ++used;
  }
  if (used == 0) throw DomainError("classification_metrics: no class has both positives and negatives");
  m.auroc /= static_cast<double>(used);
  m.auprc /= static_cast<double>(used);
  return m;
}

}  // namespace kvit
