#include "covband/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace covband {

double coverage(const std::vector<bool>& covered) {
  if (covered.empty()) {
    throw std::invalid_argument("coverage: empty test set");
  }
  double count = 0.0;
  for (bool c : covered) count += c ? 1.0 : 0.0;
  return count / static_cast<double>(covered.size());
}

double median_width(const std::vector<double>& widths) {
  if (widths.empty()) {
    throw std::invalid_argument("median_width: empty test set");
  }
  std::vector<double> sorted = widths;
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}

double fraction_infinite(const std::vector<double>& widths) {
  if (widths.empty()) {
    throw std::invalid_argument("fraction_infinite: empty test set");
  }
  double count = 0.0;
  for (double w : widths) count += std::isinf(w) ? 1.0 : 0.0;
  return count / static_cast<double>(widths.size());
}

double coverage_variance(const std::vector<double>& coverages) {
  if (coverages.empty()) {
    throw std::invalid_argument("coverage_variance: no replicates");
  }
  double mean =
      std::accumulate(coverages.begin(), coverages.end(), 0.0) /
      static_cast<double>(coverages.size());
  double acc = 0.0;
  for (double c : coverages) acc += (c - mean) * (c - mean);
  return acc / static_cast<double>(coverages.size());
}

std::optional<double> auroc(const std::vector<double>& scores,
                            const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auroc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (bool l : labels) positives += l ? 1 : 0;
  if (positives == 0 || positives == n) return std::nullopt;

  // Midrank form: sort by score, give tied scores their average rank, then
  // AUROC = (sum of positive ranks - P(P+1)/2) / (P*N).
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) positive_rank_sum += midrank;
    }
    i = j + 1;
  }
  double p = static_cast<double>(positives);
  double neg = static_cast<double>(n - positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * neg);
}

}  // namespace covband
