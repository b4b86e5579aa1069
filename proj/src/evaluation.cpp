#include "kausal/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace kausal {

EventLabels extreme_labels(std::span<const double> series, double gamma) {
  if (series.size() < 2) throw std::invalid_argument("extreme_labels: series too short");
  if (!(gamma >= 0.0)) throw std::invalid_argument("extreme_labels: gamma must be >= 0");

  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(series.size());
  double var = 0.0;
  for (double x : series) var += (x - mean) * (x - mean);
  var /= static_cast<double>(series.size());
  const double sigma = std::sqrt(var);

  EventLabels out;
  out.method = LabelMethod::gamma_sigma;
  out.labels.assign(series.size(), 0);
  if (sigma == 0.0) return out;  // constant series labels nothing
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (std::abs(series[i] - mean) >= gamma * sigma) {
      out.labels[i] = 1;
      ++out.positive_count;
    }
  }
  return out;
}

EventLabels oni_labels(std::span<const double> sst_anomaly, double threshold) {
  if (sst_anomaly.size() < 7) throw std::invalid_argument("oni_labels: needs at least 7 months");
  const std::size_t n = sst_anomaly.size();

  // Centered 3-month running mean; endpoints use the two available months.
  std::vector<double> running(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0)
      running[i] = (sst_anomaly[0] + sst_anomaly[1]) / 2.0;
    else if (i == n - 1)
      running[i] = (sst_anomaly[n - 2] + sst_anomaly[n - 1]) / 2.0;
    else
      running[i] = (sst_anomaly[i - 1] + sst_anomaly[i] + sst_anomaly[i + 1]) / 3.0;
  }

  EventLabels out;
  out.method = LabelMethod::oni;
  out.labels.assign(n, 0);
  auto mark_runs = [&](auto qualifies) {
    std::size_t run_start = 0;
    std::size_t run_len = 0;
    for (std::size_t i = 0; i <= n; ++i) {
      if (i < n && qualifies(running[i])) {
        if (run_len == 0) run_start = i;
        ++run_len;
      } else {
        if (run_len >= 5)
          for (std::size_t k = run_start; k < run_start + run_len; ++k) out.labels[k] = 1;
        run_len = 0;
      }
    }
  };
  mark_runs([&](double v) { return v >= threshold; });
  mark_runs([&](double v) { return v <= -threshold; });
  out.positive_count = static_cast<std::size_t>(
      std::count(out.labels.begin(), out.labels.end(), 1));
  return out;
}

RocCurve auroc(std::span<const double> scores, const EventLabels& labels) {
  if (scores.size() != labels.labels.size())
    throw std::invalid_argument("auroc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int l : labels.labels) positives += static_cast<std::size_t>(l);
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw std::invalid_argument("auroc: need both classes, got " + std::to_string(positives) +
                                " positive / " + std::to_string(negatives) + " negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney with midranks: AUC = (R+ - n+(n+ + 1)/2) / (n+ n-).
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels.labels[order[k]]) positive_rank_sum += midrank;
    i = j;
  }

  RocCurve out;
  out.auroc = (positive_rank_sum -
               static_cast<double>(positives) * (static_cast<double>(positives) + 1.0) / 2.0) /
              (static_cast<double>(positives) * static_cast<double>(negatives));

  // Curve points: sweep unique thresholds from high to low.
  out.thresholds.push_back(std::numeric_limits<double>::infinity());
  out.fpr.push_back(0.0);
  out.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  std::size_t k = n;
  while (k > 0) {
    const double threshold = scores[order[k - 1]];
    while (k > 0 && scores[order[k - 1]] == threshold) {
      if (labels.labels[order[k - 1]])
        ++tp;
      else
        ++fp;
      --k;
    }
    out.thresholds.push_back(threshold);
    out.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    out.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
  }
  return out;
}

}  // namespace kausal
