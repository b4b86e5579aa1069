#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kausal {

enum class LabelMethod { gamma_sigma, oni };

struct EventLabels {
  std::vector<int> labels;  // 0/1 per sample
  std::size_t positive_count = 0;
  LabelMethod method = LabelMethod::gamma_sigma;
};

// Label 1 where |x - mean| >= gamma * stddev (population moments over the
// whole series). Zero spread labels nothing.
EventLabels extreme_labels(std::span<const double> series, double gamma);

// NOAA-style ONI events on a monthly anomaly series: centered 3-month
// running means (endpoints average the two available months); a span of at
// least five consecutive running means >= +threshold marks a warm event,
// <= -threshold a cold event. Labels are 1 inside any qualifying span.
EventLabels oni_labels(std::span<const double> sst_anomaly, double threshold = 0.5);

struct RocCurve {
  std::vector<double> thresholds;  // descending
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auroc = 0.5;
};

// Rank-based AUROC (Mann-Whitney with half-weight ties) plus the full
// curve from (0,0) to (1,1). Throws unless both classes are present.
RocCurve auroc(std::span<const double> scores, const EventLabels& labels);

}  // namespace kausal
