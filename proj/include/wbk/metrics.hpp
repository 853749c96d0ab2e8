#pragma once

#include <cstdint>
#include <vector>

#include "wbk/grid.hpp"

namespace wbk {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion_counts(const Grid& pred, const Grid& gt, float threshold = 0.5f);

struct OverlapScores {
  double dsc = 0.0;
  double iou_fg = 0.0;
  double miou = 0.0;  // mean of foreground and background IoU
};

// Ratios whose denominator is zero (empty versus empty) are defined as 1.
OverlapScores dsc_miou(const ConfusionCounts& c);

struct RateScores {
  double acc = 0.0;
  double sen = 0.0;
  double spe = 0.0;
};

RateScores acc_sen_spe(const ConfusionCounts& c);

// Symmetric 95th-percentile Hausdorff distance in pixels over the thresholded
// foreground point sets. Throws Error(Data, "undefined HD95") if either set
// is empty.
double hd95(const Grid& pred, const Grid& gt, float threshold = 0.5f);

// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile_linear(std::vector<double> values, double q);

// Exact Euclidean distance from every pixel to the nearest set pixel.
std::vector<double> distance_to_set(const Grid& mask, float threshold = 0.5f);

struct MetricsRow {
  int sample_id = 0;
  double dsc = 0.0;
  double iou_fg = 0.0;
  double miou = 0.0;
  double acc = 0.0;
  double sen = 0.0;
  double spe = 0.0;
  double hd95 = 0.0;
};

// All metrics for one prediction. An empty prediction or ground truth gets
// hd95 = image diagonal instead of throwing.
MetricsRow evaluate_pair(int sample_id, const Grid& pred, const Grid& gt, float threshold = 0.5f);

MetricsRow mean_row(const std::vector<MetricsRow>& rows);

}  // namespace wbk
