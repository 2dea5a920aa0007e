#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmt/core.hpp"
#include "dmt/pseudo_label.hpp"

namespace dmt {

// Entry (i, j) counts units with ground truth i predicted as j.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  std::int64_t total() const { return counts.sum(); }
};

ConfusionMatrix confusion_matrix(std::span<const int> predictions,
                                 std::span<const int> ground_truth, int class_count);

/// Fraction of units predicted correctly.
double accuracy(std::span<const int> predictions, std::span<const int> ground_truth);

// Correct predictions count as the probability assigned to the true class,
// incorrect ones as 0; a stricter metric for tiny validation sets.
double fine_grained_accuracy(const Eigen::Ref<const Matrix>& probabilities,
                             std::span<const int> ground_truth);

// Mean over classes of TP / (TP + FP + FN); classes absent from both ground
// truth and prediction are excluded from the mean.
double mean_iou(const ConfusionMatrix& confusion);

struct MetricRow {
  std::string run_id;
  std::uint64_t seed = 0;
  int iteration = 0;
  std::string metric;
  double value = 0.0;
};

/// Fixed 6 fractional digits; byte-stable across identical runs.
std::string format_fixed6(double value);

// Schema: run_id,seed,iteration,metric,value with rows ordered by
// (run_id, iteration, metric).
void write_metrics(std::span<const MetricRow> rows, const std::string& path);
std::string encode_metrics(std::span<const MetricRow> rows);

// Schema: fraction,retained,errors,error_rate — one row per stratum plus a
// trailing `overall` row.
void write_noise_report(const NoiseReport& report, const std::string& path);
std::string encode_noise_report(const NoiseReport& report);

}  // namespace dmt
