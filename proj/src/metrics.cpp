#include "dmt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "dmt/nn.hpp"

namespace dmt {

ConfusionMatrix confusion_matrix(std::span<const int> predictions,
                                 std::span<const int> ground_truth, int class_count) {
  if (predictions.size() != ground_truth.size()) {
    throw ShapeError("confusion_matrix: prediction/truth length mismatch");
  }
  ConfusionMatrix cm;
  cm.counts.setZero(class_count, class_count);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int truth = ground_truth[i];
    const int pred = predictions[i];
    if (truth < 0 || truth >= class_count || pred < 0 || pred >= class_count) {
      throw IndexError("confusion_matrix: class out of range at unit " + std::to_string(i));
    }
    ++cm.counts(truth, pred);
  }
  return cm;
}

double accuracy(std::span<const int> predictions, std::span<const int> ground_truth) {
  if (predictions.empty()) throw EmptyInputError("accuracy: no units");
  if (predictions.size() != ground_truth.size()) {
    throw ShapeError("accuracy: prediction/truth length mismatch");
  }
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == ground_truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double fine_grained_accuracy(const Eigen::Ref<const Matrix>& probabilities,
                             std::span<const int> ground_truth) {
  if (probabilities.rows() == 0) throw EmptyInputError("fine_grained_accuracy: no units");
  if (static_cast<std::size_t>(probabilities.rows()) != ground_truth.size()) {
    throw ShapeError("fine_grained_accuracy: rows/truth length mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const int truth = ground_truth[static_cast<std::size_t>(i)];
    if (truth < 0 || truth >= probabilities.cols()) {
      throw IndexError("fine_grained_accuracy: class out of range");
    }
    if (argmax_class(probabilities.row(i).transpose()) == truth) {
      sum += probabilities(i, truth);
    }
  }
  return sum / static_cast<double>(probabilities.rows());
}

double mean_iou(const ConfusionMatrix& confusion) {
  if (confusion.total() == 0) throw EmptyInputError("mean_iou: empty confusion matrix");
  const auto& counts = confusion.counts;
  double sum = 0.0;
  int present = 0;
  for (Eigen::Index c = 0; c < counts.rows(); ++c) {
    const std::int64_t tp = counts(c, c);
    const std::int64_t fn = counts.row(c).sum() - tp;
    const std::int64_t fp = counts.col(c).sum() - tp;
    if (tp + fn + fp == 0) continue;  // class never appears on either side
    sum += static_cast<double>(tp) / static_cast<double>(tp + fn + fp);
    ++present;
  }
  return sum / static_cast<double>(present);
}

std::string format_fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

std::string encode_metrics(std::span<const MetricRow> rows) {
  std::vector<MetricRow> ordered(rows.begin(), rows.end());
  std::sort(ordered.begin(), ordered.end(), [](const MetricRow& a, const MetricRow& b) {
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    if (a.iteration != b.iteration) return a.iteration < b.iteration;
    return a.metric < b.metric;
  });
  std::string out = "run_id,seed,iteration,metric,value\n";
  for (const MetricRow& row : ordered) {
    out += row.run_id;
    out += ',';
    out += std::to_string(row.seed);
    out += ',';
    out += std::to_string(row.iteration);
    out += ',';
    out += row.metric;
    out += ',';
    out += format_fixed6(row.value);
    out += '\n';
  }
  return out;
}

void write_metrics(std::span<const MetricRow> rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << encode_metrics(rows);
  if (!out) throw IoError("write failed: " + path);
}

std::string encode_noise_report(const NoiseReport& report) {
  std::string out = "fraction,retained,errors,error_rate\n";
  std::int64_t total_retained = 0;
  std::int64_t total_errors = 0;
  for (const NoiseStratum& stratum : report.strata) {
    out += format_fixed6(stratum.fraction);
    out += ',';
    out += std::to_string(stratum.retained);
    out += ',';
    out += std::to_string(stratum.errors);
    out += ',';
    out += format_fixed6(stratum.error_rate);
    out += '\n';
    if (stratum.retained > total_retained) {
      total_retained = stratum.retained;
      total_errors = stratum.errors;
    }
  }
  out += "overall,";
  out += std::to_string(total_retained);
  out += ',';
  out += std::to_string(total_errors);
  out += ',';
  out += format_fixed6(report.overall_error_rate);
  out += '\n';
  return out;
}

void write_noise_report(const NoiseReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << encode_noise_report(report);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace dmt
