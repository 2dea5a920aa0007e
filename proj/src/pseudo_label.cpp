#include "dmt/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dmt {

SelectionPolicy SelectionPolicy::fixed_threshold(double t) {
  if (t < 0.0 || t > 1.0) throw ConfigError("selection: threshold must lie in [0,1]");
  return {SelectionKind::FixedThreshold, t, 1.0};
}

SelectionPolicy SelectionPolicy::global_top_fraction(double alpha) {
  if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("selection: fraction must lie in (0,1]");
  return {SelectionKind::GlobalTopFraction, 0.0, alpha};
}

SelectionPolicy SelectionPolicy::class_balanced_top_fraction(double alpha) {
  if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("selection: fraction must lie in (0,1]");
  return {SelectionKind::ClassBalancedTopFraction, 0.0, alpha};
}

SelectionPolicy SelectionPolicy::cbst_renormalized(double alpha) {
  if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("selection: fraction must lie in (0,1]");
  return {SelectionKind::CbstRenormalized, 0.0, alpha};
}

PseudoLabelSet generate_pseudo_labels(const Model& model,
                                      const Eigen::Ref<const Matrix>& inputs,
                                      bool keep_probabilities) {
  const Matrix probs = softmax_rows(forward(model, inputs));
  PseudoLabelSet set;
  set.records.resize(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    PseudoLabelRecord& rec = set.records[static_cast<std::size_t>(i)];
    rec.unit_id = i;
    rec.label = argmax_class(probs.row(i).transpose());
    rec.confidence = probs(i, rec.label);
    rec.selected = false;
    rec.ignored = true;
  }
  if (keep_probabilities) set.probabilities = probs;
  return set;
}

namespace {

// Sort order used everywhere ranking happens: confidence descending, then
// unit_id ascending (the documented tie-break).
std::vector<std::size_t> ranked_indices(std::span<const PseudoLabelRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&records](std::size_t a, std::size_t b) {
    if (records[a].confidence != records[b].confidence) {
      return records[a].confidence > records[b].confidence;
    }
    return records[a].unit_id < records[b].unit_id;
  });
  return order;
}

std::int64_t ceil_count(double fraction, std::size_t n) {
  return static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(n)));
}

void mark(PseudoLabelRecord& rec, bool selected) {
  rec.selected = selected;
  rec.ignored = !selected;
}

}  // namespace

std::vector<double> class_thresholds(std::span<const PseudoLabelRecord> records,
                                     double alpha, int class_count) {
  if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("class_thresholds: alpha in (0,1]");
  std::vector<std::vector<double>> by_class(static_cast<std::size_t>(class_count));
  for (const PseudoLabelRecord& rec : records) {
    by_class[static_cast<std::size_t>(rec.label)].push_back(rec.confidence);
  }
  std::vector<double> thresholds(static_cast<std::size_t>(class_count),
                                 std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& confs = by_class[c];
    if (confs.empty()) continue;  // empty class keeps the +inf sentinel
    std::sort(confs.begin(), confs.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(ceil_count(alpha, confs.size()));
    thresholds[c] = confs[k - 1];
  }
  return thresholds;
}

void select(PseudoLabelSet& set, const SelectionPolicy& policy, int class_count) {
  if (set.records.empty()) throw EmptyInputError("select: no records");
  auto& records = set.records;

  switch (policy.kind) {
    case SelectionKind::FixedThreshold: {
      for (auto& rec : records) mark(rec, rec.confidence > policy.threshold);
      return;
    }
    case SelectionKind::GlobalTopFraction: {
      const auto order = ranked_indices(records);
      const auto keep = static_cast<std::size_t>(ceil_count(policy.fraction, records.size()));
      for (std::size_t r = 0; r < order.size(); ++r) mark(records[order[r]], r < keep);
      return;
    }
    case SelectionKind::ClassBalancedTopFraction: {
      const auto order = ranked_indices(records);
      std::vector<std::int64_t> class_sizes(static_cast<std::size_t>(class_count), 0);
      for (const auto& rec : records) ++class_sizes[static_cast<std::size_t>(rec.label)];
      std::vector<std::int64_t> budget(static_cast<std::size_t>(class_count), 0);
      for (std::size_t c = 0; c < budget.size(); ++c) {
        if (class_sizes[c] > 0) {
          budget[c] = ceil_count(policy.fraction, static_cast<std::size_t>(class_sizes[c]));
        }
      }
      for (std::size_t idx : order) {
        auto& rec = records[idx];
        auto& left = budget[static_cast<std::size_t>(rec.label)];
        mark(rec, left > 0);
        if (left > 0) --left;
      }
      return;
    }
    case SelectionKind::CbstRenormalized: {
      if (!set.has_probabilities()) {
        throw ConfigError("select: CBST re-normalization needs stored probability vectors");
      }
      if (set.probabilities.rows() != static_cast<Eigen::Index>(records.size()) ||
          set.probabilities.cols() != class_count) {
        throw ShapeError("select: probability matrix shape mismatch");
      }
      const auto thresholds = class_thresholds(records, policy.fraction, class_count);
      for (std::size_t i = 0; i < records.size(); ++i) {
        Vector renorm(class_count);
        for (int c = 0; c < class_count; ++c) {
          const double theta = thresholds[static_cast<std::size_t>(c)];
          renorm[c] = std::isinf(theta)
                          ? 0.0
                          : set.probabilities(static_cast<Eigen::Index>(i), c) / theta;
        }
        const int relabeled = argmax_class(renorm);
        auto& rec = records[i];
        rec.label = relabeled;
        rec.confidence = set.probabilities(static_cast<Eigen::Index>(i), relabeled);
        mark(rec, renorm[relabeled] > 1.0);
      }
      return;
    }
  }
  throw ConfigError("select: unknown policy");
}

NoiseReport noise_report(std::span<const PseudoLabelRecord> records,
                         std::span<const int> ground_truth,
                         std::span<const double> fractions) {
  if (records.empty()) throw EmptyInputError("noise_report: no records");
  for (const auto& rec : records) {
    if (rec.unit_id < 0 || static_cast<std::size_t>(rec.unit_id) >= ground_truth.size()) {
      throw IndexError("noise_report: unit " + std::to_string(rec.unit_id) +
                       " has no ground truth");
    }
  }
  const auto order = ranked_indices(records);
  // errors_upto[k] = wrong labels among the k most confident records
  std::vector<std::int64_t> errors_upto(order.size() + 1, 0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& rec = records[order[r]];
    const bool wrong = rec.label != ground_truth[static_cast<std::size_t>(rec.unit_id)];
    errors_upto[r + 1] = errors_upto[r] + (wrong ? 1 : 0);
  }

  NoiseReport report;
  for (double f : fractions) {
    if (f <= 0.0 || f > 1.0) throw ConfigError("noise_report: fractions must lie in (0,1]");
    NoiseStratum stratum;
    stratum.fraction = f;
    stratum.retained = ceil_count(f, records.size());
    stratum.errors = errors_upto[static_cast<std::size_t>(stratum.retained)];
    stratum.error_rate =
        static_cast<double>(stratum.errors) / static_cast<double>(stratum.retained);
    report.strata.push_back(stratum);
  }
  std::sort(report.strata.begin(), report.strata.end(),
            [](const NoiseStratum& a, const NoiseStratum& b) { return a.fraction < b.fraction; });
  report.overall_error_rate = static_cast<double>(errors_upto[order.size()]) /
                              static_cast<double>(order.size());
  return report;
}

NoiseReport noise_report(std::span<const PseudoLabelRecord> records,
                         std::span<const int> ground_truth) {
  return noise_report(records, ground_truth, kDefaultNoiseFractions);
}

}  // namespace dmt
