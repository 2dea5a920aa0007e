#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmt/core.hpp"
#include "dmt/nn.hpp"

namespace dmt {

struct PseudoLabelRecord {
  std::int64_t unit_id = 0;
  int label = 0;            // frozen argmax of the labeling model (y_A)
  double confidence = 0.0;  // labeler's probability of that class (c_A)
  bool selected = false;
  bool ignored = true;      // selected XOR ignored at all times
};

// Full probability rows are kept only when a policy needs them (the CBST
// re-normalization has to re-argmax); everything else stores (label,
// confidence) to stay linear in units.
struct PseudoLabelSet {
  std::vector<PseudoLabelRecord> records;
  Matrix probabilities;  // records.size() x C when kept, else 0 x 0

  bool has_probabilities() const { return probabilities.size() > 0; }
};

enum class SelectionKind {
  FixedThreshold,
  GlobalTopFraction,
  ClassBalancedTopFraction,
  CbstRenormalized,
};

struct SelectionPolicy {
  SelectionKind kind = SelectionKind::GlobalTopFraction;
  double threshold = 0.5;  // FixedThreshold only
  double fraction = 1.0;   // the alpha of the ranked policies, in (0,1]

  static SelectionPolicy fixed_threshold(double t);
  static SelectionPolicy global_top_fraction(double alpha);
  static SelectionPolicy class_balanced_top_fraction(double alpha);
  static SelectionPolicy cbst_renormalized(double alpha);
};

/// Argmax labels plus confidences for every input row; rows become unit ids.
PseudoLabelSet generate_pseudo_labels(const Model& model,
                                      const Eigen::Ref<const Matrix>& inputs,
                                      bool keep_probabilities = false);

// Per-class ranked thresholds: confidence of the ceil(alpha*n_c)-th highest
// record of class c; +inf for classes with no records.
std::vector<double> class_thresholds(std::span<const PseudoLabelRecord> records,
                                     double alpha, int class_count);

// Sets selected/ignored flags. Confidence ties break toward the lower
// unit_id. CbstRenormalized may relabel records (that is its point).
void select(PseudoLabelSet& set, const SelectionPolicy& policy, int class_count);

struct NoiseStratum {
  double fraction = 0.0;
  std::int64_t retained = 0;
  std::int64_t errors = 0;
  double error_rate = 0.0;
};

struct NoiseReport {
  std::vector<NoiseStratum> strata;  // ordered by fraction
  double overall_error_rate = 0.0;
};

inline const std::vector<double> kDefaultNoiseFractions = {0.2, 0.4, 0.6, 0.8, 1.0};

// Error rate among the ceil(f*n) most confident records, per fraction.
// ground_truth is indexed by unit_id; analyzer-only path.
NoiseReport noise_report(std::span<const PseudoLabelRecord> records,
                         std::span<const int> ground_truth,
                         std::span<const double> fractions);

NoiseReport noise_report(std::span<const PseudoLabelRecord> records,
                         std::span<const int> ground_truth);

}  // namespace dmt
