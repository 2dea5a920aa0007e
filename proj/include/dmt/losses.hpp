#pragma once

#include <array>
#include <span>

#include "dmt/core.hpp"

namespace dmt {

enum class WeightVariant {
  Standard,  // three-case disagreement weighting
  Naive,     // p_B^gamma1 regardless of case
  Flip,      // positive disagreement flips the label instead of zeroing
};

struct DynamicWeightConfig {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  WeightVariant variant = WeightVariant::Standard;
};

// Per-unit statistics feeding the dynamic weight. The pseudo label and its
// confidence are frozen at labeling time; the live values are recomputed from
// the model in training on every forward pass.
struct DisagreementInputs {
  int pseudo_label = 0;              // argmax of the labeling model
  int live_label = 0;                // argmax of the model in training
  double pseudo_confidence = 0.0;    // labeler's probability of pseudo_label
  double live_confidence = 0.0;      // trainee's probability of live_label
  double live_prob_of_pseudo = 0.0;  // trainee's probability of pseudo_label
};

struct WeightedTarget {
  int effective_label = 0;
  double weight = 0.0;
};

struct LossBreakdown {
  double labeled = 0.0;
  double unlabeled = 0.0;
  double total = 0.0;
};

// The disagreement-weighted target:
//   agreement             -> weight p_B^gamma1
//   negative disagreement -> weight p_B^gamma2   (labeler more confident)
//   positive disagreement -> weight 0            (trainee more confident)
// Naive skips the case split; Flip replaces the third case with the trainee's
// own label weighted (1 - c_A)^gamma2.
WeightedTarget dynamic_weight(const DisagreementInputs& d, const DynamicWeightConfig& cfg);

/// (1/batch_size) * sum_u weight_u * CE(effective_label_u, probs_u).
double unlabeled_loss(std::span<const WeightedTarget> targets,
                      const Eigen::Ref<const Matrix>& probabilities,
                      double batch_size);

/// (1/batch_size) * sum_x CE(ground_truth_x, probs_x).
double labeled_loss(std::span<const int> ground_truth,
                    const Eigen::Ref<const Matrix>& probabilities,
                    double batch_size);

LossBreakdown combined_loss(double labeled, double unlabeled);

// Convex blend of two samples; the target splits into both labels with
// interpolated weights so the CE contributions add.
struct MixedSample {
  Vector features;
  std::array<WeightedTarget, 2> targets;
};

MixedSample mixup_pair(const Eigen::Ref<const Vector>& features_a,
                       const Eigen::Ref<const Vector>& features_b,
                       const WeightedTarget& target_a, const WeightedTarget& target_b,
                       double lambda);

}  // namespace dmt
