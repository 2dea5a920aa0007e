#include "dmt/losses.hpp"

#include <cmath>
#include <string>

#include "dmt/nn.hpp"

namespace dmt {

WeightedTarget dynamic_weight(const DisagreementInputs& d, const DynamicWeightConfig& cfg) {
  if (cfg.variant == WeightVariant::Naive) {
    return {d.pseudo_label, std::pow(d.live_prob_of_pseudo, cfg.gamma1)};
  }
  if (d.pseudo_label == d.live_label) {
    return {d.pseudo_label, std::pow(d.live_prob_of_pseudo, cfg.gamma1)};
  }
  if (d.pseudo_confidence >= d.live_confidence) {
    return {d.pseudo_label, std::pow(d.live_prob_of_pseudo, cfg.gamma2)};
  }
  if (cfg.variant == WeightVariant::Flip) {
    return {d.live_label, std::pow(1.0 - d.pseudo_confidence, cfg.gamma2)};
  }
  return {d.pseudo_label, 0.0};
}

double unlabeled_loss(std::span<const WeightedTarget> targets,
                      const Eigen::Ref<const Matrix>& probabilities,
                      double batch_size) {
  if (static_cast<Eigen::Index>(targets.size()) != probabilities.rows()) {
    throw ShapeError("unlabeled_loss: " + std::to_string(targets.size()) +
                     " targets vs " + std::to_string(probabilities.rows()) + " rows");
  }
  double sum = 0.0;
  for (std::size_t u = 0; u < targets.size(); ++u) {
    if (targets[u].weight == 0.0) continue;
    sum += targets[u].weight *
           cross_entropy(probabilities.row(static_cast<Eigen::Index>(u)).transpose(),
                         targets[u].effective_label);
  }
  return sum / batch_size;
}

double labeled_loss(std::span<const int> ground_truth,
                    const Eigen::Ref<const Matrix>& probabilities,
                    double batch_size) {
  if (static_cast<Eigen::Index>(ground_truth.size()) != probabilities.rows()) {
    throw ShapeError("labeled_loss: " + std::to_string(ground_truth.size()) +
                     " labels vs " + std::to_string(probabilities.rows()) + " rows");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    sum += cross_entropy(probabilities.row(static_cast<Eigen::Index>(i)).transpose(),
                         ground_truth[i]);
  }
  return sum / batch_size;
}

LossBreakdown combined_loss(double labeled, double unlabeled) {
  return {labeled, unlabeled, labeled + unlabeled};
}

MixedSample mixup_pair(const Eigen::Ref<const Vector>& features_a,
                       const Eigen::Ref<const Vector>& features_b,
                       const WeightedTarget& target_a, const WeightedTarget& target_b,
                       double lambda) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw ConfigError("mixup_pair: lambda must lie in [0,1]");
  }
  if (features_a.size() != features_b.size()) {
    throw ShapeError("mixup_pair: feature dims differ");
  }
  MixedSample mixed;
  mixed.features = lambda * features_a + (1.0 - lambda) * features_b;
  mixed.targets[0] = {target_a.effective_label, lambda * target_a.weight};
  mixed.targets[1] = {target_b.effective_label, (1.0 - lambda) * target_b.weight};
  return mixed;
}

}  // namespace dmt
