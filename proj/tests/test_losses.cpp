#include <doctest.h>

#include <cmath>
#include <vector>

#include "dmt/losses.hpp"
#include "dmt/nn.hpp"
#include "dmt/rng.hpp"

using namespace dmt;

namespace {

// Literal transcription of the three-case weight definition, kept independent
// of the implementation on purpose.
WeightedTarget oracle_weight(const DisagreementInputs& d, const DynamicWeightConfig& cfg) {
  if (cfg.variant == WeightVariant::Naive) {
    return {d.pseudo_label, std::pow(d.live_prob_of_pseudo, cfg.gamma1)};
  }
  double weight;
  int label = d.pseudo_label;
  if (d.pseudo_label == d.live_label) {
    weight = std::pow(d.live_prob_of_pseudo, cfg.gamma1);
  } else if (d.pseudo_confidence >= d.live_confidence) {
    weight = std::pow(d.live_prob_of_pseudo, cfg.gamma2);
  } else if (cfg.variant == WeightVariant::Flip) {
    label = d.live_label;
    weight = std::pow(1.0 - d.pseudo_confidence, cfg.gamma2);
  } else {
    weight = 0.0;
  }
  return {label, weight};
}

}  // namespace

TEST_CASE("dynamic_weight: worked cases from the three-case definition") {
  DynamicWeightConfig cfg{5.0, 5.0, WeightVariant::Standard};

  DisagreementInputs agree{2, 2, 0.95, 0.9, 0.9};
  const WeightedTarget wa = dynamic_weight(agree, cfg);
  CHECK(wa.effective_label == 2);
  CHECK(wa.weight == doctest::Approx(0.59049).epsilon(1e-12));

  DisagreementInputs negative{0, 1, 0.8, 0.6, 0.3};
  const WeightedTarget wn = dynamic_weight(negative, cfg);
  CHECK(wn.effective_label == 0);
  CHECK(wn.weight == doctest::Approx(0.00243).epsilon(1e-12));

  DisagreementInputs positive{0, 1, 0.5, 0.7, 0.2};
  const WeightedTarget wp = dynamic_weight(positive, cfg);
  CHECK(wp.effective_label == 0);
  CHECK(wp.weight == 0.0);

  DisagreementInputs flip_case{0, 1, 0.8, 0.9, 0.05};
  const WeightedTarget wf = dynamic_weight(flip_case, DynamicWeightConfig{5.0, 5.0, WeightVariant::Flip});
  CHECK(wf.effective_label == 1);
  CHECK(wf.weight == doctest::Approx(0.00032).epsilon(1e-12));

  // naive ignores the case split entirely
  const WeightedTarget nv = dynamic_weight(positive, DynamicWeightConfig{5.0, 5.0, WeightVariant::Naive});
  CHECK(nv.effective_label == 0);
  CHECK(nv.weight == doctest::Approx(std::pow(0.2, 5.0)).epsilon(1e-12));
}

TEST_CASE("dynamic_weight: exhaustive grid matches the literal transcription bit-exactly") {
  const std::vector<double> gammas = {0.0, 1.0, 2.0, 5.0};
  const std::vector<WeightVariant> variants = {WeightVariant::Standard, WeightVariant::Naive,
                                               WeightVariant::Flip};
  std::int64_t tuples = 0;
  for (WeightVariant variant : variants) {
    for (double g1 : gammas) {
      for (double g2 : gammas) {
        const DynamicWeightConfig cfg{g1, g2, variant};
        for (int agree = 0; agree < 2; ++agree) {
          for (int ca = 0; ca <= 10; ++ca) {
            for (int cb = 0; cb <= 10; ++cb) {
              for (int pb = 0; pb <= cb; ++pb) {
                if (agree && pb != cb) continue;  // agreement implies p_B = c_B
                DisagreementInputs d;
                d.pseudo_label = 0;
                d.live_label = agree ? 0 : 1;
                d.pseudo_confidence = ca / 10.0;
                d.live_confidence = cb / 10.0;
                d.live_prob_of_pseudo = pb / 10.0;
                const WeightedTarget got = dynamic_weight(d, cfg);
                const WeightedTarget want = oracle_weight(d, cfg);
                REQUIRE(got.effective_label == want.effective_label);
                REQUIRE(got.weight == want.weight);  // bit-exact
                REQUIRE(got.weight >= 0.0);
                REQUIRE(got.weight <= 1.0);
                ++tuples;
              }
            }
          }
        }
      }
    }
  }
  CHECK(tuples >= 40000);
}

TEST_CASE("dynamic_weight is nondecreasing in the trainee's pseudo-class probability") {
  for (double gamma : {0.5, 1.0, 2.0, 5.0}) {
    const DynamicWeightConfig cfg{gamma, gamma, WeightVariant::Standard};
    double previous = -1.0;
    for (int pb = 0; pb <= 20; ++pb) {
      DisagreementInputs d{0, 1, 0.9, 0.4, pb / 20.0 * 0.4};
      const double w = dynamic_weight(d, cfg).weight;
      CHECK(w >= previous);
      previous = w;
    }
  }
}

TEST_CASE("unlabeled_loss: zero weights, certain-correct and the hand-computed case") {
  Matrix probs(2, 2);
  probs << 1.0, 0.0, 0.5, 0.5;
  std::vector<WeightedTarget> zeroed = {{0, 0.0}, {1, 0.0}};
  CHECK(unlabeled_loss(zeroed, probs, 2.0) == 0.0);

  Matrix certain(1, 2);
  certain << 1.0, 0.0;
  std::vector<WeightedTarget> one = {{0, 1.0}};
  CHECK(unlabeled_loss(one, certain, 1.0) == 0.0);

  // weights {0.5, 0.25}, CE values {ln4, ln2}, N = 8
  Matrix mixed(2, 4);
  mixed << 0.25, 0.25, 0.25, 0.25, 0.5, 0.5 / 3.0, 0.5 / 3.0, 0.5 / 3.0;
  std::vector<WeightedTarget> weights = {{1, 0.5}, {0, 0.25}};
  const double expected = (0.5 * std::log(4.0) + 0.25 * std::log(2.0)) / 8.0;
  CHECK(unlabeled_loss(weights, mixed, 8.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(unlabeled_loss(weights, mixed, 8.0) == doctest::Approx(0.108304).epsilon(1e-5));

  CHECK_THROWS_AS(unlabeled_loss(weights, certain, 1.0), ShapeError);
}

TEST_CASE("labeled_loss: perfect, uniform and the hand-computed case") {
  Matrix perfect(2, 3);
  perfect << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  const std::vector<int> truth = {0, 1};
  CHECK(labeled_loss(truth, perfect, 2.0) == 0.0);

  CHECK(labeled_loss(std::vector<int>{2}, Matrix::Constant(1, 4, 0.25), 1.0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Matrix halves = Matrix::Constant(2, 2, 0.5);
  CHECK(labeled_loss(truth, halves, 4.0) == doctest::Approx(0.346574).epsilon(1e-5));

  CHECK_THROWS_AS(labeled_loss(std::vector<int>{0}, perfect, 2.0), ShapeError);
}

TEST_CASE("combined_loss adds the two parts") {
  CHECK(combined_loss(0.5, 0.0).total == 0.5);
  CHECK(combined_loss(0.0, 0.3).total == 0.3);
  const LossBreakdown both = combined_loss(0.5, 0.3);
  CHECK(both.labeled == 0.5);
  CHECK(both.unlabeled == 0.3);
  CHECK(both.total == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("gamma = 0 with agreement reduces the dynamic loss to plain CE") {
  // selected pseudo units with y_A = y_B get weight p_B^0 = 1
  const DynamicWeightConfig cfg{0.0, 0.0, WeightVariant::Standard};
  Rng rng(12);
  Matrix probs(5, 3);
  std::vector<WeightedTarget> targets;
  std::vector<int> labels;
  for (int i = 0; i < 5; ++i) {
    Vector logits(3);
    for (int c = 0; c < 3; ++c) logits[c] = rng.normal();
    probs.row(i) = softmax(logits).transpose();
    const int top = argmax_class(probs.row(i).transpose());
    DisagreementInputs d{top, top, 0.7, probs(i, top), probs(i, top)};
    targets.push_back(dynamic_weight(d, cfg));
    labels.push_back(top);
  }
  for (const WeightedTarget& t : targets) CHECK(t.weight == 1.0);
  CHECK(unlabeled_loss(targets, probs, 5.0) ==
        doctest::Approx(labeled_loss(labels, probs, 5.0)).epsilon(1e-15));
}

TEST_CASE("case-3 batches produce exactly zero gradients") {
  const Model model = init_model(21, {3, 6, 3});
  Rng rng(3);
  Matrix inputs(4, 3);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.normal();
  const Matrix probs = softmax_rows(forward(model, inputs));
  const DynamicWeightConfig cfg{2.0, 2.0, WeightVariant::Standard};

  std::vector<double> weights;
  std::vector<int> targets;
  for (Eigen::Index i = 0; i < 4; ++i) {
    const int live = argmax_class(probs.row(i).transpose());
    const int pseudo = (live + 1) % 3;  // disagree on purpose
    DisagreementInputs d;
    d.pseudo_label = pseudo;
    d.live_label = live;
    d.live_confidence = probs(i, live);
    d.pseudo_confidence = probs(i, live) / 2.0;  // trainee more confident: case 3
    d.live_prob_of_pseudo = probs(i, pseudo);
    const WeightedTarget wt = dynamic_weight(d, cfg);
    CHECK(wt.weight == 0.0);
    weights.push_back(wt.weight);
    targets.push_back(wt.effective_label);
  }
  const GradientSet grads = backward(model, inputs, weights, targets);
  for (const Matrix& g : grads.weights) CHECK(g.isZero(0.0));
  for (const Vector& g : grads.biases) CHECK(g.isZero(0.0));
}

TEST_CASE("combined-loss gradient equals the sum of the part gradients") {
  const Model model = init_model(77, {3, 8, 3});
  Rng rng(8);
  const int n_labeled = 3;
  const int n_pseudo = 5;
  const int rows = n_labeled + n_pseudo;
  Matrix inputs(rows, 3);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.normal();

  std::vector<double> weights(rows);
  std::vector<int> targets(rows);
  for (int i = 0; i < n_labeled; ++i) {
    weights[static_cast<std::size_t>(i)] = 1.0;
    targets[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(3));
  }
  for (int i = n_labeled; i < rows; ++i) {
    weights[static_cast<std::size_t>(i)] = rng.uniform();
    targets[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(3));
  }

  const double n = static_cast<double>(rows);
  const GradientSet total = backward(model, inputs, weights, targets, n);

  const std::vector<double> wx(weights.begin(), weights.begin() + n_labeled);
  const std::vector<int> tx(targets.begin(), targets.begin() + n_labeled);
  const GradientSet part_x = backward(model, inputs.topRows(n_labeled), wx, tx, n);

  const std::vector<double> wu(weights.begin() + n_labeled, weights.end());
  const std::vector<int> tu(targets.begin() + n_labeled, targets.end());
  const GradientSet part_u = backward(model, inputs.bottomRows(n_pseudo), wu, tu, n);

  for (std::size_t k = 0; k < total.weights.size(); ++k) {
    const Matrix sum = part_x.weights[k] + part_u.weights[k];
    CHECK((total.weights[k] - sum).cwiseAbs().maxCoeff() < 1e-12);
    const Vector bias_sum = part_x.biases[k] + part_u.biases[k];
    CHECK((total.biases[k] - bias_sum).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mixup_pair endpoints and midpoint") {
  Vector a(2), b(2);
  a << 1.0, 2.0;
  b << 3.0, -1.0;
  const WeightedTarget ta{0, 0.8};
  const WeightedTarget tb{1, 0.4};

  const MixedSample at_one = mixup_pair(a, b, ta, tb, 1.0);
  CHECK(at_one.features == a);
  CHECK(at_one.targets[0].effective_label == 0);
  CHECK(at_one.targets[0].weight == 0.8);
  CHECK(at_one.targets[1].weight == 0.0);

  const MixedSample at_zero = mixup_pair(a, b, ta, tb, 0.0);
  CHECK(at_zero.features == b);
  CHECK(at_zero.targets[1].weight == 0.4);
  CHECK(at_zero.targets[0].weight == 0.0);

  const MixedSample mid = mixup_pair(a, b, {0, 1.0}, {1, 1.0}, 0.5);
  CHECK(mid.features[0] == doctest::Approx(2.0));
  CHECK(mid.features[1] == doctest::Approx(0.5));
  CHECK(mid.targets[0].weight == doctest::Approx(0.5));
  CHECK(mid.targets[1].weight == doctest::Approx(0.5));

  CHECK_THROWS_AS(mixup_pair(a, b, ta, tb, 1.5), ConfigError);
  CHECK_THROWS_AS(mixup_pair(a, b, ta, tb, -0.1), ConfigError);
  Vector c(3);
  c.setZero();
  CHECK_THROWS_AS(mixup_pair(a, c, ta, tb, 0.5), ShapeError);
}
