#include "dmt/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dmt {

SplitPair difference_maximized_split(const std::vector<std::int64_t>& ids,
                                     std::size_t subset_size, std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (subset_size < 1 || subset_size > n) {
    throw ConfigError("difference_maximized_split: subset size " +
                      std::to_string(subset_size) + " out of range for n=" +
                      std::to_string(n));
  }
  std::vector<std::int64_t> shuffled = ids;
  Rng rng(seed);
  rng.shuffle(shuffled);

  SplitPair pair;
  pair.subset_a.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(subset_size));
  pair.subset_b.assign(shuffled.end() - static_cast<std::ptrdiff_t>(subset_size), shuffled.end());
  if (2 * subset_size > n) {
    pair.overlap.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n - subset_size),
                        shuffled.begin() + static_cast<std::ptrdiff_t>(subset_size));
  }
  return pair;
}

double gamma_at(const GammaSchedule& schedule, std::int64_t t) {
  if (schedule.mode == GammaSchedule::Mode::Constant) return schedule.value;
  const auto clamped = std::clamp<std::int64_t>(t, 0, schedule.t_max);
  const double progress =
      1.0 - static_cast<double>(clamped) / static_cast<double>(schedule.t_max);
  const double sign = schedule.inverted ? -5.0 : 5.0;
  return schedule.gamma_max * std::exp(sign * progress * progress);
}

double lr_at(const LrSchedule& schedule, std::int64_t t) {
  const auto clamped = std::clamp<std::int64_t>(t, 0, schedule.t_max);
  const double frac = static_cast<double>(clamped) / static_cast<double>(schedule.t_max);
  switch (schedule.mode) {
    case LrSchedule::Mode::Constant:
      return schedule.base;
    case LrSchedule::Mode::Poly:
      return schedule.base * std::pow(1.0 - frac, schedule.power);
    case LrSchedule::Mode::Cosine:
      return schedule.base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  throw ConfigError("lr_at: unknown schedule mode");
}

BatchComposer::BatchComposer(std::int64_t labeled_pool_size,
                             std::int64_t unlabeled_pool_size, BatchRatio ratio,
                             int batch_size, std::uint64_t seed)
    : rng_(seed) {
  if (ratio.unlabeled_per_labeled < 0) {
    throw ConfigError("compose_batch: ratio must be >= 0");
  }
  const int parts = ratio.unlabeled_per_labeled + 1;
  if (batch_size <= 0 || batch_size % parts != 0) {
    throw ConfigError("compose_batch: batch size " + std::to_string(batch_size) +
                      " not divisible by ratio+1 = " + std::to_string(parts));
  }
  labeled_per_batch_ = batch_size / parts;
  unlabeled_per_batch_ = batch_size - labeled_per_batch_;
  if (labeled_per_batch_ > 0 && labeled_pool_size <= 0) {
    throw ConfigError("compose_batch: labeled pool is empty but its share is > 0");
  }
  if (unlabeled_per_batch_ > 0 && unlabeled_pool_size <= 0) {
    throw ConfigError("compose_batch: unlabeled pool is empty but its share is > 0");
  }
  labeled_.order.resize(static_cast<std::size_t>(labeled_pool_size));
  unlabeled_.order.resize(static_cast<std::size_t>(unlabeled_pool_size));
  for (std::size_t i = 0; i < labeled_.order.size(); ++i) {
    labeled_.order[i] = static_cast<std::int64_t>(i);
  }
  for (std::size_t i = 0; i < unlabeled_.order.size(); ++i) {
    unlabeled_.order[i] = static_cast<std::int64_t>(i);
  }
  labeled_.cursor = labeled_.order.size();    // force a shuffle on first draw
  unlabeled_.cursor = unlabeled_.order.size();
}

std::int64_t BatchComposer::draw(Cycle& cycle, Rng& rng) {
  if (cycle.cursor >= cycle.order.size()) {
    rng.shuffle(cycle.order);
    cycle.cursor = 0;
  }
  return cycle.order[cycle.cursor++];
}

BatchIndices BatchComposer::next() {
  BatchIndices batch;
  batch.labeled.reserve(static_cast<std::size_t>(labeled_per_batch_));
  batch.unlabeled.reserve(static_cast<std::size_t>(unlabeled_per_batch_));
  for (int i = 0; i < labeled_per_batch_; ++i) batch.labeled.push_back(draw(labeled_, rng_));
  for (int i = 0; i < unlabeled_per_batch_; ++i) batch.unlabeled.push_back(draw(unlabeled_, rng_));
  return batch;
}

EmaTracker make_ema(const Model& model, double decay, bool zero_init) {
  if (decay < 0.0 || decay > 1.0) throw ConfigError("ema: decay must lie in [0,1]");
  EmaTracker tracker;
  tracker.decay = decay;
  for (const Layer& layer : model.layers) {
    tracker.weights.push_back(zero_init ? Matrix::Zero(layer.weights.rows(),
                                                       layer.weights.cols())
                                        : layer.weights);
    tracker.biases.push_back(zero_init ? Vector::Zero(layer.bias.size()) : layer.bias);
  }
  return tracker;
}

void ema_update(EmaTracker& tracker, const Model& model) {
  if (tracker.weights.size() != model.layers.size()) {
    throw ShapeError("ema_update: layer count mismatch");
  }
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const Layer& layer = model.layers[k];
    if (tracker.weights[k].rows() != layer.weights.rows() ||
        tracker.weights[k].cols() != layer.weights.cols()) {
      throw ShapeError("ema_update: weight shape mismatch at layer " + std::to_string(k));
    }
    tracker.weights[k] = tracker.decay * tracker.weights[k] + (1.0 - tracker.decay) * layer.weights;
    tracker.biases[k] = tracker.decay * tracker.biases[k] + (1.0 - tracker.decay) * layer.bias;
  }
}

Model ema_model(const EmaTracker& tracker, const Model& like) {
  if (tracker.weights.size() != like.layers.size()) {
    throw ShapeError("ema_model: layer count mismatch");
  }
  Model out = like;
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    out.layers[k].weights = tracker.weights[k];
    out.layers[k].bias = tracker.biases[k];
  }
  return out;
}

}  // namespace dmt
