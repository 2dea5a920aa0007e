#pragma once

#include <cstdint>
#include <vector>

#include "dmt/core.hpp"
#include "dmt/nn.hpp"
#include "dmt/rng.hpp"

namespace dmt {

struct SplitPair {
  std::vector<std::int64_t> subset_a;
  std::vector<std::int64_t> subset_b;
  std::vector<std::int64_t> overlap;  // A intersect B, size max(0, 2s - n)
};

// Shuffle once, take the first s ids as A and the last s as B; the shared
// middle run (when 2s > n) is the unavoidable overlap.
SplitPair difference_maximized_split(const std::vector<std::int64_t>& ids,
                                     std::size_t subset_size, std::uint64_t seed);

struct GammaSchedule {
  enum class Mode { Constant, Ramp };
  Mode mode = Mode::Constant;
  double value = 0.0;      // Constant
  double gamma_max = 0.0;  // Ramp
  std::int64_t t_max = 1;  // Ramp
  // The printed ramp starts high (gamma_max * e^5 at t=0) and decays to
  // gamma_max; inverted uses exp(-5(1-t/t_max)^2), the usual ramp-up shape.
  bool inverted = false;
};

/// gamma_max * exp(+-5 (1 - t/t_max)^2); t clamps to [0, t_max].
double gamma_at(const GammaSchedule& schedule, std::int64_t t);

struct LrSchedule {
  enum class Mode { Constant, Poly, Cosine };
  Mode mode = Mode::Constant;
  double base = 0.1;
  std::int64_t t_max = 1;
  double power = 0.9;  // Poly
};

double lr_at(const LrSchedule& schedule, std::int64_t t);

struct BatchRatio {
  int unlabeled_per_labeled = 0;  // e.g. 7 gives 7 unlabeled : 1 labeled
};

struct BatchIndices {
  std::vector<std::int64_t> labeled;
  std::vector<std::int64_t> unlabeled;
};

// Draws labeled and pseudo-labeled pool indices at the configured ratio,
// without replacement within an epoch-shuffled cycle per pool; an exhausted
// pool reshuffles and continues.
class BatchComposer {
 public:
  BatchComposer(std::int64_t labeled_pool_size, std::int64_t unlabeled_pool_size,
                BatchRatio ratio, int batch_size, std::uint64_t seed);

  BatchIndices next();

  int labeled_per_batch() const { return labeled_per_batch_; }
  int unlabeled_per_batch() const { return unlabeled_per_batch_; }

 private:
  struct Cycle {
    std::vector<std::int64_t> order;
    std::size_t cursor = 0;
  };

  std::int64_t draw(Cycle& cycle, Rng& rng);

  Cycle labeled_;
  Cycle unlabeled_;
  int labeled_per_batch_ = 0;
  int unlabeled_per_batch_ = 0;
  Rng rng_;
};

// Shadow copy of the model parameters updated as
// shadow <- decay * shadow + (1 - decay) * params.
struct EmaTracker {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  double decay = 0.999;
};

/// Shadow starts from the model's parameters (or zeros when zero_init).
EmaTracker make_ema(const Model& model, double decay, bool zero_init = false);

void ema_update(EmaTracker& tracker, const Model& model);

/// Model with the shadow parameters and the tracked model's activations.
Model ema_model(const EmaTracker& tracker, const Model& like);

}  // namespace dmt
