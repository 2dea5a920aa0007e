#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmt/core.hpp"

namespace dmt {

enum class Activation { Relu, Identity };

struct Layer {
  Matrix weights;  // input_dim x output_dim
  Vector bias;     // output_dim
  Activation activation = Activation::Relu;
};

// Dense feed-forward classifier. Hidden layers are ReLU, the final layer is
// identity (logits). Stands in for the F_A / F_B pair of the mutual-training
// loop.
struct Model {
  std::vector<Layer> layers;

  int input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().weights.rows());
  }
  int class_count() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().weights.cols());
  }
};

struct GradientSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

struct SgdState {
  std::vector<Matrix> weight_velocity;
  std::vector<Vector> bias_velocity;
};

// He-scaled weights, zero biases; deterministic in seed.
Model init_model(std::uint64_t seed, const std::vector<int>& layer_sizes);

/// Batch logits; inputs are one sample per row.
Matrix forward(const Model& model, const Eigen::Ref<const Matrix>& inputs);

/// Max-subtracted numerically stable softmax of one logit row.
Vector softmax(const Eigen::Ref<const Vector>& logits);

/// Row-wise softmax over a logit matrix.
Matrix softmax_rows(const Eigen::Ref<const Matrix>& logits);

/// H = -sum_c p_c ln p_c with 0 ln 0 := 0.
double entropy(const Eigen::Ref<const Vector>& probabilities);

/// -ln p_target with p clamped at 1e-12 before the log.
double cross_entropy(const Eigen::Ref<const Vector>& probabilities, int target_class);

inline constexpr double kLogFloor = 1e-12;

// Analytic gradient of (1/normalizer) * sum_i weight_i * CE(target_i,
// softmax(forward(x_i))). The normalizer is explicit so callers can keep the
// full batch size N in the denominator while passing only a batch slice, and
// so duplicated samples compose exactly with re-weighted ones.
GradientSet backward(const Model& model, const Eigen::Ref<const Matrix>& inputs,
                     std::span<const double> sample_weights,
                     std::span<const int> targets, double normalizer);

GradientSet backward(const Model& model, const Eigen::Ref<const Matrix>& inputs,
                     std::span<const double> sample_weights,
                     std::span<const int> targets);

SgdState make_sgd_state(const Model& model);

// v <- momentum * v + grads + weight_decay * params; params <- params - lr * v
void sgd_step(Model& model, const GradientSet& grads, double learning_rate,
              double momentum, double weight_decay, SgdState& state);

// Flat text format: header "dmt-model v1 <layer_sizes...>" followed by
// whitespace-separated parameters in layer order, shortest round-trip decimal.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::string encode_model(const Model& model);
Model decode_model(const std::string& text);

/// FNV-1a over parameter bytes; used for fine-tuning continuity checks.
std::uint64_t parameter_hash(const Model& model);

/// Argmax with ties broken toward the lowest class index.
int argmax_class(const Eigen::Ref<const Vector>& values);

}  // namespace dmt
