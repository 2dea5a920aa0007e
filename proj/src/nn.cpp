#include "dmt/nn.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dmt/rng.hpp"

namespace dmt {

Model init_model(std::uint64_t seed, const std::vector<int>& layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("init_model: need at least input and output sizes, got " +
                      std::to_string(layer_sizes.size()));
  }
  for (int size : layer_sizes) {
    if (size < 1) throw ConfigError("init_model: layer sizes must be >= 1");
  }
  if (layer_sizes.back() < 2) {
    throw ConfigError("init_model: class count must be >= 2, got " +
                      std::to_string(layer_sizes.back()));
  }

  Rng rng(seed);
  Model model;
  model.layers.reserve(layer_sizes.size() - 1);
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    const int fan_in = layer_sizes[k];
    const int fan_out = layer_sizes[k + 1];
    Layer layer;
    layer.weights.resize(fan_in, fan_out);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) {
        layer.weights(i, j) = scale * rng.normal();
      }
    }
    layer.bias = Vector::Zero(fan_out);
    const bool last = (k + 2 == layer_sizes.size());
    layer.activation = last ? Activation::Identity : Activation::Relu;
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Matrix forward(const Model& model, const Eigen::Ref<const Matrix>& inputs) {
  if (model.layers.empty()) throw ShapeError("forward: model has no layers");
  if (inputs.cols() != model.input_dim()) {
    throw ShapeError("forward: input dim " + std::to_string(inputs.cols()) +
                     " != model input dim " + std::to_string(model.input_dim()));
  }
  Matrix activations = inputs;
  for (const Layer& layer : model.layers) {
    Matrix z = (activations * layer.weights).rowwise() + layer.bias.transpose();
    if (layer.activation == Activation::Relu) z = z.cwiseMax(0.0);
    activations = std::move(z);
  }
  return activations;
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double peak = logits.maxCoeff();
  Vector exps = (logits.array() - peak).exp();
  return exps / exps.sum();
}

Matrix softmax_rows(const Eigen::Ref<const Matrix>& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out.row(r) = softmax(logits.row(r).transpose()).transpose();
  }
  return out;
}

double entropy(const Eigen::Ref<const Vector>& probabilities) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < probabilities.size(); ++c) {
    const double p = probabilities[c];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double cross_entropy(const Eigen::Ref<const Vector>& probabilities, int target_class) {
  if (target_class < 0 || target_class >= probabilities.size()) {
    throw IndexError("cross_entropy: class " + std::to_string(target_class) +
                     " out of range for C=" + std::to_string(probabilities.size()));
  }
  return -std::log(std::max(probabilities[target_class], kLogFloor));
}

GradientSet backward(const Model& model, const Eigen::Ref<const Matrix>& inputs,
                     std::span<const double> sample_weights,
                     std::span<const int> targets, double normalizer) {
  const Eigen::Index n = inputs.rows();
  if (static_cast<Eigen::Index>(sample_weights.size()) != n ||
      static_cast<Eigen::Index>(targets.size()) != n) {
    throw ShapeError("backward: weights/targets must match input rows");
  }
  if (inputs.cols() != model.input_dim()) {
    throw ShapeError("backward: input dim mismatch");
  }
  const int class_count = model.class_count();
  for (int t : targets) {
    if (t < 0 || t >= class_count) {
      throw IndexError("backward: target class " + std::to_string(t) + " out of range");
    }
  }

  // Forward with cached pre- and post-activation values.
  const std::size_t depth = model.layers.size();
  std::vector<Matrix> post(depth + 1);
  std::vector<Matrix> pre(depth);
  post[0] = inputs;
  for (std::size_t k = 0; k < depth; ++k) {
    const Layer& layer = model.layers[k];
    pre[k] = (post[k] * layer.weights).rowwise() + layer.bias.transpose();
    post[k + 1] =
        layer.activation == Activation::Relu ? pre[k].cwiseMax(0.0) : pre[k];
  }

  // Softmax + clamped CE gives delta = w/normalizer * (p - onehot), except on
  // rows where the target probability sits at the log floor: there the loss is
  // constant in the logits, so the row contributes nothing.
  Matrix delta = softmax_rows(post[depth]);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double scale = sample_weights[static_cast<std::size_t>(i)] / normalizer;
    if (delta(i, targets[static_cast<std::size_t>(i)]) <= kLogFloor) {
      delta.row(i).setZero();
      continue;
    }
    delta(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
    delta.row(i) *= scale;
  }

  GradientSet grads;
  grads.weights.resize(depth);
  grads.biases.resize(depth);
  for (std::size_t k = depth; k-- > 0;) {
    grads.weights[k] = post[k].transpose() * delta;
    grads.biases[k] = delta.colwise().sum().transpose();
    if (k > 0) {
      delta = delta * model.layers[k].weights.transpose();
      if (model.layers[k - 1].activation == Activation::Relu) {
        delta = delta.cwiseProduct(
            (pre[k - 1].array() > 0.0).cast<double>().matrix());
      }
    }
  }

  for (const Matrix& g : grads.weights) {
    if (!g.allFinite()) throw NumericError("backward: non-finite weight gradient");
  }
  for (const Vector& g : grads.biases) {
    if (!g.allFinite()) throw NumericError("backward: non-finite bias gradient");
  }
  return grads;
}

GradientSet backward(const Model& model, const Eigen::Ref<const Matrix>& inputs,
                     std::span<const double> sample_weights,
                     std::span<const int> targets) {
  return backward(model, inputs, sample_weights, targets,
                  static_cast<double>(inputs.rows()));
}

SgdState make_sgd_state(const Model& model) {
  SgdState state;
  state.weight_velocity.reserve(model.layers.size());
  state.bias_velocity.reserve(model.layers.size());
  for (const Layer& layer : model.layers) {
    state.weight_velocity.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    state.bias_velocity.push_back(Vector::Zero(layer.bias.size()));
  }
  return state;
}

void sgd_step(Model& model, const GradientSet& grads, double learning_rate,
              double momentum, double weight_decay, SgdState& state) {
  if (learning_rate <= 0.0) throw ConfigError("sgd_step: learning rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd_step: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("sgd_step: weight decay must be >= 0");
  if (grads.weights.size() != model.layers.size()) {
    throw ShapeError("sgd_step: gradient/model layer count mismatch");
  }
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    Layer& layer = model.layers[k];
    state.weight_velocity[k] = momentum * state.weight_velocity[k] + grads.weights[k] +
                               weight_decay * layer.weights;
    state.bias_velocity[k] = momentum * state.bias_velocity[k] + grads.biases[k] +
                             weight_decay * layer.bias;
    layer.weights -= learning_rate * state.weight_velocity[k];
    layer.bias -= learning_rate * state.bias_velocity[k];
  }
}

namespace {

void append_number(std::string& out, double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, res.ptr);
}

double read_number(std::istringstream& in, const char* what) {
  std::string token;
  if (!(in >> token)) throw ParseError(std::string("model: missing ") + what);
  double value = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("model: bad number '" + token + "'");
  }
  return value;
}

}  // namespace

std::string encode_model(const Model& model) {
  std::string out = "dmt-model v1";
  out += ' ';
  out += std::to_string(model.input_dim());
  for (const Layer& layer : model.layers) {
    out += ' ';
    out += std::to_string(layer.weights.cols());
  }
  out += '\n';
  for (const Layer& layer : model.layers) {
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
        if (j > 0) out += ' ';
        append_number(out, layer.weights(i, j));
      }
      out += '\n';
    }
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) {
      if (j > 0) out += ' ';
      append_number(out, layer.bias[j]);
    }
    out += '\n';
  }
  return out;
}

Model decode_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("model: empty input");
  std::istringstream header(line);
  std::string magic, version;
  header >> magic >> version;
  if (magic != "dmt-model" || version != "v1") {
    throw ParseError("model: bad header '" + line + "'");
  }
  std::vector<int> sizes;
  int size = 0;
  while (header >> size) sizes.push_back(size);
  if (sizes.size() < 2) throw ParseError("model: header needs at least two layer sizes");

  std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream body(rest);
  Model model;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    Layer layer;
    layer.weights.resize(sizes[k], sizes[k + 1]);
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
        layer.weights(i, j) = read_number(body, "weight");
      }
    }
    layer.bias.resize(sizes[k + 1]);
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) {
      layer.bias[j] = read_number(body, "bias");
    }
    layer.activation =
        (k + 2 == sizes.size()) ? Activation::Identity : Activation::Relu;
    model.layers.push_back(std::move(layer));
  }
  double extra = 0.0;
  std::string token;
  if (body >> token) {
    (void)extra;
    throw ParseError("model: trailing data '" + token + "'");
  }
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << encode_model(model);
  if (!out) throw IoError("write failed: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(text);
}

std::uint64_t parameter_hash(const Model& model) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  auto mix = [&hash](const double* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &data[i], sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        hash ^= (bits >> (8 * b)) & 0xFF;
        hash *= 0x100000001B3ULL;
      }
    }
  };
  for (const Layer& layer : model.layers) {
    mix(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
    mix(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return hash;
}

int argmax_class(const Eigen::Ref<const Vector>& values) {
  int best = 0;
  for (Eigen::Index c = 1; c < values.size(); ++c) {
    if (values[c] > values[best]) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace dmt
