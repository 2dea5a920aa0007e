#include "dmt/orchestration.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>
#include <set>
#include <string>

namespace dmt {

namespace {

// Substream tags for derive_seed; fixed so that runs are reproducible no
// matter which module draws first.
constexpr std::uint64_t kStreamTrain = 1;
constexpr std::uint64_t kStreamNoise = 2;
constexpr std::uint64_t kStreamInit = 3;
constexpr std::uint64_t kStreamSplit = 4;
constexpr std::uint64_t kStreamIteration = 16;
constexpr std::uint64_t kStreamRoleA = 64;
constexpr std::uint64_t kStreamRoleB = 65;

}  // namespace

void validate(const ExperimentConfig& config) {
  if (config.iterations < 1) throw ConfigError("config: iterations must be >= 1");
  if (static_cast<int>(config.alpha_schedule.size()) != config.iterations) {
    throw ConfigError("config: alpha schedule needs one fraction per iteration");
  }
  double prev = 0.0;
  for (double alpha : config.alpha_schedule) {
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("config: alpha fractions lie in (0,1]");
    if (alpha < prev) throw ConfigError("config: alpha schedule must be nondecreasing");
    prev = alpha;
  }
  if (config.alpha_schedule.back() != 1.0) {
    throw ConfigError("config: the last alpha must be 1.0");
  }
  if (config.weights.gamma1 < 0.0 || config.weights.gamma2 < 0.0) {
    throw ConfigError("config: gamma values must be >= 0");
  }
  if (config.fixed_threshold < 0.0 || config.fixed_threshold > 1.0) {
    throw ConfigError("config: threshold must lie in [0,1]");
  }
  if (config.batch_size < 1) throw ConfigError("config: batch size must be >= 1");
  if (config.batch_ratio.unlabeled_per_labeled < 0) {
    throw ConfigError("config: batch ratio must be >= 0");
  }
  if (config.batch_size % (config.batch_ratio.unlabeled_per_labeled + 1) != 0) {
    throw ConfigError("config: batch size must be divisible by ratio + 1");
  }
  if (config.learning_rate <= 0.0 || config.baseline_learning_rate <= 0.0) {
    throw ConfigError("config: learning rates must be > 0");
  }
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw ConfigError("config: momentum must lie in [0,1)");
  }
  if (config.weight_decay < 0.0) throw ConfigError("config: weight decay must be >= 0");
  if (config.epochs_per_iteration < 1 || config.base_epochs < 1 || config.online_epochs < 1) {
    throw ConfigError("config: epoch counts must be >= 1");
  }
  if (config.hidden_sizes.empty()) throw ConfigError("config: need at least one hidden layer");
  for (int h : config.hidden_sizes) {
    if (h < 1) throw ConfigError("config: hidden sizes must be >= 1");
  }
  if (!config.seeds.empty() &&
      static_cast<int>(config.seeds.size()) != config.iterations + 1) {
    throw ConfigError("config: seeds must hold base + one per iteration");
  }
  if (!config.role_seeds.empty() && config.role_seeds.size() != 2) {
    throw ConfigError("config: role seeds come as a pair");
  }
  if (config.subset_fraction <= 0.0 || config.subset_fraction > 1.0) {
    throw ConfigError("config: subset fraction must lie in (0,1]");
  }
  if (config.ema_decay < 0.0 || config.ema_decay > 1.0) {
    throw ConfigError("config: ema decay must lie in [0,1]");
  }
  if (config.noise_rate < 0.0 || config.noise_rate > 1.0) {
    throw ConfigError("config: noise rate must lie in [0,1]");
  }
  for (int it : config.noise_iterations) {
    if (it < 1 || it > config.iterations) {
      throw ConfigError("config: noise iterations must name existing iterations");
    }
  }
  if (config.labeled_ratio_override > 1.0 || config.labeled_ratio_override == 0.0) {
    throw ConfigError("config: labeled ratio override must lie in (0,1]");
  }
  const auto seeds = experiment_seeds(config);
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("config: seeds must be pairwise distinct");
  }
}

std::vector<std::uint64_t> experiment_seeds(const ExperimentConfig& config) {
  if (!config.seeds.empty()) return config.seeds;
  std::vector<std::uint64_t> seeds;
  seeds.push_back(config.base_seed);
  for (int i = 1; i <= config.iterations; ++i) {
    seeds.push_back(derive_seed(config.base_seed, kStreamIteration + static_cast<std::uint64_t>(i)));
  }
  return seeds;
}

int baseline_epochs(double labeled_ratio, int base_epochs) {
  if (labeled_ratio <= 0.0 || labeled_ratio > 1.0) {
    throw ConfigError("baseline_epochs: ratio must lie in (0,1]");
  }
  const double epochs = std::sqrt(1.0 / labeled_ratio) * static_cast<double>(base_epochs);
  return static_cast<int>(std::floor(epochs + 0.5));
}

void inject_label_noise(std::vector<PseudoLabelRecord>& records, double rate,
                        int class_count, Rng& rng) {
  if (rate <= 0.0 || records.empty()) return;
  const auto corrupt =
      static_cast<std::size_t>(std::llround(rate * static_cast<double>(records.size())));
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  for (std::size_t i = 0; i < corrupt && i < order.size(); ++i) {
    auto& rec = records[order[i]];
    const int offset = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(class_count - 1)));
    rec.label = (rec.label + offset) % class_count;
  }
}

// ---------------------------------------------------------------------------
// Task adapters: one view over tabular rows, one over grid pixels, feeding a
// shared training loop.

namespace {

struct LabeledPool {
  Matrix features;
  std::vector<int> labels;
};

struct PseudoPool {
  Matrix features;
  std::vector<int> labels;
  std::vector<double> confidences;
};

class TaskAdapter {
 public:
  virtual ~TaskAdapter() = default;
  virtual int input_dim() const = 0;
  virtual int class_count() const = 0;
  virtual std::int64_t labeled_count() const = 0;
  virtual std::int64_t unlabeled_count() const = 0;
  virtual double derived_labeled_ratio() const = 0;
  virtual std::vector<std::int64_t> labeled_unit_ids() const = 0;
  virtual LabeledPool fetch_labeled(const AugmentSpec& spec, Rng& rng) = 0;
  virtual const Matrix& unlabeled_features() const = 0;
  virtual PseudoPool fetch_pseudo(const std::vector<PseudoLabelRecord>& selected,
                                  const AugmentSpec& spec, bool augment, Rng& rng) = 0;
  virtual PseudoPool fetch_online(const AugmentSpec& spec, bool augment, Rng& rng) = 0;
  virtual double evaluate(const Model& model, Split split) const = 0;
  virtual std::string metric_name() const = 0;
  // Difference-maximized initialization trains each model on its own slice.
  virtual void restrict_labeled(const std::vector<std::int64_t>& unit_ids) = 0;
  virtual void clear_restriction() = 0;
};

class ClassificationAdapter final : public TaskAdapter {
 public:
  explicit ClassificationAdapter(const TabularDataset& data)
      : data_(data),
        labeled_rows_(data.rows_of(Split::Labeled)),
        unlabeled_rows_(data.rows_of(Split::Unlabeled)),
        valtiny_rows_(data.rows_of(Split::Valtiny)),
        test_rows_(data.rows_of(Split::Test)) {
    if (labeled_rows_.empty()) throw ConfigError("task: no labeled rows");
    active_rows_ = labeled_rows_;
    unlabeled_features_ = data_.gather(unlabeled_rows_);
  }

  int input_dim() const override { return data_.feature_dim(); }
  int class_count() const override { return data_.class_count(); }
  std::int64_t labeled_count() const override {
    return static_cast<std::int64_t>(active_rows_.size());
  }
  std::int64_t unlabeled_count() const override {
    return static_cast<std::int64_t>(unlabeled_rows_.size());
  }
  double derived_labeled_ratio() const override {
    const double train_pool = static_cast<double>(labeled_rows_.size() +
                                                  unlabeled_rows_.size() + valtiny_rows_.size());
    return static_cast<double>(labeled_rows_.size()) / train_pool;
  }
  std::vector<std::int64_t> labeled_unit_ids() const override {
    std::vector<std::int64_t> ids(labeled_rows_.size());
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    return ids;
  }

  LabeledPool fetch_labeled(const AugmentSpec& spec, Rng& rng) override {
    LabeledPool pool;
    pool.features = jitter_features(data_.gather(active_rows_), spec.feature_jitter_sigma, rng);
    pool.labels.reserve(active_rows_.size());
    for (std::int64_t row : active_rows_) pool.labels.push_back(data_.label_of(row));
    return pool;
  }

  const Matrix& unlabeled_features() const override { return unlabeled_features_; }

  PseudoPool fetch_pseudo(const std::vector<PseudoLabelRecord>& selected,
                          const AugmentSpec& spec, bool augment, Rng& rng) override {
    PseudoPool pool;
    pool.features.resize(static_cast<Eigen::Index>(selected.size()), data_.feature_dim());
    pool.labels.reserve(selected.size());
    pool.confidences.reserve(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
      pool.features.row(static_cast<Eigen::Index>(i)) =
          unlabeled_features_.row(selected[i].unit_id);
      pool.labels.push_back(selected[i].label);
      pool.confidences.push_back(selected[i].confidence);
    }
    if (augment) {
      pool.features = jitter_features(pool.features, spec.feature_jitter_sigma, rng);
    }
    return pool;
  }

  PseudoPool fetch_online(const AugmentSpec& spec, bool augment, Rng& rng) override {
    PseudoPool pool;
    pool.features = unlabeled_features_;
    if (augment) {
      pool.features = jitter_features(pool.features, spec.feature_jitter_sigma, rng);
    }
    pool.labels.assign(unlabeled_rows_.size(), 0);
    pool.confidences.assign(unlabeled_rows_.size(), 0.0);
    return pool;
  }

  double evaluate(const Model& model, Split split) const override {
    return evaluate_accuracy(model, data_, split);
  }
  std::string metric_name() const override { return "accuracy"; }

  void restrict_labeled(const std::vector<std::int64_t>& unit_ids) override {
    active_rows_.clear();
    for (std::int64_t id : unit_ids) {
      active_rows_.push_back(labeled_rows_.at(static_cast<std::size_t>(id)));
    }
  }
  void clear_restriction() override { active_rows_ = labeled_rows_; }

 private:
  const TabularDataset& data_;
  std::vector<std::int64_t> labeled_rows_;
  std::vector<std::int64_t> unlabeled_rows_;
  std::vector<std::int64_t> valtiny_rows_;
  std::vector<std::int64_t> test_rows_;
  std::vector<std::int64_t> active_rows_;
  Matrix unlabeled_features_;
};

class PixelAdapter final : public TaskAdapter {
 public:
  explicit PixelAdapter(const GridDataset& data)
      : data_(data),
        labeled_images_(data.images_of(Split::Labeled)),
        unlabeled_images_(data.images_of(Split::Unlabeled)) {
    if (labeled_images_.empty()) throw ConfigError("task: no labeled images");
    active_images_ = labeled_images_;
    const std::int64_t per_image =
        static_cast<std::int64_t>(data_.height()) * data_.width();
    unlabeled_features_.resize(
        static_cast<Eigen::Index>(unlabeled_images_.size()) * per_image,
        data_.pixel_feature_dim());
    for (std::size_t k = 0; k < unlabeled_images_.size(); ++k) {
      unlabeled_features_.middleRows(static_cast<Eigen::Index>(k) * per_image, per_image) =
          data_.window_features(unlabeled_images_[k]);
    }
  }

  int input_dim() const override { return data_.pixel_feature_dim(); }
  int class_count() const override { return data_.class_count(); }
  std::int64_t labeled_count() const override {
    return static_cast<std::int64_t>(active_images_.size()) * data_.height() * data_.width();
  }
  std::int64_t unlabeled_count() const override { return unlabeled_features_.rows(); }
  double derived_labeled_ratio() const override {
    const double train_pool =
        static_cast<double>(labeled_images_.size() + unlabeled_images_.size() +
                            data_.images_of(Split::Valtiny).size());
    return static_cast<double>(labeled_images_.size()) / train_pool;
  }
  std::vector<std::int64_t> labeled_unit_ids() const override {
    // Units for restriction purposes are labeled images, not pixels.
    std::vector<std::int64_t> ids(labeled_images_.size());
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    return ids;
  }

  LabeledPool fetch_labeled(const AugmentSpec& spec, Rng& rng) override {
    LabeledPool pool;
    const std::int64_t per_image =
        static_cast<std::int64_t>(data_.height()) * data_.width();
    pool.features.resize(static_cast<Eigen::Index>(active_images_.size()) * per_image,
                         data_.pixel_feature_dim());
    pool.labels.reserve(pool.features.rows());
    for (std::size_t k = 0; k < active_images_.size(); ++k) {
      GridSample sample;
      sample.channels = data_.image_channels(active_images_[k]);
      sample.label_map = data_.label_map(active_images_[k]);
      if (spec.flip_probability > 0.0 && rng.bernoulli(spec.flip_probability)) {
        hflip_sample(sample);
      }
      pool.features.middleRows(static_cast<Eigen::Index>(k) * per_image, per_image) =
          data_.window_features(sample.channels);
      for (int r = 0; r < data_.height(); ++r) {
        for (int c = 0; c < data_.width(); ++c) {
          pool.labels.push_back(sample.label_map(r, c));
        }
      }
    }
    return pool;
  }

  const Matrix& unlabeled_features() const override { return unlabeled_features_; }

  PseudoPool fetch_pseudo(const std::vector<PseudoLabelRecord>& selected,
                          const AugmentSpec& spec, bool augment, Rng& rng) override {
    // Per-image label/confidence/mask maps, flipped together with the image,
    // so pseudo supervision stays pixel-aligned under augmentation.
    const int height = data_.height();
    const int width = data_.width();
    const std::int64_t per_image = static_cast<std::int64_t>(height) * width;
    std::vector<std::vector<const PseudoLabelRecord*>> by_image(unlabeled_images_.size());
    for (const auto& rec : selected) {
      by_image[static_cast<std::size_t>(rec.unit_id / per_image)].push_back(&rec);
    }

    PseudoPool pool;
    pool.features.resize(static_cast<Eigen::Index>(selected.size()), data_.pixel_feature_dim());
    pool.labels.reserve(selected.size());
    pool.confidences.reserve(selected.size());
    Eigen::Index out_row = 0;
    for (std::size_t k = 0; k < unlabeled_images_.size(); ++k) {
      if (by_image[k].empty()) continue;
      GridSample sample;
      sample.channels = data_.image_channels(unlabeled_images_[k]);
      sample.label_map.setZero(height, width);
      Matrix conf_map = Matrix::Zero(height, width);
      Eigen::MatrixXi mask = Eigen::MatrixXi::Zero(height, width);
      for (const PseudoLabelRecord* rec : by_image[k]) {
        const std::int64_t offset = rec->unit_id % per_image;
        const int r = static_cast<int>(offset / width);
        const int c = static_cast<int>(offset % width);
        sample.label_map(r, c) = rec->label;
        conf_map(r, c) = rec->confidence;
        mask(r, c) = 1;
      }
      if (augment && spec.flip_probability > 0.0 && rng.bernoulli(spec.flip_probability)) {
        hflip_sample(sample);
        hflip_map(conf_map);
        hflip_map(mask);
      }
      const Matrix features = data_.window_features(sample.channels);
      for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
          if (!mask(r, c)) continue;
          pool.features.row(out_row++) = features.row(static_cast<Eigen::Index>(r) * width + c);
          pool.labels.push_back(sample.label_map(r, c));
          pool.confidences.push_back(conf_map(r, c));
        }
      }
    }
    return pool;
  }

  PseudoPool fetch_online(const AugmentSpec& spec, bool augment, Rng& rng) override {
    PseudoPool pool;
    if (!augment || spec.flip_probability <= 0.0) {
      pool.features = unlabeled_features_;
    } else {
      const std::int64_t per_image =
          static_cast<std::int64_t>(data_.height()) * data_.width();
      pool.features.resize(unlabeled_features_.rows(), data_.pixel_feature_dim());
      for (std::size_t k = 0; k < unlabeled_images_.size(); ++k) {
        std::vector<Matrix> channels = data_.image_channels(unlabeled_images_[k]);
        if (rng.bernoulli(spec.flip_probability)) {
          for (Matrix& ch : channels) hflip_map(ch);
        }
        pool.features.middleRows(static_cast<Eigen::Index>(k) * per_image, per_image) =
            data_.window_features(channels);
      }
    }
    pool.labels.assign(static_cast<std::size_t>(pool.features.rows()), 0);
    pool.confidences.assign(static_cast<std::size_t>(pool.features.rows()), 0.0);
    return pool;
  }

  double evaluate(const Model& model, Split split) const override {
    return evaluate_miou(model, data_, split);
  }
  std::string metric_name() const override { return "miou"; }

  void restrict_labeled(const std::vector<std::int64_t>& unit_ids) override {
    active_images_.clear();
    for (std::int64_t id : unit_ids) {
      active_images_.push_back(labeled_images_.at(static_cast<std::size_t>(id)));
    }
  }
  void clear_restriction() override { active_images_ = labeled_images_; }

 private:
  const GridDataset& data_;
  std::vector<std::int64_t> labeled_images_;
  std::vector<std::int64_t> unlabeled_images_;
  std::vector<std::int64_t> active_images_;
  Matrix unlabeled_features_;
};

// ---------------------------------------------------------------------------
// Shared training loop.

struct PhaseConfig {
  int epochs = 1;
  int batch_size = 8;
  BatchRatio ratio{0};
  LrSchedule::Mode lr_mode = LrSchedule::Mode::Constant;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  DynamicWeightConfig weights;
  bool gamma_ramp = false;
  bool gamma_ramp_inverted = false;
  NormalizeBy normalize_by = NormalizeBy::Batch;
  bool unit_weights = false;  // CBST-style: omega = 1 on every selected unit
  bool online = false;        // live pseudo-labeling with a fixed threshold
  double online_threshold = 0.9;
  bool mixup = false;
  bool augment_unlabeled = true;
  AugmentSpec augment;
};

struct PhaseStats {
  std::vector<LossBreakdown> epoch_losses;
  double mean_dynamic_weight = 0.0;
  std::int64_t steps = 0;
};

std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  return (num + den - 1) / den;
}

PhaseStats run_training_phase(Model& model, TaskAdapter& task,
                              const std::vector<PseudoLabelRecord>* selected,
                              const PhaseConfig& phase, Rng& rng, EmaTracker* ema) {
  const std::int64_t n_labeled = task.labeled_count();
  const std::int64_t n_pseudo =
      phase.online ? task.unlabeled_count()
                   : (selected ? static_cast<std::int64_t>(selected->size()) : 0);
  const bool with_pseudo = n_pseudo > 0;

  int labeled_share = phase.batch_size;
  int unlabeled_share = 0;
  if (with_pseudo) {
    const int parts = phase.ratio.unlabeled_per_labeled + 1;
    labeled_share = phase.batch_size / parts;
    unlabeled_share = phase.batch_size - labeled_share;
  }
  if (unlabeled_share == 0 && with_pseudo) {
    // ratio 0 requests a purely supervised batch; drop the pseudo pool
    return run_training_phase(model, task, nullptr,
                              [&] {
                                PhaseConfig p = phase;
                                p.online = false;
                                return p;
                              }(),
                              rng, ema);
  }

  std::int64_t steps_per_epoch = 1;
  if (labeled_share > 0) steps_per_epoch = ceil_div(n_labeled, labeled_share);
  if (unlabeled_share > 0) {
    steps_per_epoch = std::max(steps_per_epoch, ceil_div(n_pseudo, unlabeled_share));
  }
  const std::int64_t t_max = static_cast<std::int64_t>(phase.epochs) * steps_per_epoch;

  const LrSchedule lr{phase.lr_mode, phase.learning_rate, t_max, 0.9};
  GammaSchedule ramp;  // multiplier applied to both gammas
  ramp.mode = phase.gamma_ramp ? GammaSchedule::Mode::Ramp : GammaSchedule::Mode::Constant;
  ramp.value = 1.0;
  ramp.gamma_max = 1.0;
  ramp.t_max = t_max;
  ramp.inverted = phase.gamma_ramp_inverted;

  BatchComposer composer(n_labeled, std::max<std::int64_t>(n_pseudo, 0),
                         with_pseudo ? phase.ratio : BatchRatio{0},
                         phase.batch_size, rng.next_u64());

  SgdState sgd = make_sgd_state(model);
  PhaseStats stats;
  double weight_sum = 0.0;
  std::int64_t weight_count = 0;
  std::int64_t t = 0;

  for (int epoch = 0; epoch < phase.epochs; ++epoch) {
    LabeledPool labeled = task.fetch_labeled(phase.augment, rng);
    PseudoPool pseudo;
    if (with_pseudo) {
      pseudo = phase.online
                   ? task.fetch_online(phase.augment, phase.augment_unlabeled, rng)
                   : task.fetch_pseudo(*selected, phase.augment, phase.augment_unlabeled, rng);
    }

    LossBreakdown epoch_loss;
    for (std::int64_t step = 0; step < steps_per_epoch; ++step, ++t) {
      const BatchIndices batch = composer.next();
      const auto n_lab_rows = static_cast<Eigen::Index>(batch.labeled.size());
      const auto n_pse_rows = static_cast<Eigen::Index>(batch.unlabeled.size());
      const Eigen::Index rows = n_lab_rows + n_pse_rows;

      Matrix inputs(rows, model.input_dim());
      for (Eigen::Index i = 0; i < n_lab_rows; ++i) {
        inputs.row(i) = labeled.features.row(batch.labeled[static_cast<std::size_t>(i)]);
      }
      for (Eigen::Index i = 0; i < n_pse_rows; ++i) {
        inputs.row(n_lab_rows + i) =
            pseudo.features.row(batch.unlabeled[static_cast<std::size_t>(i)]);
      }

      const Matrix probs = softmax_rows(forward(model, inputs));

      const double gamma_scale = gamma_at(ramp, t);
      DynamicWeightConfig step_weights = phase.weights;
      step_weights.gamma1 = phase.weights.gamma1 * gamma_scale;
      step_weights.gamma2 = phase.weights.gamma2 * gamma_scale;

      std::vector<int> targets(static_cast<std::size_t>(rows));
      std::vector<double> unit_weights(static_cast<std::size_t>(rows), 1.0);
      std::vector<WeightedTarget> pseudo_targets(static_cast<std::size_t>(n_pse_rows));
      for (Eigen::Index i = 0; i < n_lab_rows; ++i) {
        targets[static_cast<std::size_t>(i)] =
            labeled.labels[static_cast<std::size_t>(batch.labeled[static_cast<std::size_t>(i)])];
      }
      for (Eigen::Index i = 0; i < n_pse_rows; ++i) {
        const auto pool_idx = static_cast<std::size_t>(batch.unlabeled[static_cast<std::size_t>(i)]);
        const Eigen::Index row = n_lab_rows + i;
        WeightedTarget wt;
        if (phase.online) {
          const int live = argmax_class(probs.row(row).transpose());
          const double conf = probs(row, live);
          wt = {live, conf > phase.online_threshold ? 1.0 : 0.0};
        } else {
          DisagreementInputs d;
          d.pseudo_label = pseudo.labels[pool_idx];
          d.pseudo_confidence = pseudo.confidences[pool_idx];
          d.live_label = argmax_class(probs.row(row).transpose());
          d.live_confidence = probs(row, d.live_label);
          d.live_prob_of_pseudo = probs(row, d.pseudo_label);
          wt = phase.unit_weights ? WeightedTarget{d.pseudo_label, 1.0}
                                  : dynamic_weight(d, step_weights);
        }
        pseudo_targets[static_cast<std::size_t>(i)] = wt;
        targets[static_cast<std::size_t>(row)] = wt.effective_label;
        unit_weights[static_cast<std::size_t>(row)] = wt.weight;
        weight_sum += wt.weight;
        ++weight_count;
      }

      const double norm_labeled = phase.normalize_by == NormalizeBy::Batch
                                      ? static_cast<double>(rows)
                                      : static_cast<double>(std::max<Eigen::Index>(n_lab_rows, 1));
      const double norm_pseudo = phase.normalize_by == NormalizeBy::Batch
                                     ? static_cast<double>(rows)
                                     : static_cast<double>(std::max<Eigen::Index>(n_pse_rows, 1));

      std::vector<int> labeled_targets(targets.begin(), targets.begin() + n_lab_rows);
      const double lx =
          n_lab_rows > 0
              ? labeled_loss(labeled_targets, probs.topRows(n_lab_rows), norm_labeled)
              : 0.0;
      const double lu = n_pse_rows > 0
                            ? unlabeled_loss(pseudo_targets, probs.bottomRows(n_pse_rows),
                                             norm_pseudo)
                            : 0.0;
      const LossBreakdown loss = combined_loss(lx, lu);
      epoch_loss.labeled += loss.labeled;
      epoch_loss.unlabeled += loss.unlabeled;
      epoch_loss.total += loss.total;

      // Backward folds each part's normalizer into the sample weights, so the
      // gradient of L = L_X + L_U falls out of a single pass.
      std::vector<double> grad_weights(static_cast<std::size_t>(rows));
      for (Eigen::Index i = 0; i < n_lab_rows; ++i) {
        grad_weights[static_cast<std::size_t>(i)] = 1.0 / norm_labeled;
      }
      for (Eigen::Index i = 0; i < n_pse_rows; ++i) {
        grad_weights[static_cast<std::size_t>(n_lab_rows + i)] =
            unit_weights[static_cast<std::size_t>(n_lab_rows + i)] / norm_pseudo;
      }

      GradientSet grads;
      if (phase.mixup) {
        // Pair each row with a shuffled partner; weights were computed on the
        // unmixed inputs, only inputs and weights interpolate.
        std::vector<Eigen::Index> partner(static_cast<std::size_t>(rows));
        std::iota(partner.begin(), partner.end(), Eigen::Index{0});
        rng.shuffle(partner);
        const double lambda = rng.uniform();
        Matrix mixed(rows, inputs.cols());
        for (Eigen::Index i = 0; i < rows; ++i) {
          mixed.row(i) = lambda * inputs.row(i) +
                         (1.0 - lambda) * inputs.row(partner[static_cast<std::size_t>(i)]);
        }
        Matrix doubled(2 * rows, inputs.cols());
        doubled.topRows(rows) = mixed;
        doubled.bottomRows(rows) = mixed;
        std::vector<int> mixed_targets(static_cast<std::size_t>(2 * rows));
        std::vector<double> mixed_weights(static_cast<std::size_t>(2 * rows));
        for (Eigen::Index i = 0; i < rows; ++i) {
          const auto p = partner[static_cast<std::size_t>(i)];
          mixed_targets[static_cast<std::size_t>(i)] = targets[static_cast<std::size_t>(i)];
          mixed_weights[static_cast<std::size_t>(i)] =
              lambda * grad_weights[static_cast<std::size_t>(i)];
          mixed_targets[static_cast<std::size_t>(rows + i)] =
              targets[static_cast<std::size_t>(p)];
          mixed_weights[static_cast<std::size_t>(rows + i)] =
              (1.0 - lambda) * grad_weights[static_cast<std::size_t>(p)];
        }
        grads = backward(model, doubled, mixed_weights, mixed_targets, 1.0);
      } else {
        grads = backward(model, inputs, grad_weights, targets, 1.0);
      }

      sgd_step(model, grads, lr_at(lr, t), phase.momentum, phase.weight_decay, sgd);
      if (ema) ema_update(*ema, model);
      ++stats.steps;
    }
    epoch_loss.labeled /= static_cast<double>(steps_per_epoch);
    epoch_loss.unlabeled /= static_cast<double>(steps_per_epoch);
    epoch_loss.total /= static_cast<double>(steps_per_epoch);
    stats.epoch_losses.push_back(epoch_loss);
  }
  stats.mean_dynamic_weight =
      weight_count > 0 ? weight_sum / static_cast<double>(weight_count) : 0.0;
  return stats;
}

// ---------------------------------------------------------------------------
// Runners.

std::vector<PseudoLabelRecord> selected_records(const PseudoLabelSet& set) {
  std::vector<PseudoLabelRecord> out;
  for (const auto& rec : set.records) {
    if (rec.selected) out.push_back(rec);
  }
  return out;
}

bool noise_applies(const ExperimentConfig& config, int iteration) {
  if (config.noise_rate <= 0.0) return false;
  if (config.noise_iterations.empty()) return true;
  return std::find(config.noise_iterations.begin(), config.noise_iterations.end(),
                   iteration) != config.noise_iterations.end();
}

std::vector<int> model_sizes(const ExperimentConfig& config, const TaskAdapter& task) {
  std::vector<int> sizes;
  sizes.push_back(task.input_dim());
  sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
  sizes.push_back(task.class_count());
  return sizes;
}

double effective_labeled_ratio(const ExperimentConfig& config, const TaskAdapter& task) {
  return config.labeled_ratio_override > 0.0 ? config.labeled_ratio_override
                                             : task.derived_labeled_ratio();
}

void push_metric(RunResult& result, const ExperimentConfig& config, int iteration,
                 const std::string& name, double value) {
  result.metrics.push_back({config.run_id, config.base_seed, iteration, name, value});
}

void maybe_save(const ExperimentConfig& config, const Model& model, int iteration,
                const std::string& role) {
  if (!config.save_checkpoints) return;
  std::filesystem::create_directories(config.checkpoint_dir);
  const std::string name = "iter" + std::to_string(iteration) + role + ".model";
  save_model(model, (std::filesystem::path(config.checkpoint_dir) / name).string());
}

PhaseConfig supervised_phase(const ExperimentConfig& config, int epochs) {
  PhaseConfig phase;
  phase.epochs = epochs;
  phase.batch_size = config.batch_size;
  phase.ratio = BatchRatio{0};
  phase.lr_mode = config.lr_mode;
  phase.learning_rate = config.baseline_learning_rate;
  phase.momentum = config.momentum;
  phase.weight_decay = config.weight_decay;
  phase.normalize_by = config.normalize_by;
  phase.mixup = config.mixup;
  phase.augment = config.augment;
  return phase;
}

PhaseConfig iteration_phase(const ExperimentConfig& config, bool unit_weights) {
  PhaseConfig phase;
  phase.epochs = config.epochs_per_iteration;
  phase.batch_size = config.batch_size;
  phase.ratio = config.batch_ratio;
  phase.lr_mode = config.lr_mode;
  phase.learning_rate = config.learning_rate;
  phase.momentum = config.momentum;
  phase.weight_decay = config.weight_decay;
  phase.weights = config.weights;
  phase.gamma_ramp = config.gamma_ramp;
  phase.gamma_ramp_inverted = config.gamma_ramp_inverted;
  phase.normalize_by = config.normalize_by;
  phase.unit_weights = unit_weights;
  phase.mixup = config.mixup;
  phase.augment = config.augment;
  return phase;
}

void log_iteration(RunResult& result, const ExperimentConfig& config, TaskAdapter& task,
                   const Model& model, IterationLog log, const PhaseStats& stats,
                   const EmaTracker* ema) {
  log.epoch_losses = stats.epoch_losses;
  log.mean_dynamic_weight = stats.mean_dynamic_weight;
  log.valtiny_metric = task.evaluate(model, Split::Valtiny);
  log.test_metric = task.evaluate(model, Split::Test);
  log.end_hash = parameter_hash(model);

  const std::string suffix = log.role.empty() ? "" : "_" + log.role;
  push_metric(result, config, log.iteration, "epochs" + suffix,
              static_cast<double>(log.epochs));
  push_metric(result, config, log.iteration, "valtiny_" + task.metric_name() + suffix,
              log.valtiny_metric);
  push_metric(result, config, log.iteration, "test_" + task.metric_name() + suffix,
              log.test_metric);
  if (log.iteration > 0) {
    push_metric(result, config, log.iteration, "selected_count" + suffix,
                static_cast<double>(log.selected_count));
    push_metric(result, config, log.iteration, "mean_dynamic_weight" + suffix,
                log.mean_dynamic_weight);
    push_metric(result, config, log.iteration, "seed" + suffix,
                static_cast<double>(log.seed_used));
  }
  if (!stats.epoch_losses.empty()) {
    const LossBreakdown& last = stats.epoch_losses.back();
    push_metric(result, config, log.iteration, "loss_labeled" + suffix, last.labeled);
    push_metric(result, config, log.iteration, "loss_unlabeled" + suffix, last.unlabeled);
    push_metric(result, config, log.iteration, "loss_total" + suffix, last.total);
  }
  if (ema) {
    const Model shadow = ema_model(*ema, model);
    push_metric(result, config, log.iteration, "ema_valtiny_" + task.metric_name() + suffix,
                task.evaluate(shadow, Split::Valtiny));
    push_metric(result, config, log.iteration, "ema_test_" + task.metric_name() + suffix,
                task.evaluate(shadow, Split::Test));
  }
  result.logs.push_back(std::move(log));
}

void finalize(RunResult& result, const ExperimentConfig& config, TaskAdapter& task,
              const EmaTracker* ema) {
  Model reported = result.model;
  if (config.ema_eval && ema) reported = ema_model(*ema, result.model);
  result.valtiny_metric = task.evaluate(reported, Split::Valtiny);
  result.test_metric = task.evaluate(reported, Split::Test);
  push_metric(result, config, config.iterations + 1, "final_valtiny_" + task.metric_name(),
              result.valtiny_metric);
  push_metric(result, config, config.iterations + 1, "final_test_" + task.metric_name(),
              result.test_metric);
  result.model = reported;
}

RunResult supervised_run(TaskAdapter& task, const ExperimentConfig& config) {
  validate(config);
  RunResult result;
  const auto seeds = experiment_seeds(config);
  Rng train_rng(derive_seed(config.base_seed, kStreamTrain));

  Model model = init_model(seeds[0], model_sizes(config, task));
  const int epochs = baseline_epochs(effective_labeled_ratio(config, task), config.base_epochs);

  const bool track_ema = task.metric_name() == "accuracy";
  EmaTracker ema = make_ema(model, config.ema_decay);

  IterationLog log;
  log.iteration = 0;
  log.seed_used = seeds[0];
  log.epochs = epochs;
  log.start_hash = parameter_hash(model);
  const PhaseStats stats = run_training_phase(model, task, nullptr,
                                              supervised_phase(config, epochs), train_rng,
                                              track_ema ? &ema : nullptr);
  log_iteration(result, config, task, model, std::move(log), stats,
                track_ema ? &ema : nullptr);
  maybe_save(config, model, 0, "");

  result.model = model;
  result.finals = {model};
  finalize(result, config, task, track_ema ? &ema : nullptr);
  return result;
}

// Alg. 1-style single lineage: label, select, (re)train, repeat. CBST and DST
// are the unit-weight / fine-tuning corners of the same loop.
RunResult iterative_self_training(TaskAdapter& task, const ExperimentConfig& config,
                                  bool reinit_each_iteration, bool unit_weights) {
  validate(config);
  RunResult result;
  const auto seeds = experiment_seeds(config);
  Rng train_rng(derive_seed(config.base_seed, kStreamTrain));
  Rng noise_rng(derive_seed(config.base_seed, kStreamNoise));
  const auto sizes = model_sizes(config, task);
  const bool track_ema = task.metric_name() == "accuracy";

  Model model = init_model(seeds[0], sizes);
  EmaTracker ema = make_ema(model, config.ema_decay);
  {
    const int epochs =
        baseline_epochs(effective_labeled_ratio(config, task), config.base_epochs);
    IterationLog log;
    log.iteration = 0;
    log.seed_used = seeds[0];
    log.epochs = epochs;
    log.start_hash = parameter_hash(model);
    const PhaseStats stats = run_training_phase(model, task, nullptr,
                                                supervised_phase(config, epochs), train_rng,
                                                track_ema ? &ema : nullptr);
    log_iteration(result, config, task, model, std::move(log), stats,
                  track_ema ? &ema : nullptr);
    maybe_save(config, model, 0, "");
  }

  for (int i = 1; i <= config.iterations; ++i) {
    const double alpha = config.alpha_schedule[static_cast<std::size_t>(i - 1)];
    const SelectionPolicy policy = [&] {
      switch (config.selection) {
        case SelectionKind::FixedThreshold:
          return SelectionPolicy::fixed_threshold(config.fixed_threshold);
        case SelectionKind::GlobalTopFraction:
          return SelectionPolicy::global_top_fraction(alpha);
        case SelectionKind::ClassBalancedTopFraction:
          return SelectionPolicy::class_balanced_top_fraction(alpha);
        case SelectionKind::CbstRenormalized:
          return SelectionPolicy::cbst_renormalized(alpha);
      }
      throw ConfigError("unknown selection policy");
    }();

    PseudoLabelSet set = generate_pseudo_labels(
        model, task.unlabeled_features(),
        config.selection == SelectionKind::CbstRenormalized);
    select(set, policy, task.class_count());
    std::vector<PseudoLabelRecord> selected = selected_records(set);
    if (noise_applies(config, i)) {
      inject_label_noise(selected, config.noise_rate, task.class_count(), noise_rng);
    }

    if (reinit_each_iteration) {
      model = init_model(seeds[static_cast<std::size_t>(i)], sizes);
    }
    if (track_ema) ema = make_ema(model, config.ema_decay);

    IterationLog log;
    log.iteration = i;
    log.seed_used = reinit_each_iteration ? seeds[static_cast<std::size_t>(i)] : seeds[0];
    log.epochs = config.epochs_per_iteration;
    log.selected_count = static_cast<std::int64_t>(selected.size());
    log.start_hash = parameter_hash(model);

    const PhaseStats stats =
        selected.empty()
            ? run_training_phase(model, task, nullptr,
                                 supervised_phase(config, config.epochs_per_iteration),
                                 train_rng, track_ema ? &ema : nullptr)
            : run_training_phase(model, task, &selected, iteration_phase(config, unit_weights),
                                 train_rng, track_ema ? &ema : nullptr);
    log_iteration(result, config, task, model, std::move(log), stats,
                  track_ema ? &ema : nullptr);
    maybe_save(config, model, i, "");
  }

  result.model = model;
  result.finals = {model};
  finalize(result, config, task, track_ema ? &ema : nullptr);
  return result;
}

// Alg. 2-style mutual training: two lineages fine-tune on labels from each
// other's previous iterate (or their own under self_supervise).
RunResult mutual_pixel_training(TaskAdapter& task, const ExperimentConfig& config) {
  validate(config);
  RunResult result;
  const std::uint64_t base = config.base_seed;
  const std::uint64_t seed_a =
      config.role_seeds.size() == 2 ? config.role_seeds[0] : derive_seed(base, kStreamRoleA);
  const std::uint64_t seed_b =
      config.role_seeds.size() == 2 ? config.role_seeds[1] : derive_seed(base, kStreamRoleB);
  if (seed_a == seed_b) throw ConfigError("config: role seeds must differ");

  Rng rng_a(derive_seed(seed_a, kStreamTrain));
  Rng rng_b(derive_seed(seed_b, kStreamTrain));
  Rng noise_a(derive_seed(seed_a, kStreamNoise));
  Rng noise_b(derive_seed(seed_b, kStreamNoise));
  const auto sizes = model_sizes(config, task);

  Model model_a;
  Model model_b;
  const int epochs0 =
      baseline_epochs(effective_labeled_ratio(config, task), config.base_epochs);
  if (config.init_mode == InitMode::DifferentSeeds) {
    model_a = init_model(seed_a, sizes);
    model_b = init_model(seed_b, sizes);
  } else {
    // Same weights, maximally different labeled slices.
    const Model shared = init_model(derive_seed(base, kStreamInit), sizes);
    model_a = shared;
    model_b = shared;
    const auto ids = task.labeled_unit_ids();
    const auto subset = static_cast<std::size_t>(
        std::ceil(config.subset_fraction * static_cast<double>(ids.size())));
    const SplitPair split =
        difference_maximized_split(ids, subset, derive_seed(base, kStreamSplit));
    task.restrict_labeled(split.subset_a);
    {
      IterationLog log;
      log.iteration = 0;
      log.role = "a";
      log.seed_used = seed_a;
      log.epochs = epochs0;
      log.start_hash = parameter_hash(model_a);
      const PhaseStats stats = run_training_phase(
          model_a, task, nullptr, supervised_phase(config, epochs0), rng_a, nullptr);
      log_iteration(result, config, task, model_a, std::move(log), stats, nullptr);
    }
    task.restrict_labeled(split.subset_b);
    {
      IterationLog log;
      log.iteration = 0;
      log.role = "b";
      log.seed_used = seed_b;
      log.epochs = epochs0;
      log.start_hash = parameter_hash(model_b);
      const PhaseStats stats = run_training_phase(
          model_b, task, nullptr, supervised_phase(config, epochs0), rng_b, nullptr);
      log_iteration(result, config, task, model_b, std::move(log), stats, nullptr);
    }
    task.clear_restriction();
  }

  if (config.init_mode == InitMode::DifferentSeeds) {
    for (int role = 0; role < 2; ++role) {
      Model& model = role == 0 ? model_a : model_b;
      IterationLog log;
      log.iteration = 0;
      log.role = role == 0 ? "a" : "b";
      log.seed_used = role == 0 ? seed_a : seed_b;
      log.epochs = epochs0;
      log.start_hash = parameter_hash(model);
      const PhaseStats stats =
          run_training_phase(model, task, nullptr, supervised_phase(config, epochs0),
                             role == 0 ? rng_a : rng_b, nullptr);
      log_iteration(result, config, task, model, std::move(log), stats, nullptr);
    }
  }
  maybe_save(config, model_a, 0, "a");
  maybe_save(config, model_b, 0, "b");

  for (int i = 1; i <= config.iterations; ++i) {
    const double alpha = config.alpha_schedule[static_cast<std::size_t>(i - 1)];
    const SelectionPolicy policy = SelectionPolicy::class_balanced_top_fraction(alpha);

    // Both label sets come from the previous iterates, before either model
    // moves; cross-supervision unless the literal self-labeling is requested.
    const Model& generator_for_a = config.self_supervise ? model_a : model_b;
    const Model& generator_for_b = config.self_supervise ? model_b : model_a;

    PseudoLabelSet set_a = generate_pseudo_labels(generator_for_a, task.unlabeled_features());
    select(set_a, policy, task.class_count());
    std::vector<PseudoLabelRecord> selected_a = selected_records(set_a);
    if (noise_applies(config, i)) {
      inject_label_noise(selected_a, config.noise_rate, task.class_count(), noise_a);
    }

    PseudoLabelSet set_b = generate_pseudo_labels(generator_for_b, task.unlabeled_features());
    select(set_b, policy, task.class_count());
    std::vector<PseudoLabelRecord> selected_b = selected_records(set_b);
    if (noise_applies(config, i)) {
      inject_label_noise(selected_b, config.noise_rate, task.class_count(), noise_b);
    }

    for (int role = 0; role < 2; ++role) {
      Model& model = role == 0 ? model_a : model_b;
      auto& selected = role == 0 ? selected_a : selected_b;
      IterationLog log;
      log.iteration = i;
      log.role = role == 0 ? "a" : "b";
      log.seed_used = role == 0 ? seed_a : seed_b;
      log.epochs = config.epochs_per_iteration;
      log.selected_count = static_cast<std::int64_t>(selected.size());
      log.start_hash = parameter_hash(model);
      const PhaseStats stats = run_training_phase(
          model, task, &selected, iteration_phase(config, false), role == 0 ? rng_a : rng_b,
          nullptr);
      log_iteration(result, config, task, model, std::move(log), stats, nullptr);
      maybe_save(config, model, i, role == 0 ? "a" : "b");
    }
  }

  const double miou_a = task.evaluate(model_a, Split::Valtiny);
  const double miou_b = task.evaluate(model_b, Split::Valtiny);
  result.finals = {model_a, model_b};
  result.best_index = miou_b > miou_a ? 1 : 0;  // ties go to model A
  result.model = result.finals[static_cast<std::size_t>(result.best_index)];
  push_metric(result, config, config.iterations + 1, "best_model",
              static_cast<double>(result.best_index));
  finalize(result, config, task, nullptr);
  return result;
}

RunResult online_self_training(TaskAdapter& task, const ExperimentConfig& config) {
  validate(config);
  RunResult result;
  const auto seeds = experiment_seeds(config);
  Rng train_rng(derive_seed(config.base_seed, kStreamTrain));
  const bool track_ema = task.metric_name() == "accuracy";

  Model model = init_model(seeds[0], model_sizes(config, task));
  EmaTracker ema = make_ema(model, config.ema_decay);
  {
    const int epochs =
        baseline_epochs(effective_labeled_ratio(config, task), config.base_epochs);
    IterationLog log;
    log.iteration = 0;
    log.seed_used = seeds[0];
    log.epochs = epochs;
    log.start_hash = parameter_hash(model);
    const PhaseStats stats = run_training_phase(model, task, nullptr,
                                                supervised_phase(config, epochs), train_rng,
                                                track_ema ? &ema : nullptr);
    log_iteration(result, config, task, model, std::move(log), stats,
                  track_ema ? &ema : nullptr);
  }

  PhaseConfig phase = iteration_phase(config, false);
  phase.epochs = config.online_epochs;
  phase.online = true;
  phase.online_threshold = config.fixed_threshold;
  phase.gamma_ramp = false;
  // Consistency-style augmentation stays on labeled data only.
  phase.augment_unlabeled = false;

  if (track_ema) ema = make_ema(model, config.ema_decay);
  IterationLog log;
  log.iteration = 1;
  log.seed_used = seeds[0];
  log.epochs = config.online_epochs;
  log.selected_count = task.unlabeled_count();
  log.start_hash = parameter_hash(model);
  const PhaseStats stats =
      run_training_phase(model, task, nullptr, phase, train_rng, track_ema ? &ema : nullptr);
  log_iteration(result, config, task, model, std::move(log), stats,
                track_ema ? &ema : nullptr);
  push_metric(result, config, 1, "online_threshold", config.fixed_threshold);
  maybe_save(config, model, 1, "");

  result.model = model;
  result.finals = {model};
  finalize(result, config, task, track_ema ? &ema : nullptr);
  return result;
}

ExperimentConfig with_variant(ExperimentConfig config, WeightVariant variant) {
  config.weights.variant = variant;
  return config;
}

RunResult dispatch_ablation(TaskAdapter& task, const ExperimentConfig& config,
                            bool pixel_task) {
  switch (config.ablation) {
    case Ablation::None:
      throw ConfigError("run_ablation: no ablation selected");
    case Ablation::OnlineSt:
      return online_self_training(task, config);
    case Ablation::Cbst: {
      // Class-balanced self-training without the dynamic loss.
      ExperimentConfig cbst = config;
      cbst.selection = SelectionKind::ClassBalancedTopFraction;
      return iterative_self_training(task, cbst, /*reinit=*/!pixel_task,
                                     /*unit_weights=*/true);
    }
    case Ablation::Dst:
      // One model fine-tuning itself with the dynamic loss.
      return iterative_self_training(task, config, /*reinit=*/false,
                                     /*unit_weights=*/false);
    case Ablation::DmtNaive:
    case Ablation::DmtFlip: {
      const auto variant = config.ablation == Ablation::DmtNaive ? WeightVariant::Naive
                                                                 : WeightVariant::Flip;
      if (pixel_task) return mutual_pixel_training(task, with_variant(config, variant));
      return iterative_self_training(task, with_variant(config, variant),
                                     /*reinit=*/true, /*unit_weights=*/false);
    }
  }
  throw ConfigError("run_ablation: unknown ablation");
}

}  // namespace

RunResult train_supervised(const TabularDataset& data, const ExperimentConfig& config) {
  ClassificationAdapter task(data);
  return supervised_run(task, config);
}

RunResult train_supervised(const GridDataset& data, const ExperimentConfig& config) {
  PixelAdapter task(data);
  return supervised_run(task, config);
}

RunResult dmt_classification(const TabularDataset& data, const ExperimentConfig& config) {
  ClassificationAdapter task(data);
  return iterative_self_training(task, config, /*reinit=*/true, /*unit_weights=*/false);
}

RunResult dmt_pixel(const GridDataset& data, const ExperimentConfig& config) {
  PixelAdapter task(data);
  return mutual_pixel_training(task, config);
}

RunResult run_ablation(const TabularDataset& data, const ExperimentConfig& config) {
  ClassificationAdapter task(data);
  return dispatch_ablation(task, config, /*pixel_task=*/false);
}

RunResult run_ablation(const GridDataset& data, const ExperimentConfig& config) {
  PixelAdapter task(data);
  return dispatch_ablation(task, config, /*pixel_task=*/true);
}

PseudoLabelSet pseudo_label_unlabeled(const Model& model, const TabularDataset& data,
                                      bool keep_probabilities) {
  const auto rows = data.rows_of(Split::Unlabeled);
  return generate_pseudo_labels(model, data.gather(rows), keep_probabilities);
}

PseudoLabelSet pseudo_label_unlabeled(const Model& model, const GridDataset& data,
                                      bool keep_probabilities) {
  PixelAdapter task(data);
  return generate_pseudo_labels(model, task.unlabeled_features(), keep_probabilities);
}

std::vector<int> sealed_unlabeled_truth(const TabularDataset& data) {
  std::vector<int> truth;
  for (std::int64_t row : data.rows_of(Split::Unlabeled)) {
    truth.push_back(data.sealed_label_of(row));
  }
  return truth;
}

std::vector<int> sealed_unlabeled_truth(const GridDataset& data) {
  std::vector<int> truth;
  for (std::int64_t image : data.images_of(Split::Unlabeled)) {
    const auto& labels = data.sealed_label_map(image);
    for (int r = 0; r < data.height(); ++r) {
      for (int c = 0; c < data.width(); ++c) truth.push_back(labels(r, c));
    }
  }
  return truth;
}

double evaluate_accuracy(const Model& model, const TabularDataset& data, Split split) {
  const auto rows = data.rows_of(split);
  if (rows.empty()) throw EmptyInputError("evaluate: split has no rows");
  const Matrix logits = forward(model, data.gather(rows));
  std::vector<int> predictions(rows.size());
  std::vector<int> truth(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    predictions[i] = argmax_class(logits.row(static_cast<Eigen::Index>(i)).transpose());
    truth[i] = data.label_of(rows[i]);
  }
  return accuracy(predictions, truth);
}

double evaluate_fine_grained(const Model& model, const TabularDataset& data, Split split) {
  const auto rows = data.rows_of(split);
  if (rows.empty()) throw EmptyInputError("evaluate: split has no rows");
  const Matrix probs = softmax_rows(forward(model, data.gather(rows)));
  std::vector<int> truth(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) truth[i] = data.label_of(rows[i]);
  return fine_grained_accuracy(probs, truth);
}

double evaluate_miou(const Model& model, const GridDataset& data, Split split) {
  const auto images = data.images_of(split);
  if (images.empty()) throw EmptyInputError("evaluate: split has no images");
  std::vector<int> predictions;
  std::vector<int> truth;
  for (std::int64_t image : images) {
    const Matrix logits = forward(model, data.window_features(image));
    const auto& labels = data.label_map(image);
    for (int r = 0; r < data.height(); ++r) {
      for (int c = 0; c < data.width(); ++c) {
        predictions.push_back(argmax_class(
            logits.row(static_cast<Eigen::Index>(r) * data.width() + c).transpose()));
        truth.push_back(labels(r, c));
      }
    }
  }
  return mean_iou(confusion_matrix(predictions, truth, data.class_count()));
}

}  // namespace dmt
