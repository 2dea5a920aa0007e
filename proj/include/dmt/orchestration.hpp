#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmt/data.hpp"
#include "dmt/losses.hpp"
#include "dmt/metrics.hpp"
#include "dmt/nn.hpp"
#include "dmt/pseudo_label.hpp"
#include "dmt/schedules.hpp"

namespace dmt {

enum class TaskKind { Classification, Pixel };
enum class InitMode { DifferentSeeds, DifferenceMaximizedSplit };
enum class Ablation { None, OnlineSt, Cbst, Dst, DmtNaive, DmtFlip };

// Eq. 3/4 divide by the full batch size N by default, zero-weight samples
// included; Selected divides each part by its own row count instead.
enum class NormalizeBy { Batch, Selected };

struct ExperimentConfig {
  TaskKind task = TaskKind::Classification;
  std::string run_id = "run";

  int iterations = 5;
  std::vector<double> alpha_schedule = {0.2, 0.4, 0.6, 0.8, 1.0};

  DynamicWeightConfig weights{4.0, 4.0, WeightVariant::Standard};
  bool gamma_ramp = true;  // high-early sigmoid ramp over each iteration
  bool gamma_ramp_inverted = false;

  SelectionKind selection = SelectionKind::GlobalTopFraction;
  double fixed_threshold = 0.9;  // FixedThreshold selection and online ST
  int online_epochs = 20;

  int batch_size = 8;
  BatchRatio batch_ratio{7};
  LrSchedule::Mode lr_mode = LrSchedule::Mode::Cosine;
  double learning_rate = 0.1;
  double baseline_learning_rate = 0.2;  // supervised phases run hotter
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs_per_iteration = 30;
  int base_epochs = 30;  // N in the round(sqrt(1/ratio) * N) baseline rule
  NormalizeBy normalize_by = NormalizeBy::Batch;

  std::vector<int> hidden_sizes = {16, 16};
  std::uint64_t base_seed = 1;
  // Classification re-inits one model per iteration: base + one seed each.
  // Empty derives them from base_seed.
  std::vector<std::uint64_t> seeds;
  // Pixel mutual training initializes two models; empty derives from base.
  std::vector<std::uint64_t> role_seeds;

  InitMode init_mode = InitMode::DifferentSeeds;
  double subset_fraction = 0.5;  // difference-maximized subset size / |S_l|
  bool self_supervise = false;   // literal Alg. 2 reading: each model labels itself
  Ablation ablation = Ablation::None;

  AugmentSpec augment;
  bool mixup = false;

  double ema_decay = 0.999;
  bool ema_eval = false;  // report the EMA network instead of the raw one

  // Synthetic pseudo-label corruption: flips this fraction of the selected
  // records, either at the listed iterations or at every iteration.
  double noise_rate = 0.0;
  std::vector<int> noise_iterations;

  // Appendix-style epoch rule input; negative derives |labeled| / |train|.
  double labeled_ratio_override = -1.0;

  bool save_checkpoints = false;
  std::string checkpoint_dir;
};

void validate(const ExperimentConfig& config);

/// Base seed plus one fresh seed per iteration, pairwise distinct.
std::vector<std::uint64_t> experiment_seeds(const ExperimentConfig& config);

/// round-half-up(sqrt(1/ratio) * base_epochs).
int baseline_epochs(double labeled_ratio, int base_epochs);

struct IterationLog {
  int iteration = 0;
  std::string role;  // "a"/"b" during mutual training, empty otherwise
  std::uint64_t seed_used = 0;
  std::int64_t selected_count = 0;
  double mean_dynamic_weight = 0.0;
  double valtiny_metric = 0.0;
  double test_metric = 0.0;
  std::vector<LossBreakdown> epoch_losses;
  std::uint64_t start_hash = 0;  // trainee parameters entering the iteration
  std::uint64_t end_hash = 0;
  int epochs = 0;
};

struct RunResult {
  Model model;                 // the model the procedure returns
  std::vector<Model> finals;   // per-lineage final models (two for mutual runs)
  int best_index = 0;
  std::vector<IterationLog> logs;
  std::vector<MetricRow> metrics;
  double valtiny_metric = 0.0;
  double test_metric = 0.0;
};

RunResult train_supervised(const TabularDataset& data, const ExperimentConfig& config);
RunResult train_supervised(const GridDataset& data, const ExperimentConfig& config);

/// Iterative DMT with per-iteration re-initialization and global top-fraction
/// selection; returns the last iteration's model.
RunResult dmt_classification(const TabularDataset& data, const ExperimentConfig& config);

/// Mutual fine-tuning of two models with class-balanced selection; returns
/// the pair plus the valtiny-best of the two (ties go to model A).
RunResult dmt_pixel(const GridDataset& data, const ExperimentConfig& config);

RunResult run_ablation(const TabularDataset& data, const ExperimentConfig& config);
RunResult run_ablation(const GridDataset& data, const ExperimentConfig& config);

/// Flips round(rate * n) of the records to a different class, in shuffle order.
void inject_label_noise(std::vector<PseudoLabelRecord>& records, double rate,
                        int class_count, Rng& rng);

/// Pseudo labels for every unlabeled unit of the dataset, in unit order.
PseudoLabelSet pseudo_label_unlabeled(const Model& model, const TabularDataset& data,
                                      bool keep_probabilities = false);
PseudoLabelSet pseudo_label_unlabeled(const Model& model, const GridDataset& data,
                                      bool keep_probabilities = false);

/// Sealed ground truth aligned with pseudo_label_unlabeled's unit ids.
std::vector<int> sealed_unlabeled_truth(const TabularDataset& data);
std::vector<int> sealed_unlabeled_truth(const GridDataset& data);

double evaluate_accuracy(const Model& model, const TabularDataset& data, Split split);
double evaluate_fine_grained(const Model& model, const TabularDataset& data, Split split);
double evaluate_miou(const Model& model, const GridDataset& data, Split split);

}  // namespace dmt
