#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "dmt/config.hpp"
#include "dmt/data.hpp"
#include "dmt/metrics.hpp"
#include "dmt/orchestration.hpp"

namespace {

using namespace dmt;

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

bool is_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string header;
  std::getline(in, header);
  return header.rfind("image,row,col", 0) == 0;
}

struct LoadedData {
  std::variant<TabularDataset, GridDataset> data;

  bool grid() const { return std::holds_alternative<GridDataset>(data); }
  const TabularDataset& tabular() const { return std::get<TabularDataset>(data); }
  const GridDataset& as_grid() const { return std::get<GridDataset>(data); }
};

LoadedData load_any(const std::string& path) {
  if (is_grid_csv(path)) return {load_grid_csv(path)};
  return {load_csv(path)};
}

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
  std::string task = "toy-binary";
  std::int64_t n = 1000;
  std::uint64_t seed = 1;
  std::string out;
  double separation = 0.0;
  double noise = 0.1;
  int height = 16;
  int width = 16;
  int classes = 4;
  double imbalance = 1.0;
  double labeled_ratio = 0.125;
  std::int64_t labeled_count = -1;
  std::int64_t valtiny = 50;
  double test_fraction = 0.2;
};

void print_split_summary(const std::vector<std::pair<std::string, std::int64_t>>& counts) {
  std::cout << "split counts:";
  for (const auto& [name, count] : counts) std::cout << ' ' << name << '=' << count;
  std::cout << '\n';
}

int run_gen_data(const GenArgs& args) {
  if (args.n <= 0) throw ConfigError("gen-data: --n must be > 0");
  if (args.task == "toy-binary") {
    TabularDataset data = gen_toy_binary(args.n, args.separation, args.noise, args.seed);
    SplitSpec spec;
    spec.valtiny_size = args.valtiny;
    spec.test_fraction = args.test_fraction;
    if (args.labeled_count > 0) {
      const auto n_train = static_cast<double>(args.n) -
                           std::llround(args.test_fraction * static_cast<double>(args.n));
      spec.labeled_ratio = static_cast<double>(args.labeled_count) / n_train;
    } else {
      spec.labeled_ratio = args.labeled_ratio;
    }
    split_dataset(data, spec, derive_seed(args.seed, 0xDA7A));
    save_csv(data, args.out);
    std::cout << "wrote " << args.out << ": " << data.row_count() << " rows, "
              << data.class_count() << " classes\n";
    print_split_summary({{"labeled", (std::int64_t)data.rows_of(Split::Labeled).size()},
                         {"unlabeled", (std::int64_t)data.rows_of(Split::Unlabeled).size()},
                         {"valtiny", (std::int64_t)data.rows_of(Split::Valtiny).size()},
                         {"test", (std::int64_t)data.rows_of(Split::Test).size()}});
    return 0;
  }
  if (args.task == "grid-seg") {
    GridDataset data =
        gen_grid_seg(args.n, args.height, args.width, args.classes, args.imbalance, args.seed);
    GridSplitSpec spec;
    spec.labeled_ratio = args.labeled_ratio;
    spec.valtiny_images = args.valtiny;
    spec.test_fraction = args.test_fraction;
    if (args.labeled_count > 0) {
      const auto n_train = static_cast<double>(args.n) -
                           std::llround(args.test_fraction * static_cast<double>(args.n));
      spec.labeled_ratio = static_cast<double>(args.labeled_count) / n_train;
    }
    split_grid(data, spec, derive_seed(args.seed, 0xDA7A));
    save_grid_csv(data, args.out);
    std::cout << "wrote " << args.out << ": " << data.image_count() << " images of "
              << data.height() << 'x' << data.width() << ", " << data.class_count()
              << " classes\n";
    print_split_summary({{"labeled", (std::int64_t)data.images_of(Split::Labeled).size()},
                         {"unlabeled", (std::int64_t)data.images_of(Split::Unlabeled).size()},
                         {"valtiny", (std::int64_t)data.images_of(Split::Valtiny).size()},
                         {"test", (std::int64_t)data.images_of(Split::Test).size()}});
    return 0;
  }
  throw ConfigError("gen-data: unknown task '" + args.task + "' (toy-binary | grid-seg)");
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data_path;
  std::string mode;
  std::string config_path;
  std::vector<std::string> assignments;
  std::uint64_t seed = 1;
  std::optional<double> gamma;
  std::optional<double> labeled_ratio;
  std::optional<int> base_epochs;
  std::string out = "metrics.csv";
  std::string checkpoints;
  int jobs = 1;
  std::vector<std::uint64_t> seeds;
};

RunResult execute_mode(const LoadedData& data, const ModeSpec& mode,
                       const ExperimentConfig& config) {
  switch (mode.kind) {
    case ModeSpec::Kind::Supervised:
      return data.grid() ? train_supervised(data.as_grid(), config)
                         : train_supervised(data.tabular(), config);
    case ModeSpec::Kind::DmtClassification:
      if (data.grid()) throw ConfigError("dmt-cls needs a tabular dataset");
      return dmt_classification(data.tabular(), config);
    case ModeSpec::Kind::DmtSegmentation:
      if (!data.grid()) throw ConfigError("dmt-seg needs a grid dataset");
      return dmt_pixel(data.as_grid(), config);
    case ModeSpec::Kind::Ablate:
      return data.grid() ? run_ablation(data.as_grid(), config)
                         : run_ablation(data.tabular(), config);
  }
  throw ConfigError("train: bad mode");
}

std::string seed_suffixed(const std::string& path, std::uint64_t seed) {
  const std::filesystem::path p(path);
  std::filesystem::path out = p.parent_path();
  out /= p.stem().string() + ".seed" + std::to_string(seed) + p.extension().string();
  return out.string();
}

int run_train(const TrainArgs& args) {
  RunSettings settings;
  if (!args.config_path.empty()) settings.load_file(args.config_path);
  for (const std::string& assignment : args.assignments) {
    settings.set_assignment(assignment);
  }
  if (!args.mode.empty()) settings.set("train.mode", args.mode);
  if (args.gamma) {
    settings.set("loss.gamma1", std::to_string(*args.gamma));
    settings.set("loss.gamma2", std::to_string(*args.gamma));
  }

  const ModeSpec mode = parse_mode(settings.get_string("train.mode"));
  const LoadedData data = load_any(args.data_path);
  const TaskKind task = data.grid() ? TaskKind::Pixel : TaskKind::Classification;

  auto make_config = [&](std::uint64_t seed) {
    ExperimentConfig config = build_experiment_config(settings, task, mode, seed);
    if (args.labeled_ratio) config.labeled_ratio_override = *args.labeled_ratio;
    if (args.base_epochs) config.base_epochs = *args.base_epochs;
    if (!args.checkpoints.empty()) {
      config.save_checkpoints = true;
      config.checkpoint_dir = args.checkpoints;
    }
    return config;
  };

  std::vector<std::uint64_t> seeds = args.seeds;
  if (seeds.empty()) seeds.push_back(args.seed);
  if (args.jobs < 1) throw ConfigError("train: --jobs must be >= 1");

  if (seeds.size() == 1) {
    const ExperimentConfig config = make_config(seeds[0]);
    const RunResult result = execute_mode(data, mode, config);
    write_metrics(result.metrics, args.out);
    for (const IterationLog& log : result.logs) {
      std::cout << "iteration " << log.iteration
                << (log.role.empty() ? "" : " (" + log.role + ")") << ": epochs "
                << log.epochs << ", selected " << log.selected_count << ", valtiny "
                << format_fixed6(log.valtiny_metric) << ", test "
                << format_fixed6(log.test_metric) << '\n';
    }
    std::cout << mode_name(mode) << " seed " << seeds[0] << ": test metric "
              << format_fixed6(result.test_metric) << "; metrics -> " << args.out << '\n';
    return 0;
  }

  // Independent seeds fan out as worker runs with disjoint output files.
  std::vector<std::thread> workers;
  std::vector<std::string> failures(seeds.size());
  std::size_t next = 0;
  std::mutex mutex;
  const auto worker = [&]() {
    for (;;) {
      std::size_t index;
      {
        std::lock_guard<std::mutex> lock(mutex);
        if (next >= seeds.size()) return;
        index = next++;
      }
      try {
        ExperimentConfig config = make_config(seeds[index]);
        if (config.save_checkpoints) {
          config.checkpoint_dir += ".seed" + std::to_string(seeds[index]);
        }
        const RunResult result = execute_mode(data, mode, config);
        write_metrics(result.metrics, seed_suffixed(args.out, seeds[index]));
      } catch (const std::exception& error) {
        failures[index] = error.what();
      }
    }
  };
  const int thread_count = std::min<int>(args.jobs, static_cast<int>(seeds.size()));
  for (int i = 0; i < thread_count; ++i) workers.emplace_back(worker);
  for (auto& thread : workers) thread.join();
  bool failed = false;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!failures[i].empty()) {
      std::cerr << "seed " << seeds[i] << " failed: " << failures[i] << '\n';
      failed = true;
    } else {
      std::cout << "seed " << seeds[i] << " -> " << seed_suffixed(args.out, seeds[i]) << '\n';
    }
  }
  return failed ? kExitRuntime : 0;
}

// ---------------------------------------------------------------------------
// analyze-pseudo

struct AnalyzeArgs {
  std::string model_path;
  std::string data_path;
  std::string out = "noise.csv";
  std::vector<double> fractions = kDefaultNoiseFractions;
};

int run_analyze(const AnalyzeArgs& args) {
  const Model model = load_model(args.model_path);
  const LoadedData data = load_any(args.data_path);
  PseudoLabelSet set;
  std::vector<int> truth;
  if (data.grid()) {
    set = pseudo_label_unlabeled(model, data.as_grid());
    truth = sealed_unlabeled_truth(data.as_grid());
  } else {
    set = pseudo_label_unlabeled(model, data.tabular());
    truth = sealed_unlabeled_truth(data.tabular());
  }
  const NoiseReport report = noise_report(set.records, truth, args.fractions);
  write_noise_report(report, args.out);
  std::cout << "overall error rate " << format_fixed6(report.overall_error_rate)
            << " over " << set.records.size() << " units; report -> " << args.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::string split = "test";
};

int run_eval(const EvalArgs& args) {
  const Model model = load_model(args.model_path);
  const LoadedData data = load_any(args.data_path);
  const Split split = parse_split(args.split);
  if (data.grid()) {
    std::cout << "miou " << format_fixed6(evaluate_miou(model, data.as_grid(), split)) << '\n';
  } else {
    std::cout << "accuracy "
              << format_fixed6(evaluate_accuracy(model, data.tabular(), split)) << '\n';
    std::cout << "fine_grained_accuracy "
              << format_fixed6(evaluate_fine_grained(model, data.tabular(), split)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmt-lab: dynamic mutual training on desk-scale synthetic tasks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset CSV");
  gen_cmd->add_option("--task", gen.task, "toy-binary | grid-seg")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "samples (toy) or images (grid)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output CSV path")->required();
  gen_cmd->add_option("--separation", gen.separation, "toy: vertical gap between arcs")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "toy: Gaussian jitter sigma")->capture_default_str();
  gen_cmd->add_option("--height", gen.height, "grid: image height")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "grid: image width")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "grid: class count")->capture_default_str();
  gen_cmd->add_option("--imbalance", gen.imbalance, "grid: stripe width factor per class")
      ->capture_default_str();
  gen_cmd->add_option("--labeled-ratio", gen.labeled_ratio, "labeled share of the train pool")
      ->capture_default_str();
  gen_cmd->add_option("--labeled-count", gen.labeled_count,
                      "labeled units, overrides --labeled-ratio");
  gen_cmd->add_option("--valtiny", gen.valtiny, "validation units held out of training")
      ->capture_default_str();
  gen_cmd->add_option("--test-fraction", gen.test_fraction, "held-out test share")
      ->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run a training mode against a dataset");
  train_cmd->add_option("--data", train.data_path, "dataset CSV")->required();
  train_cmd->add_option("--mode", train.mode,
                        "supervised | dmt-cls | dmt-seg | ablate:<tag>");
  train_cmd->add_option("--config", train.config_path, "key=value config file");
  train_cmd->add_option("--set", train.assignments, "config override key=value (repeatable)");
  train_cmd->add_option("--seed", train.seed, "base seed")->capture_default_str();
  train_cmd->add_option("--seeds", train.seeds, "explicit seed list for fan-out runs")
      ->delimiter(',');
  train_cmd->add_option("--gamma", train.gamma, "sets loss.gamma1 and loss.gamma2");
  train_cmd->add_option("--labeled-ratio", train.labeled_ratio,
                        "ratio driving the supervised epoch rule (default: derived)");
  train_cmd->add_option("--base-epochs", train.base_epochs, "overrides train.base_epochs");
  train_cmd->add_option("--out", train.out, "metrics CSV path")->capture_default_str();
  train_cmd->add_option("--save-checkpoints", train.checkpoints, "checkpoint directory");
  train_cmd->add_option("--jobs", train.jobs, "parallel workers over --seeds")
      ->capture_default_str();
  train_cmd->footer("config keys (defaults marked <auto> resolve per task):\n" +
                    RunSettings().describe());

  AnalyzeArgs analyze;
  auto* analyze_cmd =
      app.add_subcommand("analyze-pseudo", "confidence-stratified pseudo-label error report");
  analyze_cmd->add_option("--model", analyze.model_path, "model checkpoint")->required();
  analyze_cmd->add_option("--data", analyze.data_path, "dataset CSV with sealed ground truth")
      ->required();
  analyze_cmd->add_option("--out", analyze.out, "noise report CSV path")->capture_default_str();
  analyze_cmd->add_option("--fractions", analyze.fractions, "confidence strata")
      ->delimiter(',')
      ->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_cmd->add_option("--model", eval.model_path, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval.data_path, "dataset CSV")->required();
  eval_cmd->add_option("--split", eval.split, "labeled | unlabeled | valtiny | test")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(train);
    if (*analyze_cmd) return run_analyze(analyze);
    if (*eval_cmd) return run_eval(eval);
  } catch (const ConfigError& error) {
    std::cerr << "config error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& error) {
    std::cerr << "parse error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
