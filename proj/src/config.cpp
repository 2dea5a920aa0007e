#include "dmt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dmt {

namespace {

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

const std::vector<RunSettings::KeyInfo>& RunSettings::registry() {
  static const std::vector<KeyInfo> keys = {
      {"run.id", "", "run identifier in the metrics CSV (default: the mode name)"},
      {"train.mode", "dmt-cls",
       "supervised | dmt-cls | dmt-seg | ablate:<online_st|cbst|dst|dmt_naive|dmt_flip>"},
      {"train.iterations", "5", "bootstrap iterations"},
      {"train.alpha", "0.2,0.4,0.6,0.8,1.0",
       "selected fraction per iteration, nondecreasing, last must be 1.0"},
      {"train.epochs_per_iteration", "", "epochs per iteration (default 30 cls / 5 pixel)"},
      {"train.base_epochs", "30", "N in the round(sqrt(1/ratio)*N) supervised epoch rule"},
      {"train.online_epochs", "20", "epochs of the online self-training ablation"},
      {"train.batch_size", "", "units per batch (default 8 cls / 64 pixel)"},
      {"train.batch_ratio", "7", "unlabeled units per labeled unit in a batch"},
      {"train.learning_rate", "0.1", "peak learning rate of iteration training"},
      {"train.baseline_learning_rate", "", "supervised-phase learning rate (default 2x)"},
      {"train.lr_schedule", "", "constant | poly | cosine (default cosine cls / poly pixel)"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.weight_decay", "", "L2 decay (default 5e-4 cls / 1e-4 pixel)"},
      {"train.seeds", "", "base + one seed per iteration (default: derived from --seed)"},
      {"model.hidden", "", "hidden layer sizes (default 16,16 cls / 32 pixel)"},
      {"loss.gamma1", "", "agreement exponent (default 4 cls / 5 pixel)"},
      {"loss.gamma2", "", "disagreement exponent (default: gamma1)"},
      {"loss.variant", "standard", "standard | naive | flip"},
      {"loss.normalize_by", "batch", "batch | selected -- denominator of the two loss terms"},
      {"gamma.mode", "", "ramp | constant (default ramp cls / constant pixel)"},
      {"gamma.ramp_sign", "positive", "positive: high-early exp(+5(1-t/T)^2); negative flips it"},
      {"select.policy", "",
       "fixed-threshold | global-top | class-balanced | cbst-renormalized "
       "(default global-top cls / class-balanced pixel)"},
      {"select.threshold", "0.9", "confidence threshold of fixed-threshold selection"},
      {"init.mode", "different_seeds", "different_seeds | difference_maximized_split"},
      {"init.role_seeds", "", "two seeds for the mutual pair (default: derived)"},
      {"sampling.subset_fraction", "0.5", "difference-maximized subset size / |labeled|"},
      {"orchestrate.self_supervise", "false",
       "pixel task: each model labels itself instead of cross-supervision"},
      {"mixup.enabled", "false", "interpolate inputs and dynamic weights"},
      {"augment.jitter_sigma", "0.1", "Gaussian feature jitter (classification)"},
      {"augment.flip_probability", "0.5", "horizontal flip chance per image (pixel)"},
      {"ema.decay", "0.999", "parameter EMA decay (classification)"},
      {"ema.eval", "false", "report the EMA network instead of the raw one"},
      {"noise.rate", "0", "fraction of selected pseudo labels to corrupt"},
      {"noise.iterations", "", "iterations to corrupt (empty = all, when rate > 0)"},
  };
  return keys;
}

RunSettings::RunSettings() {
  for (const KeyInfo& key : registry()) {
    values_[key.name] = Entry{key.default_value, false};
  }
}

void RunSettings::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunSettings::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = Entry{value, true};
}

void RunSettings::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool RunSettings::user_set(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.user_set;
}

const std::string& RunSettings::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.value;
}

std::string RunSettings::get_string(const std::string& key) const { return raw(key); }

bool RunSettings::get_bool(const std::string& key) const {
  const std::string& value = raw(key);
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

int RunSettings::get_int(const std::string& key) const {
  const std::string& value = raw(key);
  int out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

double RunSettings::get_double(const std::string& key) const {
  const std::string& value = raw(key);
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

std::vector<int> RunSettings::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& item : split_list(raw(key))) {
    int v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw ConfigError(key + ": bad integer '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> RunSettings::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(raw(key))) {
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw ConfigError(key + ": bad number '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> RunSettings::get_seed_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(raw(key))) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw ConfigError(key + ": bad seed '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string RunSettings::describe() const {
  std::string out;
  for (const KeyInfo& key : registry()) {
    out += "  ";
    out += key.name;
    out += '=';
    out += key.default_value.empty() ? "<auto>" : key.default_value;
    out += "\n      ";
    out += key.help;
    out += '\n';
  }
  return out;
}

ModeSpec parse_mode(const std::string& mode) {
  if (mode == "supervised") return {ModeSpec::Kind::Supervised, Ablation::None};
  if (mode == "dmt-cls") return {ModeSpec::Kind::DmtClassification, Ablation::None};
  if (mode == "dmt-seg") return {ModeSpec::Kind::DmtSegmentation, Ablation::None};
  if (mode.rfind("ablate:", 0) == 0) {
    const std::string tag = mode.substr(7);
    Ablation ablation;
    if (tag == "online_st") ablation = Ablation::OnlineSt;
    else if (tag == "cbst") ablation = Ablation::Cbst;
    else if (tag == "dst") ablation = Ablation::Dst;
    else if (tag == "dmt_naive") ablation = Ablation::DmtNaive;
    else if (tag == "dmt_flip") ablation = Ablation::DmtFlip;
    else throw ConfigError("unknown ablation tag '" + tag + "'");
    return {ModeSpec::Kind::Ablate, ablation};
  }
  throw ConfigError("unknown mode '" + mode + "'");
}

std::string mode_name(const ModeSpec& mode) {
  switch (mode.kind) {
    case ModeSpec::Kind::Supervised: return "supervised";
    case ModeSpec::Kind::DmtClassification: return "dmt-cls";
    case ModeSpec::Kind::DmtSegmentation: return "dmt-seg";
    case ModeSpec::Kind::Ablate:
      switch (mode.ablation) {
        case Ablation::OnlineSt: return "ablate:online_st";
        case Ablation::Cbst: return "ablate:cbst";
        case Ablation::Dst: return "ablate:dst";
        case Ablation::DmtNaive: return "ablate:dmt_naive";
        case Ablation::DmtFlip: return "ablate:dmt_flip";
        case Ablation::None: break;
      }
      break;
  }
  throw ConfigError("mode_name: bad mode");
}

namespace {

LrSchedule::Mode parse_lr_mode(const std::string& name) {
  if (name == "constant") return LrSchedule::Mode::Constant;
  if (name == "poly") return LrSchedule::Mode::Poly;
  if (name == "cosine") return LrSchedule::Mode::Cosine;
  throw ConfigError("train.lr_schedule: unknown schedule '" + name + "'");
}

SelectionKind parse_selection(const std::string& name) {
  if (name == "fixed-threshold") return SelectionKind::FixedThreshold;
  if (name == "global-top") return SelectionKind::GlobalTopFraction;
  if (name == "class-balanced") return SelectionKind::ClassBalancedTopFraction;
  if (name == "cbst-renormalized") return SelectionKind::CbstRenormalized;
  throw ConfigError("select.policy: unknown policy '" + name + "'");
}

WeightVariant parse_variant(const std::string& name) {
  if (name == "standard") return WeightVariant::Standard;
  if (name == "naive") return WeightVariant::Naive;
  if (name == "flip") return WeightVariant::Flip;
  throw ConfigError("loss.variant: unknown variant '" + name + "'");
}

}  // namespace

ExperimentConfig build_experiment_config(const RunSettings& settings, TaskKind task,
                                         const ModeSpec& mode, std::uint64_t base_seed) {
  const bool pixel = task == TaskKind::Pixel;
  ExperimentConfig config;
  config.task = task;
  config.run_id = settings.user_set("run.id") ? settings.get_string("run.id")
                                              : mode_name(mode);
  config.base_seed = base_seed;
  config.iterations = settings.get_int("train.iterations");
  config.alpha_schedule = settings.get_double_list("train.alpha");

  config.weights.gamma1 = settings.user_set("loss.gamma1")
                              ? settings.get_double("loss.gamma1")
                              : (pixel ? 5.0 : 4.0);
  config.weights.gamma2 = settings.user_set("loss.gamma2")
                              ? settings.get_double("loss.gamma2")
                              : config.weights.gamma1;
  config.weights.variant = parse_variant(settings.get_string("loss.variant"));

  config.gamma_ramp = settings.user_set("gamma.mode")
                          ? settings.get_string("gamma.mode") == "ramp"
                          : !pixel;
  if (settings.user_set("gamma.mode")) {
    const std::string value = settings.get_string("gamma.mode");
    if (value != "ramp" && value != "constant") {
      throw ConfigError("gamma.mode: expected ramp or constant");
    }
  }
  const std::string ramp_sign = settings.get_string("gamma.ramp_sign");
  if (ramp_sign != "positive" && ramp_sign != "negative") {
    throw ConfigError("gamma.ramp_sign: expected positive or negative");
  }
  config.gamma_ramp_inverted = ramp_sign == "negative";

  config.selection = settings.user_set("select.policy")
                         ? parse_selection(settings.get_string("select.policy"))
                         : (pixel ? SelectionKind::ClassBalancedTopFraction
                                  : SelectionKind::GlobalTopFraction);
  config.fixed_threshold = settings.get_double("select.threshold");
  config.online_epochs = settings.get_int("train.online_epochs");

  config.batch_size = settings.user_set("train.batch_size")
                          ? settings.get_int("train.batch_size")
                          : (pixel ? 64 : 8);
  config.batch_ratio.unlabeled_per_labeled = settings.get_int("train.batch_ratio");
  config.lr_mode = settings.user_set("train.lr_schedule")
                       ? parse_lr_mode(settings.get_string("train.lr_schedule"))
                       : (pixel ? LrSchedule::Mode::Poly : LrSchedule::Mode::Cosine);
  config.learning_rate = settings.get_double("train.learning_rate");
  config.baseline_learning_rate =
      settings.user_set("train.baseline_learning_rate")
          ? settings.get_double("train.baseline_learning_rate")
          : 2.0 * config.learning_rate;
  config.momentum = settings.get_double("train.momentum");
  config.weight_decay = settings.user_set("train.weight_decay")
                            ? settings.get_double("train.weight_decay")
                            : (pixel ? 1e-4 : 5e-4);
  config.epochs_per_iteration = settings.user_set("train.epochs_per_iteration")
                                    ? settings.get_int("train.epochs_per_iteration")
                                    : (pixel ? 5 : 30);
  config.base_epochs = settings.get_int("train.base_epochs");
  const std::string normalize = settings.get_string("loss.normalize_by");
  if (normalize == "batch") config.normalize_by = NormalizeBy::Batch;
  else if (normalize == "selected") config.normalize_by = NormalizeBy::Selected;
  else throw ConfigError("loss.normalize_by: expected batch or selected");

  config.hidden_sizes = settings.user_set("model.hidden")
                            ? settings.get_int_list("model.hidden")
                            : (pixel ? std::vector<int>{32} : std::vector<int>{16, 16});
  config.seeds = settings.get_seed_list("train.seeds");
  config.role_seeds = settings.get_seed_list("init.role_seeds");

  const std::string init = settings.get_string("init.mode");
  if (init == "different_seeds") config.init_mode = InitMode::DifferentSeeds;
  else if (init == "difference_maximized_split") {
    config.init_mode = InitMode::DifferenceMaximizedSplit;
  } else {
    throw ConfigError("init.mode: expected different_seeds or difference_maximized_split");
  }
  config.subset_fraction = settings.get_double("sampling.subset_fraction");
  config.self_supervise = settings.get_bool("orchestrate.self_supervise");
  config.ablation = mode.ablation;

  config.augment.feature_jitter_sigma = settings.get_double("augment.jitter_sigma");
  config.augment.flip_probability = settings.get_double("augment.flip_probability");
  config.mixup = settings.get_bool("mixup.enabled");

  config.ema_decay = settings.get_double("ema.decay");
  config.ema_eval = settings.get_bool("ema.eval");

  config.noise_rate = settings.get_double("noise.rate");
  config.noise_iterations = settings.get_int_list("noise.iterations");

  validate(config);
  return config;
}

}  // namespace dmt
