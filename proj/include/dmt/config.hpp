#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dmt/orchestration.hpp"

namespace dmt {

// Key=value settings with a fixed registry: every key is declared with a
// default and a help line, unknown keys are hard errors, and the whole map is
// validated before any compute starts.
class RunSettings {
 public:
  struct KeyInfo {
    std::string name;
    std::string default_value;
    std::string help;
  };

  RunSettings();

  static const std::vector<KeyInfo>& registry();

  /// Lines of `key = value`; '#' starts a comment.
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  /// "key=value" as passed on the command line.
  void set_assignment(const std::string& assignment);

  bool user_set(const std::string& key) const;
  const std::string& raw(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::uint64_t> get_seed_list(const std::string& key) const;

  /// One line per key: name=default and the help text.
  std::string describe() const;

 private:
  struct Entry {
    std::string value;
    bool user_set = false;
  };
  std::map<std::string, Entry> values_;
};

struct ModeSpec {
  enum class Kind { Supervised, DmtClassification, DmtSegmentation, Ablate };
  Kind kind = Kind::DmtClassification;
  Ablation ablation = Ablation::None;
};

/// supervised | dmt-cls | dmt-seg | ablate:<online_st|cbst|dst|dmt_naive|dmt_flip>
ModeSpec parse_mode(const std::string& mode);
std::string mode_name(const ModeSpec& mode);

// Settings -> ExperimentConfig. Defaults the user did not touch resolve per
// task, mirroring the hyper-parameter table structure: classification
// re-trains with a gamma ramp and cosine decay, the pixel task fine-tunes
// with a constant gamma and poly decay.
ExperimentConfig build_experiment_config(const RunSettings& settings, TaskKind task,
                                         const ModeSpec& mode, std::uint64_t base_seed);

}  // namespace dmt
