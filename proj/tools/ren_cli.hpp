#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ren/data.hpp"
#include "ren/eval.hpp"
#include "ren/nn.hpp"
#include "ren/train.hpp"

namespace ren::cli {

/// Everything a training run needs, as one flat key = value set.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string manifest;
  /// Evaluation set for ablation rows; empty means the training manifest.
  std::string eval_manifest;
  std::string out;
  /// Save an extra checkpoint every N epochs; 0 disables.
  int checkpoint_every = 0;

  static const std::vector<std::string>& keys();
  std::map<std::string, std::string> to_map() const;
  /// Defaults overridden by `kv`. Unknown keys throw InputError.
  static RunConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Defaults, then the file (if any), then `overrides`.
RunConfig resolve_run_config(const std::filesystem::path& file, const std::map<std::string, std::string>& overrides);

struct TrainOutcome {
  Model<float> model;
  std::vector<LossRecord> history;
};

/// Loads the manifest, trains, and writes config.txt, loss.csv and model.renc
/// under rc.out.
TrainOutcome run_training(const RunConfig& rc, std::ostream& log);

struct AblationRung {
  std::string name;
  /// Config key changed from the previous rung; empty for the first.
  std::string changed_key;
  RunConfig config;
};

/// The six incremental configurations, shallow L2 baseline first.
std::vector<AblationRung> ablation_ladder(const RunConfig& base, const std::string& preset = "table1");

/// Poses read from a text file with one line of 3J numbers per frame.
std::vector<Pose> read_predictions(const std::filesystem::path& path);
std::string format_pose_line(const Pose& pose);

/// Runs the `ren` command line. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage or input error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ren::cli
