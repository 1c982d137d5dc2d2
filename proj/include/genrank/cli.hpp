#pragma once

// The genrank command line: synth, train, solve, eval, bank, disturb.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "genrank/pipeline.hpp"

namespace genrank::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Training run settings: every TrainConfig field plus data and output paths.
struct RunConfig {
  pipeline::TrainConfig train;
  std::filesystem::path train_path;
  std::filesystem::path dev_path;  // optional
  std::filesystem::path out_dir = "run";
  int fold = 0;
  int folds = 0;  // >= 2 holds out fold `fold` of the training file as dev

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Unknown fields are rejected; missing fields keep `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Files written into the output directory of `train`.
namespace files {
inline constexpr const char* kConfig = "run.json";
inline constexpr const char* kLog = "train_log.jsonl";
inline constexpr const char* kCheckpoint = "checkpoint.bin";  // latest, resumable
inline constexpr const char* kBank = "bank.jsonl";            // bank of the latest checkpoint
inline constexpr const char* kModel = "model.bin";            // final parameters
}  // namespace files

/// Runs one command line. Never throws; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace genrank::cli
