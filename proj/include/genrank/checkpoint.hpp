#pragma once

// Versioned binary checkpoint: a JSON header (dims, vocabulary, config and
// tensor shapes) followed by raw little-endian float64 tensor data.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "genrank/model.hpp"
#include "genrank/vocab.hpp"

namespace genrank {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Optimizer and loop position, present in checkpoints written mid-training.
struct TrainerState {
  std::string phase;  // "finetune", "joint" or "done"
  int epochs_done = 0;
  std::int64_t optimizer_steps = 0;
  std::vector<model::Mat> first_moments;
  std::vector<model::Mat> second_moments;
};

struct Checkpoint {
  Vocab vocab;
  model::ModelParams params;
  nlohmann::json config;  // the run configuration, informational
  std::string config_hash;
  std::optional<TrainerState> trainer;
};

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws CheckpointError on a bad file, a shape that does not match the
/// stored dims, or (when given) a different expected vocabulary.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocab* expected_vocab = nullptr);

nlohmann::json dims_to_json(const model::Dims& dims);
model::Dims dims_from_json(const nlohmann::json& j);

}  // namespace genrank
