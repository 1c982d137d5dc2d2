#pragma once

// Training procedure (fine-tune, bank construction, joint training with
// online rebuild), beam-search-then-rank inference and evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "genrank/bank.hpp"
#include "genrank/checkpoint.hpp"
#include "genrank/expr.hpp"
#include "genrank/model.hpp"
#include "genrank/optim.hpp"
#include "genrank/vocab.hpp"

namespace genrank::pipeline {

struct TrainConfig {
  int finetune_epochs = 50;
  int joint_epochs = 50;
  int beam_size = 10;
  int bank_size = 20;
  bank::Strategy strategy{bank::Source::ModelPlusTree, true};
  int disturb_count = -1;  // < 0: bank_size - beam_size
  double pos_ratio = 0.5;
  int gen_batch = 16;
  int rank_batch = 16;
  model::OptimizerConfig optimizer;
  model::Dims dims;  // vocab_size is taken from the vocabulary
  double gen_weight = 1.0;
  double rank_weight = 1.0;
  bool joint = true;  // false: two-stage ablation, head-only second phase
  int max_len = 24;
  std::uint64_t seed = 1;
  int jobs = 1;

  /// Throws ConfigError.
  void validate() const;
  bank::BankConfig bank_config() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
std::string config_hash(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Inference

struct BeamHypothesis {
  std::vector<int> tokens;  // generated ids, ending in [eos] when finished
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamOptions {
  int beam_size = 10;
  int max_len = 24;  // generated tokens, [eos] included
  /// Ids never generated; defaults to [pad], [bos], [unk].
  std::vector<int> banned{Vocab::kPad, Vocab::kBos, Vocab::kUnk};
};

/// Keeps the beam_size best expansions per step; [eos] expansions are
/// finalized. Stops once beam_size hypotheses are finalized and no live
/// hypothesis scores above the worst of them, or at max_len, where live
/// hypotheses are finalized unfinished. Returns at most beam_size
/// hypotheses by descending log-probability; ties go to the lexicographically
/// smaller id sequence.
std::vector<BeamHypothesis> beam_search(const model::ModelParams& params, std::span<const int> source,
                                        const BeamOptions& options);

struct Candidate {
  std::vector<std::string> tokens;  // without [eos]
  std::optional<Expr> expr;         // empty when unparseable
  double log_prob = 0.0;
  double score = 0.0;  // Pr(1 | P, S); 0 for unparseable candidates
  bool finished = false;
};

struct Solution {
  Expr expr;
  std::size_t chosen = 0;  // index into candidates
  std::vector<Candidate> candidates;  // beam order
};

/// Beam search, then the parseable candidate with the highest ranking score;
/// ties go to the higher log-probability, then to beam order. Throws
/// NoCandidate when nothing parses.
Solution solve(const model::ModelParams& params, const Vocab& vocab, std::span<const std::string> problem_tokens,
               int beam_size, int max_len);

/// The generator as a bank::Generator.
bank::Generator make_generator(const model::ModelParams& params, const Vocab& vocab, int max_len);

// ---------------------------------------------------------------------------
// Evaluation

struct Verdict {
  std::string id;
  int op_count = 0;
  std::string ground_truth;
  std::optional<std::string> prediction;
  std::string prediction_value;  // "undefined" / "none" when not available
  bool correct = false;          // ranked choice
  std::optional<std::string> top1;
  bool top1_correct = false;     // generator-only
  bool oracle_correct = false;   // any candidate
  std::size_t candidates = 0;
};

struct Tally {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t top1_correct = 0;
  std::size_t oracle_correct = 0;
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  double top1_accuracy() const { return n ? static_cast<double>(top1_correct) / static_cast<double>(n) : 0.0; }
  double oracle_accuracy() const { return n ? static_cast<double>(oracle_correct) / static_cast<double>(n) : 0.0; }
};

struct EvalReport {
  Tally overall;
  std::map<int, Tally> by_op_count;
  std::vector<Verdict> verdicts;

  nlohmann::json summary_json() const;
  void write_verdicts(std::ostream& out) const;
};

EvalReport evaluate_accuracy(const model::ModelParams& params, const Vocab& vocab,
                             std::span<const MappedProblem> test_set, int beam_size, int max_len, int jobs = 1);

// ---------------------------------------------------------------------------
// Training

std::vector<int> encode_tokens(const Vocab& vocab, std::span<const std::string> tokens);

/// One line of the training log.
struct EpochRecord {
  std::string phase;  // "finetune" or "joint"
  int epoch = 0;      // 1-based within the phase
  std::optional<double> gen_loss;
  std::optional<double> rank_loss;
  std::optional<std::size_t> bank_pos;
  std::optional<std::size_t> bank_neg;
  std::size_t bank_rebuilds = 0;  // cumulative online rebuilds
  std::optional<double> dev_accuracy;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called after each epoch with a resumable snapshot and the current bank.
  std::function<void(const Checkpoint&, const bank::ExpressionBank*)> on_checkpoint;
};

/// Where a resumed run picks up.
struct ResumePoint {
  Checkpoint checkpoint;
  std::optional<bank::ExpressionBank> bank;
};

class Trainer {
 public:
  Trainer(TrainConfig config, Vocab vocab, std::vector<MappedProblem> train,
          std::vector<MappedProblem> dev = {});

  /// Fresh parameters from the seed.
  model::ModelParams initial_params() const;

  /// Fine-tunes for `epochs` epochs on ground truths (epochs == 0 leaves the
  /// parameters unchanged).
  model::ModelParams finetune_generator(model::ModelParams params, const TrainHooks& hooks = {},
                                        int first_epoch = 0, const TrainerState* resume = nullptr,
                                        int stop_after = -1);

  /// Builds the initial bank (unless given) and runs the joint epochs.
  model::ModelParams joint_train(model::ModelParams params, const TrainHooks& hooks = {},
                                 std::optional<bank::ExpressionBank> bank = std::nullopt, int first_epoch = 0,
                                 const TrainerState* resume = nullptr, int stop_after = -1);

  /// Both phases, optionally from a resume point. `stop_after` > 0 ends the
  /// run after that many epochs (simulated interruption).
  model::ModelParams run(const TrainHooks& hooks = {}, std::optional<ResumePoint> resume = std::nullopt,
                         int stop_after = -1);

  bank::ExpressionBank build_bank(const model::ModelParams& params, std::uint64_t round) const;
  const bank::ExpressionBank* current_bank() const { return bank_ ? &*bank_ : nullptr; }
  std::size_t bank_rebuilds() const { return rebuilds_; }
  /// Whether the last run() reached the end of both phases.
  bool completed() const { return completed_; }

  const TrainConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  Checkpoint snapshot(const model::ModelParams& params, const std::string& phase, int epochs_done,
                      const model::AdamW* optimizer) const;
  std::vector<model::GenerationExample> generation_batch(std::span<const std::size_t> indices) const;

  TrainConfig config_;
  Vocab vocab_;
  std::vector<MappedProblem> train_;
  std::vector<MappedProblem> dev_;
  std::vector<std::vector<int>> sources_;
  std::vector<std::vector<int>> targets_;
  std::optional<bank::ExpressionBank> bank_;
  std::size_t rebuilds_ = 0;
  bool completed_ = false;
  int epochs_this_run_ = 0;
  int finetune_done_ = 0;
  int joint_done_ = 0;
};

}  // namespace genrank::pipeline
