#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "genrank/model.hpp"

namespace genrank::model {

struct OptimizerConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  double warmup_ratio = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

/// Linear warm-up to the peak rate over warmup_ratio * total_steps, then
/// linear decay to zero at total_steps.
double scheduled_rate(const OptimizerConfig& config, std::int64_t step, std::int64_t total_steps);

/// Decoupled-weight-decay Adam. Tensors flagged `decay == false` (biases,
/// norm parameters) are exempt from weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ModelParams& params, OptimizerConfig config);

  /// One update with rate `lr`. Gradients of tensors whose `frozen` flag is
  /// set are ignored and those tensors are left untouched.
  void step(ModelParams& params, const GradientBundle& grads, double lr,
            const std::vector<bool>& frozen = {});

  const OptimizerConfig& config() const { return config_; }
  std::int64_t steps_taken() const { return t_; }

  // Exposed for checkpointing.
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  OptimizerConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::int64_t t_ = 0;
};

struct JointStepOptions {
  double gen_weight = 1.0;
  double rank_weight = 1.0;
  /// Two-stage ablation: only the ranking head is trained, on J_RANK alone.
  bool head_only = false;
};

struct JointStepResult {
  double gen_loss = 0.0;
  double rank_loss = 0.0;
};

/// Frozen mask for the two-stage ablation: everything but the ranking head.
std::vector<bool> frozen_except_ranker(const ModelParams& params);

/// One AdamW update on gen_weight * J_GEN + rank_weight * J_RANK. Throws
/// NonFinite (or DimensionMismatch) before touching `params`.
JointStepResult joint_step(ModelParams& params, AdamW& optimizer, std::span<const GenerationExample> gen_batch,
                           std::span<const RankingExample> rank_batch, double lr,
                           const JointStepOptions& options = {});

}  // namespace genrank::model
