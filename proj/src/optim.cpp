#include "genrank/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "genrank/error.hpp"

namespace genrank::model {

double scheduled_rate(const OptimizerConfig& config, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return config.learning_rate;
  const auto warmup = static_cast<std::int64_t>(std::ceil(config.warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup) {
    return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const double remaining = static_cast<double>(total_steps - step) / static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup));
  return config.learning_rate * std::clamp(remaining, 0.0, 1.0);
}

AdamW::AdamW(const ModelParams& params, OptimizerConfig config) : config_(config) {
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    m_.push_back(Mat::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
    v_.push_back(Mat::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
  }
}

void AdamW::step(ModelParams& params, const GradientBundle& grads, double lr, const std::vector<bool>& frozen) {
  ++t_;
  double clip = 1.0;
  if (config_.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < grads.grads.size(); ++i) {
      if (frozen.empty() || !frozen[i]) sq += grads.grads[i].squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.max_grad_norm) clip = config_.max_grad_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    Mat& p = params.tensor(i);
    if (params.info(i).decay && config_.weight_decay > 0.0) p *= (1.0 - lr * config_.weight_decay);
    const Mat g = grads.grads[i] * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.epsilon);
  }
}

std::vector<bool> frozen_except_ranker(const ModelParams& params) {
  std::vector<bool> frozen(params.tensor_count());
  for (std::size_t i = 0; i < frozen.size(); ++i) frozen[i] = params.info(i).group != Group::Ranking;
  return frozen;
}

JointStepResult joint_step(ModelParams& params, AdamW& optimizer, std::span<const GenerationExample> gen_batch,
                           std::span<const RankingExample> rank_batch, double lr,
                           const JointStepOptions& options) {
  if (rank_batch.empty() || (gen_batch.empty() && !options.head_only)) {
    throw std::invalid_argument("joint_step needs non-empty batches");
  }
  JointStepResult result;
  GradientBundle total = GradientBundle::zeros_like(params);
  if (!options.head_only) {
    LossResult gen = generation_loss(params, gen_batch);
    result.gen_loss = gen.loss;
    total.add_scaled(gen.grads, options.gen_weight);
  }
  LossResult rank = ranking_loss(params, rank_batch);
  result.rank_loss = rank.loss;
  total.add_scaled(rank.grads, options.rank_weight);
  if (!total.all_finite()) throw NonFinite("joint gradient is not finite");
  if (options.head_only) {
    optimizer.step(params, total, lr, frozen_except_ranker(params));
  } else {
    optimizer.step(params, total, lr);
  }
  return result;
}

}  // namespace genrank::model
