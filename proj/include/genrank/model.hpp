#pragma once

// Attention encoder-decoder shared by a next-token generation head and a
// sequence-pair ranking head, with both losses and their gradients.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "genrank/autodiff.hpp"
#include "genrank/rng.hpp"

namespace genrank::model {

using ad::Mat;
using ad::RowVec;

struct Dims {
  int vocab_size = 0;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int enc_layers = 2;
  int dec_layers = 2;
  int head_hidden = 0;  // 0 means d_model

  int ranker_hidden() const { return head_hidden > 0 ? head_hidden : d_model; }
  /// Throws DimensionMismatch for inconsistent settings.
  void validate() const;
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Which parts of the network a tensor belongs to.
enum class Group { Shared, Generation, Ranking };

struct AttnIdx {
  int wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormIdx {
  int gain, bias;
};
struct FfnIdx {
  int w1, b1, w2, b2;
};
struct EncLayerIdx {
  NormIdx norm1;
  AttnIdx self;
  NormIdx norm2;
  FfnIdx ffn;
};
struct DecLayerIdx {
  NormIdx norm1;
  AttnIdx self;
  NormIdx norm2;
  AttnIdx cross;
  NormIdx norm3;
  FfnIdx ffn;
};

/// Tensor indices of every named parameter.
struct Layout {
  int embedding = -1;
  std::vector<EncLayerIdx> encoder;
  NormIdx encoder_norm{};
  std::vector<DecLayerIdx> decoder;
  NormIdx decoder_norm{};
  int out_w = -1, out_b = -1;
  int head_w1 = -1, head_b1 = -1, head_w2 = -1, head_b2 = -1;
};

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  Group group = Group::Shared;
  bool decay = true;  // weight decay applies
};

/// Named parameter tensors laid out by Dims. Copyable value type.
class ModelParams {
 public:
  /// Zero-filled tensors (layer-norm gains set to one).
  explicit ModelParams(Dims dims);
  /// Weights uniform(-0.08, 0.08), biases zero, layer-norm gains one.
  static ModelParams initialize(Dims dims, Rng& rng);

  const Dims& dims() const { return dims_; }
  const Layout& layout() const { return layout_; }
  std::size_t tensor_count() const { return tensors_.size(); }
  const TensorInfo& info(std::size_t i) const { return info_[i]; }
  Mat& tensor(std::size_t i) { return tensors_[i]; }
  const Mat& tensor(std::size_t i) const { return tensors_[i]; }
  /// Throws std::out_of_range for unknown names.
  Mat& tensor(const std::string& name);
  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  Dims dims_;
  Layout layout_;
  std::vector<TensorInfo> info_;
  std::vector<Mat> tensors_;
};

/// Per-tensor gradients congruent with a ModelParams.
struct GradientBundle {
  std::vector<Mat> grads;

  static GradientBundle zeros_like(const ModelParams& params);
  void add_scaled(const GradientBundle& other, double scale);
  void scale(double s);
  bool all_finite() const;
  double norm() const;
};

struct LossResult {
  double loss = 0.0;
  GradientBundle grads;
};

struct GenerationExample {
  std::vector<int> source;  // problem token ids
  std::vector<int> target;  // expression token ids, no [bos]/[eos]
};

struct RankingExample {
  std::vector<int> source;
  std::vector<int> expression;  // no [bos]/[eos]
  int label = 0;                 // 1 = correct
};

/// Encoder states, one row per source token. Throws DimensionMismatch.
Mat encode(const ModelParams& params, std::span<const int> source);

/// Next-token distribution after `prefix` (which starts with [bos]).
RowVec decode_step(const ModelParams& params, const Mat& memory, std::span<const int> prefix);

/// Final decoder states for a full decoder input sequence.
Mat decoder_states(const ModelParams& params, const Mat& memory, std::span<const int> decoder_input);

/// Mean over the batch of the teacher-forced negative log-likelihood of
/// target + [eos]. Throws NonFinite.
LossResult generation_loss(const ModelParams& params, std::span<const GenerationExample> batch);

/// (Pr(0|P,S), Pr(1|P,S)) from the decoder state at the [eos] closing
/// `decoder_input` = [bos] S [eos] [pad]*.
std::array<double, 2> rank_score(const ModelParams& params, std::span<const int> source,
                                 std::span<const int> decoder_input);
/// Wraps `expression` with [bos]/[eos] and scores it.
std::array<double, 2> rank_expression(const ModelParams& params, std::span<const int> source,
                                      std::span<const int> expression);

/// Mean cross-entropy of the ranking head. Throws NonFinite.
LossResult ranking_loss(const ModelParams& params, std::span<const RankingExample> batch);

/// Incremental decoding with cached keys/values for one encoded problem.
class DecoderSession {
 public:
  struct State {
    std::vector<Mat> keys;    // per decoder layer, rows = fed tokens
    std::vector<Mat> values;
    RowVec hidden;            // final decoder state of the last fed token
    int length = 0;
  };

  DecoderSession(const ModelParams& params, Mat memory);

  State start() const;
  /// Feeds one token; updates `state.hidden`.
  void feed(State& state, int token) const;
  /// Log-probabilities of the next token given the state's last hidden.
  RowVec next_log_probs(const State& state) const;
  /// Ranking probabilities from the state's last hidden (after feeding [eos]).
  std::array<double, 2> rank(const State& state) const;

  const Mat& memory() const { return memory_; }

 private:
  const ModelParams& params_;
  Mat memory_;
  std::vector<Mat> cross_keys_;
  std::vector<Mat> cross_values_;
};

}  // namespace genrank::model
