#include "genrank/model.hpp"

#include <cmath>
#include <stdexcept>

#include "genrank/error.hpp"
#include "genrank/vocab.hpp"

namespace genrank::model {

void Dims::validate() const {
  if (vocab_size < 1 || d_model < 1 || heads < 1 || d_ff < 1 || enc_layers < 1 || dec_layers < 1 ||
      head_hidden < 0) {
    throw DimensionMismatch("model dimensions must be positive");
  }
  if (d_model % heads != 0) throw DimensionMismatch("d_model must be divisible by heads");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

class LayoutBuilder {
 public:
  LayoutBuilder(std::vector<TensorInfo>& info) : info_(info) {}

  int add(std::string name, int rows, int cols, Group group, bool decay) {
    info_.push_back({std::move(name), rows, cols, group, decay});
    return static_cast<int>(info_.size()) - 1;
  }
  NormIdx norm(const std::string& prefix, int d) {
    return {add(prefix + ".gain", 1, d, Group::Shared, false), add(prefix + ".bias", 1, d, Group::Shared, false)};
  }
  AttnIdx attn(const std::string& prefix, int d) {
    AttnIdx a{};
    a.wq = add(prefix + ".wq", d, d, Group::Shared, true);
    a.bq = add(prefix + ".bq", 1, d, Group::Shared, false);
    a.wk = add(prefix + ".wk", d, d, Group::Shared, true);
    a.bk = add(prefix + ".bk", 1, d, Group::Shared, false);
    a.wv = add(prefix + ".wv", d, d, Group::Shared, true);
    a.bv = add(prefix + ".bv", 1, d, Group::Shared, false);
    a.wo = add(prefix + ".wo", d, d, Group::Shared, true);
    a.bo = add(prefix + ".bo", 1, d, Group::Shared, false);
    return a;
  }
  FfnIdx ffn(const std::string& prefix, int d, int f) {
    return {add(prefix + ".w1", d, f, Group::Shared, true), add(prefix + ".b1", 1, f, Group::Shared, false),
            add(prefix + ".w2", f, d, Group::Shared, true), add(prefix + ".b2", 1, d, Group::Shared, false)};
  }

 private:
  std::vector<TensorInfo>& info_;
};

bool is_norm_gain(const std::string& name) {
  return name.size() > 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
}

}  // namespace

ModelParams::ModelParams(Dims dims) : dims_(dims) {
  dims_.validate();
  const int d = dims_.d_model;
  LayoutBuilder b(info_);
  layout_.embedding = b.add("embedding", dims_.vocab_size, d, Group::Shared, true);
  for (int l = 0; l < dims_.enc_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncLayerIdx e{};
    e.norm1 = b.norm(p + ".norm1", d);
    e.self = b.attn(p + ".self", d);
    e.norm2 = b.norm(p + ".norm2", d);
    e.ffn = b.ffn(p + ".ffn", d, dims_.d_ff);
    layout_.encoder.push_back(e);
  }
  layout_.encoder_norm = b.norm("encoder.norm", d);
  for (int l = 0; l < dims_.dec_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecLayerIdx e{};
    e.norm1 = b.norm(p + ".norm1", d);
    e.self = b.attn(p + ".self", d);
    e.norm2 = b.norm(p + ".norm2", d);
    e.cross = b.attn(p + ".cross", d);
    e.norm3 = b.norm(p + ".norm3", d);
    e.ffn = b.ffn(p + ".ffn", d, dims_.d_ff);
    layout_.decoder.push_back(e);
  }
  layout_.decoder_norm = b.norm("decoder.norm", d);
  layout_.out_w = b.add("generator.w", d, dims_.vocab_size, Group::Generation, true);
  layout_.out_b = b.add("generator.b", 1, dims_.vocab_size, Group::Generation, false);
  const int h = dims_.ranker_hidden();
  layout_.head_w1 = b.add("ranker.w1", d, h, Group::Ranking, true);
  layout_.head_b1 = b.add("ranker.b1", 1, h, Group::Ranking, false);
  layout_.head_w2 = b.add("ranker.w2", h, 2, Group::Ranking, true);
  layout_.head_b2 = b.add("ranker.b2", 1, 2, Group::Ranking, false);

  tensors_.reserve(info_.size());
  for (const auto& t : info_) {
    tensors_.push_back(is_norm_gain(t.name) ? Mat::Ones(t.rows, t.cols) : Mat::Zero(t.rows, t.cols));
  }
}

ModelParams ModelParams::initialize(Dims dims, Rng& rng) {
  ModelParams p(dims);
  for (std::size_t i = 0; i < p.tensors_.size(); ++i) {
    if (!p.info_[i].decay) continue;  // biases and norms keep their defaults
    Mat& m = p.tensors_[i];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (uniform_unit(rng) * 2.0 - 1.0) * 0.08;
    }
  }
  return p;
}

Mat& ModelParams::tensor(const std::string& name) {
  for (std::size_t i = 0; i < info_.size(); ++i) {
    if (info_[i].name == name) return tensors_[i];
  }
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.allFinite()) return false;
  }
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.dims_ == b.dims_)) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    if (a.tensors_[i] != b.tensors_[i]) return false;
  }
  return true;
}

GradientBundle GradientBundle::zeros_like(const ModelParams& params) {
  GradientBundle g;
  g.grads.reserve(params.tensor_count());
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    g.grads.push_back(Mat::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
  }
  return g;
}

void GradientBundle::add_scaled(const GradientBundle& other, double s) {
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i] * s;
}

void GradientBundle::scale(double s) {
  for (auto& g : grads) g *= s;
}

bool GradientBundle::all_finite() const {
  for (const auto& g : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

double GradientBundle::norm() const {
  double s = 0.0;
  for (const auto& g : grads) s += g.squaredNorm();
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Forward passes on the tape

namespace {

using ad::Graph;
using ad::Var;

RowVec position_row(int pos, int dim) {
  RowVec r(dim);
  for (int i = 0; i < dim; ++i) {
    const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(dim));
    r(i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
  }
  return r;
}

struct Bound {
  std::vector<Var> p;
  Var operator[](int i) const { return p[static_cast<std::size_t>(i)]; }
};

Bound bind(Graph& g, const ModelParams& params, GradientBundle* grads) {
  Bound b;
  b.p.reserve(params.tensor_count());
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    b.p.push_back(g.param(params.tensor(i), grads ? &grads->grads[i] : nullptr));
  }
  return b;
}

void check_ids(const ModelParams& params, std::span<const int> ids) {
  if (ids.empty()) throw DimensionMismatch("empty token sequence");
  for (int id : ids) {
    if (id < 0 || id >= params.dims().vocab_size) {
      throw DimensionMismatch("token index " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(params.dims().vocab_size));
    }
  }
}

Var embed(Graph& g, const ModelParams& params, const Bound& b, std::span<const int> ids) {
  const int d = params.dims().d_model;
  Var e = ad::scale(g, ad::gather_rows(g, b[params.layout().embedding], ids), std::sqrt(static_cast<double>(d)));
  return ad::add_constant(g, e, ad::sinusoidal_positions(static_cast<int>(ids.size()), d));
}

Var attention_block(Graph& g, const Bound& b, const AttnIdx& a, Var query_in, Var kv_in, int heads, bool causal) {
  Var q = ad::linear(g, query_in, b[a.wq], b[a.bq]);
  Var k = ad::linear(g, kv_in, b[a.wk], b[a.bk]);
  Var v = ad::linear(g, kv_in, b[a.wv], b[a.bv]);
  return ad::linear(g, ad::attention(g, q, k, v, heads, causal), b[a.wo], b[a.bo]);
}

Var ffn_block(Graph& g, const Bound& b, const FfnIdx& f, Var x) {
  return ad::linear(g, ad::relu(g, ad::linear(g, x, b[f.w1], b[f.b1])), b[f.w2], b[f.b2]);
}

Var norm(Graph& g, const Bound& b, const NormIdx& n, Var x) { return ad::layer_norm(g, x, b[n.gain], b[n.bias]); }

Var encoder_forward(Graph& g, const ModelParams& params, const Bound& b, std::span<const int> source) {
  const int heads = params.dims().heads;
  Var x = embed(g, params, b, source);
  for (const auto& layer : params.layout().encoder) {
    Var h = norm(g, b, layer.norm1, x);
    x = ad::add(g, x, attention_block(g, b, layer.self, h, h, heads, false));
    x = ad::add(g, x, ffn_block(g, b, layer.ffn, norm(g, b, layer.norm2, x)));
  }
  return norm(g, b, params.layout().encoder_norm, x);
}

Var decoder_forward(Graph& g, const ModelParams& params, const Bound& b, Var memory,
                    std::span<const int> input) {
  const int heads = params.dims().heads;
  Var x = embed(g, params, b, input);
  for (const auto& layer : params.layout().decoder) {
    Var h = norm(g, b, layer.norm1, x);
    x = ad::add(g, x, attention_block(g, b, layer.self, h, h, heads, true));
    x = ad::add(g, x, attention_block(g, b, layer.cross, norm(g, b, layer.norm2, x), memory, heads, false));
    x = ad::add(g, x, ffn_block(g, b, layer.ffn, norm(g, b, layer.norm3, x)));
  }
  return norm(g, b, params.layout().decoder_norm, x);
}

Var ranking_logits(Graph& g, const ModelParams& params, const Bound& b, Var state) {
  const Layout& L = params.layout();
  Var hidden = ad::tanh(g, ad::linear(g, state, b[L.head_w1], b[L.head_b1]));
  return ad::linear(g, hidden, b[L.head_w2], b[L.head_b2]);
}

std::vector<int> wrap(std::span<const int> expression) {
  std::vector<int> out;
  out.reserve(expression.size() + 2);
  out.push_back(Vocab::kBos);
  out.insert(out.end(), expression.begin(), expression.end());
  out.push_back(Vocab::kEos);
  return out;
}

// Position of the [eos] that closes the sequence: the last non-[pad] token.
int closing_position(std::span<const int> input) {
  int pos = static_cast<int>(input.size()) - 1;
  while (pos > 0 && input[static_cast<std::size_t>(pos)] == Vocab::kPad) --pos;
  return pos;
}

std::array<double, 2> pair_softmax(const RowVec& logits) {
  const double m = std::max(logits(0), logits(1));
  const double e0 = std::exp(logits(0) - m);
  const double e1 = std::exp(logits(1) - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace

Mat encode(const ModelParams& params, std::span<const int> source) {
  check_ids(params, source);
  Graph g(false);
  Bound b = bind(g, params, nullptr);
  return g.value(encoder_forward(g, params, b, source));
}

Mat decoder_states(const ModelParams& params, const Mat& memory, std::span<const int> decoder_input) {
  check_ids(params, decoder_input);
  if (memory.cols() != params.dims().d_model) throw DimensionMismatch("memory width differs from d_model");
  Graph g(false);
  Bound b = bind(g, params, nullptr);
  Var mem = g.param(memory);
  return g.value(decoder_forward(g, params, b, mem, decoder_input));
}

RowVec decode_step(const ModelParams& params, const Mat& memory, std::span<const int> prefix) {
  if (prefix.empty() || prefix.front() != Vocab::kBos) throw DimensionMismatch("prefix must start with [bos]");
  Mat states = decoder_states(params, memory, prefix);
  const Layout& L = params.layout();
  Mat logits = states.bottomRows(1) * params.tensor(static_cast<std::size_t>(L.out_w));
  logits += params.tensor(static_cast<std::size_t>(L.out_b));
  return ad::softmax_rows(logits).row(0);
}

LossResult generation_loss(const ModelParams& params, std::span<const GenerationExample> batch) {
  LossResult out{0.0, GradientBundle::zeros_like(params)};
  if (batch.empty()) return out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  const Layout& L = params.layout();
  for (const auto& ex : batch) {
    check_ids(params, ex.source);
    std::vector<int> input;
    input.reserve(ex.target.size() + 1);
    input.push_back(Vocab::kBos);
    input.insert(input.end(), ex.target.begin(), ex.target.end());
    std::vector<int> expected(ex.target.begin(), ex.target.end());
    expected.push_back(Vocab::kEos);
    check_ids(params, expected);

    Graph g(true);
    Bound b = bind(g, params, &out.grads);
    Var memory = encoder_forward(g, params, b, ex.source);
    Var states = decoder_forward(g, params, b, memory, input);
    Var logits = ad::linear(g, states, b[L.out_w], b[L.out_b]);
    Var loss = ad::scale(g, ad::softmax_cross_entropy(g, logits, expected), inv);
    out.loss += g.value(loss)(0, 0);
    g.backward(loss);
  }
  if (!std::isfinite(out.loss) || !out.grads.all_finite()) throw NonFinite("generation loss is not finite");
  return out;
}

std::array<double, 2> rank_score(const ModelParams& params, std::span<const int> source,
                                 std::span<const int> decoder_input) {
  check_ids(params, source);
  check_ids(params, decoder_input);
  Graph g(false);
  Bound b = bind(g, params, nullptr);
  Var memory = encoder_forward(g, params, b, source);
  const int last = closing_position(decoder_input);
  Var states = decoder_forward(g, params, b, memory, decoder_input.first(static_cast<std::size_t>(last) + 1));
  Var logits = ranking_logits(g, params, b, ad::row(g, states, last));
  return pair_softmax(g.value(logits).row(0));
}

std::array<double, 2> rank_expression(const ModelParams& params, std::span<const int> source,
                                      std::span<const int> expression) {
  auto input = wrap(expression);
  return rank_score(params, source, input);
}

LossResult ranking_loss(const ModelParams& params, std::span<const RankingExample> batch) {
  LossResult out{0.0, GradientBundle::zeros_like(params)};
  if (batch.empty()) return out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    if (ex.label != 0 && ex.label != 1) throw std::invalid_argument("ranking label must be 0 or 1");
    check_ids(params, ex.source);
    auto input = wrap(ex.expression);
    check_ids(params, input);
    Graph g(true);
    Bound b = bind(g, params, &out.grads);
    Var memory = encoder_forward(g, params, b, ex.source);
    Var states = decoder_forward(g, params, b, memory, input);
    Var logits = ranking_logits(g, params, b, ad::row(g, states, static_cast<int>(input.size()) - 1));
    const int target = ex.label;
    Var loss = ad::scale(g, ad::softmax_cross_entropy(g, logits, std::span<const int>(&target, 1)), inv);
    out.loss += g.value(loss)(0, 0);
    g.backward(loss);
  }
  if (!std::isfinite(out.loss) || !out.grads.all_finite()) throw NonFinite("ranking loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Incremental decoding

namespace {

RowVec layer_norm_row(const RowVec& x, const Mat& gain, const Mat& bias) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  RowVec y = (x.array() - mean) / std::sqrt(var + 1e-5);
  return y.cwiseProduct(gain.row(0)) + bias.row(0);
}

RowVec linear_row(const RowVec& x, const Mat& w, const Mat& b) {
  RowVec y = x * w;
  y += b.row(0);
  return y;
}

// Attention of a single query row over key/value rows.
RowVec attend(const RowVec& q, const Mat& keys, const Mat& values, int heads) {
  const auto dim = q.cols();
  const auto dh = dim / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  RowVec out(dim);
  for (int h = 0; h < heads; ++h) {
    RowVec scores = (q.middleCols(h * dh, dh) * keys.middleCols(h * dh, dh).transpose()) * s;
    const double m = scores.maxCoeff();
    RowVec p = (scores.array() - m).exp();
    p /= p.sum();
    out.middleCols(h * dh, dh).noalias() = p * values.middleCols(h * dh, dh);
  }
  return out;
}

}  // namespace

DecoderSession::DecoderSession(const ModelParams& params, Mat memory) : params_(params), memory_(std::move(memory)) {
  if (memory_.cols() != params.dims().d_model) throw DimensionMismatch("memory width differs from d_model");
  for (const auto& layer : params.layout().decoder) {
    const auto& a = layer.cross;
    auto t = [&](int i) -> const Mat& { return params.tensor(static_cast<std::size_t>(i)); };
    Mat k = memory_ * t(a.wk);
    k.rowwise() += t(a.bk).row(0);
    Mat v = memory_ * t(a.wv);
    v.rowwise() += t(a.bv).row(0);
    cross_keys_.push_back(std::move(k));
    cross_values_.push_back(std::move(v));
  }
}

DecoderSession::State DecoderSession::start() const {
  State s;
  const auto d = params_.dims().d_model;
  s.keys.assign(params_.layout().decoder.size(), Mat(0, d));
  s.values.assign(params_.layout().decoder.size(), Mat(0, d));
  return s;
}

void DecoderSession::feed(State& state, int token) const {
  const Dims& dims = params_.dims();
  if (token < 0 || token >= dims.vocab_size) throw DimensionMismatch("token outside vocabulary");
  auto t = [&](int i) -> const Mat& { return params_.tensor(static_cast<std::size_t>(i)); };
  const Layout& L = params_.layout();
  RowVec x = t(L.embedding).row(token) * std::sqrt(static_cast<double>(dims.d_model));
  x += position_row(state.length, dims.d_model);
  for (std::size_t l = 0; l < L.decoder.size(); ++l) {
    const auto& layer = L.decoder[l];
    RowVec h = layer_norm_row(x, t(layer.norm1.gain), t(layer.norm1.bias));
    const auto& sa = layer.self;
    RowVec q = linear_row(h, t(sa.wq), t(sa.bq));
    Mat& keys = state.keys[l];
    Mat& values = state.values[l];
    keys.conservativeResize(keys.rows() + 1, Eigen::NoChange);
    values.conservativeResize(values.rows() + 1, Eigen::NoChange);
    keys.bottomRows(1) = linear_row(h, t(sa.wk), t(sa.bk));
    values.bottomRows(1) = linear_row(h, t(sa.wv), t(sa.bv));
    x += linear_row(attend(q, keys, values, dims.heads), t(sa.wo), t(sa.bo));

    const auto& ca = layer.cross;
    h = layer_norm_row(x, t(layer.norm2.gain), t(layer.norm2.bias));
    q = linear_row(h, t(ca.wq), t(ca.bq));
    x += linear_row(attend(q, cross_keys_[l], cross_values_[l], dims.heads), t(ca.wo), t(ca.bo));

    h = layer_norm_row(x, t(layer.norm3.gain), t(layer.norm3.bias));
    RowVec f = linear_row(h, t(layer.ffn.w1), t(layer.ffn.b1)).cwiseMax(0.0);
    x += linear_row(f, t(layer.ffn.w2), t(layer.ffn.b2));
  }
  state.hidden = layer_norm_row(x, t(L.decoder_norm.gain), t(L.decoder_norm.bias));
  ++state.length;
}

RowVec DecoderSession::next_log_probs(const State& state) const {
  const Layout& L = params_.layout();
  RowVec logits = linear_row(state.hidden, params_.tensor(static_cast<std::size_t>(L.out_w)),
                             params_.tensor(static_cast<std::size_t>(L.out_b)));
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

std::array<double, 2> DecoderSession::rank(const State& state) const {
  const Layout& L = params_.layout();
  auto t = [&](int i) -> const Mat& { return params_.tensor(static_cast<std::size_t>(i)); };
  RowVec hidden = linear_row(state.hidden, t(L.head_w1), t(L.head_b1)).array().tanh();
  return pair_softmax(linear_row(hidden, t(L.head_w2), t(L.head_b2)));
}

}  // namespace genrank::model
