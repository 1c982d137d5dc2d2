#include "genrank/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "genrank/error.hpp"
#include "genrank/rng.hpp"

namespace genrank::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(finetune_epochs >= 0 && joint_epochs >= 0, "epoch counts must be non-negative");
  require(beam_size >= 1, "beam size must be >= 1");
  require(bank_size >= 1, "bank size must be >= 1");
  require(pos_ratio > 0.0 && pos_ratio < 1.0, "pos_ratio must lie in (0, 1)");
  require(gen_batch >= 1 && rank_batch >= 1, "batch sizes must be >= 1");
  require(max_len >= 2, "max_len must be >= 2");
  require(jobs >= 1, "jobs must be >= 1");
  require(optimizer.learning_rate > 0.0, "learning rate must be positive");
  require(optimizer.weight_decay >= 0.0, "weight decay must be non-negative");
  require(optimizer.warmup_ratio >= 0.0 && optimizer.warmup_ratio <= 1.0, "warmup ratio must lie in [0, 1]");
  require(dims.d_model >= 1 && dims.heads >= 1 && dims.d_model % dims.heads == 0,
          "d_model must be a positive multiple of heads");
  require(dims.d_ff >= 1 && dims.enc_layers >= 1 && dims.dec_layers >= 1, "layer sizes must be >= 1");
}

bank::BankConfig TrainConfig::bank_config() const {
  return bank::BankConfig{strategy, beam_size, bank_size, disturb_count, jobs};
}

json to_json(const TrainConfig& c) {
  return json{
      {"finetune_epochs", c.finetune_epochs},
      {"joint_epochs", c.joint_epochs},
      {"beam_size", c.beam_size},
      {"bank_size", c.bank_size},
      {"strategy", std::string(bank::source_name(c.strategy.source))},
      {"online", c.strategy.online},
      {"disturb_count", c.disturb_count},
      {"pos_ratio", c.pos_ratio},
      {"gen_batch", c.gen_batch},
      {"rank_batch", c.rank_batch},
      {"learning_rate", c.optimizer.learning_rate},
      {"weight_decay", c.optimizer.weight_decay},
      {"warmup_ratio", c.optimizer.warmup_ratio},
      {"beta1", c.optimizer.beta1},
      {"beta2", c.optimizer.beta2},
      {"epsilon", c.optimizer.epsilon},
      {"max_grad_norm", c.optimizer.max_grad_norm},
      {"d_model", c.dims.d_model},
      {"heads", c.dims.heads},
      {"d_ff", c.dims.d_ff},
      {"enc_layers", c.dims.enc_layers},
      {"dec_layers", c.dims.dec_layers},
      {"head_hidden", c.dims.head_hidden},
      {"gen_weight", c.gen_weight},
      {"rank_weight", c.rank_weight},
      {"joint", c.joint},
      {"max_len", c.max_len},
      {"seed", c.seed},
      {"jobs", c.jobs},
  };
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "finetune_epochs") c.finetune_epochs = value.get<int>();
      else if (key == "joint_epochs") c.joint_epochs = value.get<int>();
      else if (key == "epochs") c.finetune_epochs = c.joint_epochs = value.get<int>();
      else if (key == "beam_size") c.beam_size = value.get<int>();
      else if (key == "bank_size") c.bank_size = value.get<int>();
      else if (key == "strategy") c.strategy.source = bank::parse_source(value.get<std::string>());
      else if (key == "online") c.strategy.online = value.get<bool>();
      else if (key == "disturb_count") c.disturb_count = value.get<int>();
      else if (key == "pos_ratio") c.pos_ratio = value.get<double>();
      else if (key == "gen_batch") c.gen_batch = value.get<int>();
      else if (key == "rank_batch") c.rank_batch = value.get<int>();
      else if (key == "learning_rate") c.optimizer.learning_rate = value.get<double>();
      else if (key == "weight_decay") c.optimizer.weight_decay = value.get<double>();
      else if (key == "warmup_ratio") c.optimizer.warmup_ratio = value.get<double>();
      else if (key == "beta1") c.optimizer.beta1 = value.get<double>();
      else if (key == "beta2") c.optimizer.beta2 = value.get<double>();
      else if (key == "epsilon") c.optimizer.epsilon = value.get<double>();
      else if (key == "max_grad_norm") c.optimizer.max_grad_norm = value.get<double>();
      else if (key == "d_model") c.dims.d_model = value.get<int>();
      else if (key == "heads") c.dims.heads = value.get<int>();
      else if (key == "d_ff") c.dims.d_ff = value.get<int>();
      else if (key == "enc_layers") c.dims.enc_layers = value.get<int>();
      else if (key == "dec_layers") c.dims.dec_layers = value.get<int>();
      else if (key == "head_hidden") c.dims.head_hidden = value.get<int>();
      else if (key == "gen_weight") c.gen_weight = value.get<double>();
      else if (key == "rank_weight") c.rank_weight = value.get<double>();
      else if (key == "joint") c.joint = value.get<bool>();
      else if (key == "max_len") c.max_len = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "jobs") c.jobs = value.get<int>();
      else throw ConfigError("unknown config field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

std::string config_hash(const TrainConfig& config) {
  json j = to_json(config);
  j.erase("jobs");  // parallelism does not change results
  const std::string text = j.dump();
  std::ostringstream s;
  s << std::hex << mix64(hash_tag(text));
  return s.str();
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Live {
  std::vector<int> tokens;
  double log_prob;
  model::DecoderSession::State state;
};

struct Expansion {
  std::size_t parent;
  int token;
  double log_prob;
};

bool hyp_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}

}  // namespace

std::vector<BeamHypothesis> beam_search(const model::ModelParams& params, std::span<const int> source,
                                        const BeamOptions& options) {
  if (options.beam_size < 1) throw ConfigError("beam size must be >= 1");
  if (options.max_len < 1) throw ConfigError("max_len must be >= 1");
  const int vocab_size = params.dims().vocab_size;
  std::vector<bool> banned(static_cast<std::size_t>(vocab_size), false);
  for (int id : options.banned) {
    if (id >= 0 && id < vocab_size) banned[static_cast<std::size_t>(id)] = true;
  }
  const std::size_t width = static_cast<std::size_t>(options.beam_size);

  model::DecoderSession session(params, model::encode(params, source));
  std::vector<Live> live;
  {
    auto st = session.start();
    session.feed(st, Vocab::kBos);
    live.push_back({{}, 0.0, std::move(st)});
  }
  std::vector<BeamHypothesis> done;

  for (int step = 1; step <= options.max_len && !live.empty(); ++step) {
    std::vector<Expansion> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(vocab_size));
    for (std::size_t b = 0; b < live.size(); ++b) {
      const model::RowVec lp = session.next_log_probs(live[b].state);
      for (int t = 0; t < vocab_size; ++t) {
        if (!banned[static_cast<std::size_t>(t)]) cands.push_back({b, t, live[b].log_prob + lp(t)});
      }
    }
    // Parents share a length, so lexicographic order on (parent tokens, token)
    // is lexicographic order on the extended sequences.
    auto before = [&](const Expansion& a, const Expansion& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
      return a.token < b.token;
    };
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), before);

    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Expansion& e = cands[i];
      std::vector<int> tokens = live[e.parent].tokens;
      tokens.push_back(e.token);
      if (e.token == Vocab::kEos) {
        done.push_back({std::move(tokens), e.log_prob, true});
      } else if (step == options.max_len) {
        done.push_back({std::move(tokens), e.log_prob, false});
      } else {
        auto st = live[e.parent].state;
        session.feed(st, e.token);
        next.push_back({std::move(tokens), e.log_prob, std::move(st)});
      }
    }
    live = std::move(next);
    if (done.size() >= width) {
      // Appending tokens never raises a score, so once no live hypothesis
      // reaches the K-th finalized one the result cannot change.
      std::sort(done.begin(), done.end(), hyp_before);
      done.resize(width);
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& l : live) best_live = std::max(best_live, l.log_prob);
      if (best_live < done.back().log_prob) break;
    }
  }
  std::sort(done.begin(), done.end(), hyp_before);
  if (done.size() > width) done.resize(width);
  return done;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<int> encode_tokens(const Vocab& vocab, std::span<const std::string> tokens) {
  return vocab.encode(tokens);
}

namespace {

std::vector<std::string> strip_eos(const Vocab& vocab, const BeamHypothesis& h) {
  std::vector<std::string> out;
  for (int id : h.tokens) {
    if (id == Vocab::kEos) break;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::optional<Expr> try_parse(std::span<const std::string> tokens) {
  try {
    return parse_infix(tokens);
  } catch (const SyntaxError&) {
    return std::nullopt;
  }
}

double ranking_score(const model::DecoderSession& session, const std::vector<int>& expression) {
  auto st = session.start();
  session.feed(st, Vocab::kBos);
  for (int id : expression) session.feed(st, id);
  session.feed(st, Vocab::kEos);
  return session.rank(st)[1];
}

}  // namespace

Solution solve(const model::ModelParams& params, const Vocab& vocab, std::span<const std::string> problem_tokens,
               int beam_size, int max_len) {
  const std::vector<int> source = vocab.encode(problem_tokens);
  BeamOptions opts;
  opts.beam_size = beam_size;
  opts.max_len = max_len;
  const auto hyps = beam_search(params, source, opts);

  model::DecoderSession session(params, model::encode(params, source));
  std::vector<Candidate> cands;
  std::optional<std::size_t> best;
  for (const auto& h : hyps) {
    Candidate c;
    c.tokens = strip_eos(vocab, h);
    c.log_prob = h.log_prob;
    c.finished = h.finished;
    c.expr = try_parse(c.tokens);
    if (c.expr) {
      std::vector<int> ids(h.tokens.begin(), h.tokens.end());
      if (!ids.empty() && ids.back() == Vocab::kEos) ids.pop_back();
      c.score = ranking_score(session, ids);
      // Strictly greater wins; candidates arrive in beam order, which is
      // descending log-probability, so ties keep the earlier candidate.
      if (!best || c.score > cands[*best].score ||
          (c.score == cands[*best].score && c.log_prob > cands[*best].log_prob)) {
        best = cands.size();
      }
    }
    cands.push_back(std::move(c));
  }
  if (!best) throw NoCandidate("no beam output parses as an expression");
  Expr chosen = *cands[*best].expr;
  return Solution{std::move(chosen), *best, std::move(cands)};
}

bank::Generator make_generator(const model::ModelParams& params, const Vocab& vocab, int max_len) {
  return [&params, &vocab, max_len](const MappedProblem& problem, int k) {
    BeamOptions opts;
    opts.beam_size = k;
    opts.max_len = max_len;
    std::vector<bank::GeneratedSequence> out;
    for (const auto& h : beam_search(params, vocab.encode(problem.tokens), opts)) {
      out.push_back({strip_eos(vocab, h), h.log_prob});
    }
    return out;
  };
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

json tally_json(const Tally& t) {
  return json{{"n", t.n},
              {"correct", t.correct},
              {"top1_correct", t.top1_correct},
              {"oracle_correct", t.oracle_correct},
              {"accuracy", t.accuracy()},
              {"top1_accuracy", t.top1_accuracy()},
              {"oracle_accuracy", t.oracle_accuracy()}};
}

Verdict judge(const model::ModelParams& params, const Vocab& vocab, const MappedProblem& problem, int beam_size,
              int max_len) {
  Verdict v;
  v.id = problem.id;
  v.op_count = static_cast<int>(problem.ground_truth.op_count());
  v.ground_truth = serialize_infix(problem.ground_truth);
  v.prediction_value = "none";
  const ExprValue truth = evaluate(problem.ground_truth, problem.numbers);
  auto is_correct = [&](const std::optional<Expr>& e) {
    return e && references_within(*e, problem.numbers.size()) && results_equal(evaluate(*e, problem.numbers), truth);
  };
  std::optional<Solution> sol;
  try {
    sol = solve(params, vocab, problem.tokens, beam_size, max_len);
  } catch (const NoCandidate&) {
  }
  if (!sol) {
    // Still report what the generator's best guess was.
    BeamOptions opts;
    opts.beam_size = beam_size;
    opts.max_len = max_len;
    auto hyps = beam_search(params, vocab.encode(problem.tokens), opts);
    v.candidates = hyps.size();
    if (!hyps.empty()) {
      std::string s;
      for (const auto& t : strip_eos(vocab, hyps.front())) s += (s.empty() ? "" : " ") + t;
      v.top1 = s;
    }
    return v;
  }
  v.candidates = sol->candidates.size();
  const Expr& chosen = sol->expr;
  v.prediction = serialize_infix(chosen);
  v.prediction_value = references_within(chosen, problem.numbers.size())
                           ? evaluate(chosen, problem.numbers).to_string()
                           : "undefined";
  v.correct = is_correct(chosen);
  const Candidate& first = sol->candidates.front();
  if (first.expr) {
    v.top1 = serialize_infix(*first.expr);
  } else {
    std::string s;
    for (const auto& t : first.tokens) s += (s.empty() ? "" : " ") + t;
    v.top1 = s;
  }
  v.top1_correct = is_correct(first.expr);
  v.oracle_correct = std::any_of(sol->candidates.begin(), sol->candidates.end(),
                                 [&](const Candidate& c) { return is_correct(c.expr); });
  return v;
}

void tally(Tally& t, const Verdict& v) {
  ++t.n;
  t.correct += v.correct;
  t.top1_correct += v.top1_correct;
  t.oracle_correct += v.oracle_correct;
}

template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  const std::size_t workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) f(i);
    });
  }
}

}  // namespace

json EvalReport::summary_json() const {
  json j = tally_json(overall);
  json buckets = json::object();
  for (const auto& [ops, t] : by_op_count) buckets[std::to_string(ops)] = tally_json(t);
  j["by_op_count"] = buckets;
  return j;
}

void EvalReport::write_verdicts(std::ostream& out) const {
  for (const auto& v : verdicts) {
    json j{{"id", v.id},
           {"op_count", v.op_count},
           {"ground_truth", v.ground_truth},
           {"prediction", v.prediction ? json(*v.prediction) : json(nullptr)},
           {"prediction_value", v.prediction_value},
           {"correct", v.correct},
           {"top1", v.top1 ? json(*v.top1) : json(nullptr)},
           {"top1_correct", v.top1_correct},
           {"oracle_correct", v.oracle_correct},
           {"candidates", v.candidates}};
    out << j.dump() << '\n';
  }
}

EvalReport evaluate_accuracy(const model::ModelParams& params, const Vocab& vocab,
                             std::span<const MappedProblem> test_set, int beam_size, int max_len, int jobs) {
  EvalReport report;
  report.verdicts.resize(test_set.size());
  parallel_for(test_set.size(), jobs,
               [&](std::size_t i) { report.verdicts[i] = judge(params, vocab, test_set[i], beam_size, max_len); });
  for (const auto& v : report.verdicts) {
    tally(report.overall, v);
    tally(report.by_op_count[v.op_count], v);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Training

json EpochRecord::to_json() const {
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  return json{{"phase", phase},       {"epoch", epoch},       {"J_GEN", opt(gen_loss)},
              {"J_RANK", opt(rank_loss)}, {"bank_pos", opt(bank_pos)}, {"bank_neg", opt(bank_neg)},
              {"bank_rebuilds", bank_rebuilds}, {"dev_accuracy", opt(dev_accuracy)}};
}

Trainer::Trainer(TrainConfig config, Vocab vocab, std::vector<MappedProblem> train, std::vector<MappedProblem> dev)
    : config_(std::move(config)), vocab_(std::move(vocab)), train_(std::move(train)), dev_(std::move(dev)) {
  config_.dims.vocab_size = vocab_.size();
  config_.validate();
  if (train_.empty()) throw ConfigError("training set is empty");
  for (const auto& p : train_) {
    sources_.push_back(vocab_.encode(p.tokens));
    auto expr_tokens = serialize_tokens(p.ground_truth);
    targets_.push_back(vocab_.encode(expr_tokens));
  }
}

model::ModelParams Trainer::initial_params() const {
  Rng rng = derive_rng(config_.seed, "init");
  return model::ModelParams::initialize(config_.dims, rng);
}

std::vector<model::GenerationExample> Trainer::generation_batch(std::span<const std::size_t> indices) const {
  std::vector<model::GenerationExample> batch;
  batch.reserve(indices.size());
  for (std::size_t i : indices) batch.push_back({sources_[i], targets_[i]});
  return batch;
}

Checkpoint Trainer::snapshot(const model::ModelParams& params, const std::string& phase, int epochs_done,
                             const model::AdamW* optimizer) const {
  Checkpoint ck{vocab_, params, to_json(config_), config_hash(config_), std::nullopt};
  TrainerState st;
  st.phase = phase;
  st.epochs_done = epochs_done;
  if (optimizer) {
    st.optimizer_steps = optimizer->steps_taken();
    st.first_moments = optimizer->first_moments();
    st.second_moments = optimizer->second_moments();
  }
  ck.trainer = std::move(st);
  return ck;
}

namespace {

std::int64_t steps_per_epoch(std::size_t n, int batch) {
  return static_cast<std::int64_t>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

void restore(model::AdamW& opt, const TrainerState* resume) {
  if (!resume) return;
  opt.set_steps_taken(resume->optimizer_steps);
  if (!resume->first_moments.empty()) {
    opt.first_moments() = resume->first_moments;
    opt.second_moments() = resume->second_moments;
  }
}

}  // namespace

model::ModelParams Trainer::finetune_generator(model::ModelParams params, const TrainHooks& hooks, int first_epoch,
                                               const TrainerState* resume, int stop_after) {
  finetune_done_ = first_epoch;
  if (first_epoch >= config_.finetune_epochs) return params;
  model::AdamW opt(params, config_.optimizer);
  restore(opt, resume);
  const std::int64_t per_epoch = steps_per_epoch(train_.size(), config_.gen_batch);
  const std::int64_t total = per_epoch * config_.finetune_epochs;
  std::vector<std::size_t> order(train_.size());
  for (int epoch = first_epoch; epoch < config_.finetune_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = derive_rng(config_.seed, "finetune-order", static_cast<std::uint64_t>(epoch));
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.gen_batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config_.gen_batch));
      auto batch = generation_batch(std::span<const std::size_t>(order).subspan(start, end - start));
      model::LossResult loss = model::generation_loss(params, batch);
      opt.step(params, loss.grads, model::scheduled_rate(config_.optimizer, opt.steps_taken(), total));
      loss_sum += loss.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.phase = "finetune";
    rec.epoch = epoch + 1;
    rec.gen_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(1, batches));
    if (hooks.on_epoch) hooks.on_epoch(rec);
    finetune_done_ = epoch + 1;
    if (hooks.on_checkpoint) hooks.on_checkpoint(snapshot(params, "finetune", epoch + 1, &opt), nullptr);
    ++epochs_this_run_;
    if (stop_after > 0 && epochs_this_run_ >= stop_after) break;
  }
  return params;
}

bank::ExpressionBank Trainer::build_bank(const model::ModelParams& params, std::uint64_t round) const {
  return bank::build_bank(train_, make_generator(params, vocab_, config_.max_len), config_.bank_config(),
                          config_.seed, round);
}

model::ModelParams Trainer::joint_train(model::ModelParams params, const TrainHooks& hooks,
                                        std::optional<bank::ExpressionBank> initial_bank, int first_epoch,
                                        const TrainerState* resume, int stop_after) {
  joint_done_ = first_epoch;
  if (first_epoch >= config_.joint_epochs) return params;
  bank_ = initial_bank ? std::move(initial_bank) : std::optional(build_bank(params, 0));
  rebuilds_ = config_.strategy.online ? static_cast<std::size_t>(first_epoch) : 0;
  model::AdamW opt(params, config_.optimizer);
  restore(opt, resume);
  const std::int64_t per_epoch = steps_per_epoch(train_.size(), config_.gen_batch);
  const std::int64_t total = per_epoch * config_.joint_epochs;
  const model::JointStepOptions step_opts{config_.gen_weight, config_.rank_weight, !config_.joint};
  std::vector<std::size_t> order(train_.size());

  for (int epoch = first_epoch; epoch < config_.joint_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng = derive_rng(config_.seed, "joint-order", static_cast<std::uint64_t>(epoch));
    shuffle_in_place(order, order_rng);
    Rng sample_rng = derive_rng(config_.seed, "rank-sample", static_cast<std::uint64_t>(epoch));
    double gen_sum = 0.0;
    double rank_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.gen_batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config_.gen_batch));
      auto gen = generation_batch(std::span<const std::size_t>(order).subspan(start, end - start));
      auto picks = bank::sample_ranking_batch(*bank_, static_cast<std::size_t>(config_.rank_batch),
                                              config_.pos_ratio, sample_rng);
      std::vector<model::RankingExample> rank;
      rank.reserve(picks.size());
      for (const auto& s : picks) {
        rank.push_back({sources_[s.problem_index], vocab_.encode(serialize_tokens(s.candidate->expr)),
                        s.candidate->label == Label::Positive ? 1 : 0});
      }
      if (!config_.joint) gen.clear();
      auto res = model::joint_step(params, opt, gen, rank,
                                   model::scheduled_rate(config_.optimizer, opt.steps_taken(), total), step_opts);
      gen_sum += res.gen_loss;
      rank_sum += res.rank_loss;
      ++batches;
    }
    EpochRecord rec;
    rec.phase = "joint";
    rec.epoch = epoch + 1;
    if (config_.joint) rec.gen_loss = gen_sum / static_cast<double>(batches);
    rec.rank_loss = rank_sum / static_cast<double>(batches);
    rec.bank_pos = bank_->positive_count();
    rec.bank_neg = bank_->negative_count();
    if (config_.strategy.online) {
      bank_ = build_bank(params, static_cast<std::uint64_t>(epoch) + 1);
      ++rebuilds_;
    }
    rec.bank_rebuilds = rebuilds_;
    if (!dev_.empty()) {
      rec.dev_accuracy =
          evaluate_accuracy(params, vocab_, dev_, config_.beam_size, config_.max_len, config_.jobs).overall.accuracy();
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
    joint_done_ = epoch + 1;
    if (hooks.on_checkpoint) hooks.on_checkpoint(snapshot(params, "joint", epoch + 1, &opt), &*bank_);
    ++epochs_this_run_;
    if (stop_after > 0 && epochs_this_run_ >= stop_after) return params;
  }
  return params;
}

model::ModelParams Trainer::run(const TrainHooks& hooks, std::optional<ResumePoint> resume, int stop_after) {
  completed_ = false;
  epochs_this_run_ = 0;
  auto stopped = [&] { return stop_after > 0 && epochs_this_run_ >= stop_after; };

  finetune_done_ = 0;
  joint_done_ = 0;
  model::ModelParams params = resume ? resume->checkpoint.params : initial_params();
  const TrainerState* state = resume && resume->checkpoint.trainer ? &*resume->checkpoint.trainer : nullptr;
  const std::string phase = state ? state->phase : "finetune";

  if (phase == "finetune") {
    params = finetune_generator(std::move(params), hooks, state ? state->epochs_done : 0, state, stop_after);
    if (stopped()) return params;
    params = joint_train(std::move(params), hooks, std::nullopt, 0, nullptr, stop_after);
  } else if (phase == "joint") {
    finetune_done_ = config_.finetune_epochs;
    std::optional<bank::ExpressionBank> bank;
    if (resume->bank) bank = std::move(resume->bank);
    if (!bank && state->epochs_done > 0) throw CheckpointError("resuming joint training needs the saved bank");
    params = joint_train(std::move(params), hooks, std::move(bank), state->epochs_done, state, stop_after);
  } else if (phase == "done") {
    finetune_done_ = config_.finetune_epochs;
    joint_done_ = config_.joint_epochs;
  } else {
    throw CheckpointError("unknown trainer phase '" + phase + "'");
  }
  completed_ = finetune_done_ >= config_.finetune_epochs && joint_done_ >= config_.joint_epochs;
  return params;
}

}  // namespace genrank::pipeline
