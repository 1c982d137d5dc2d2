#include "genrank/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "genrank/checkpoint.hpp"
#include "genrank/disturb.hpp"
#include "genrank/error.hpp"
#include "genrank/synth.hpp"

namespace genrank::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration

void RunConfig::validate() const {
  train.validate();
  if (train_path.empty()) throw ConfigError("a training dataset is required");
  if (folds != 0 && folds < 2) throw ConfigError("folds must be >= 2");
  if (folds >= 2 && (fold < 0 || fold >= folds)) throw ConfigError("fold index out of range");
  if (folds >= 2 && !dev_path.empty()) throw ConfigError("--dev and --folds are mutually exclusive");
}

json to_json(const RunConfig& c) {
  json j = pipeline::to_json(c.train);
  j["train"] = c.train_path.string();
  j["dev"] = c.dev_path.string();
  j["out"] = c.out_dir.string();
  j["fold"] = c.fold;
  j["folds"] = c.folds;
  return j;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  json rest = json::object();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "train") c.train_path = value.get<std::string>();
      else if (key == "dev") c.dev_path = value.get<std::string>();
      else if (key == "out") c.out_dir = value.get<std::string>();
      else if (key == "fold") c.fold = value.get<int>();
      else if (key == "folds") c.folds = value.get<int>();
      else rest[key] = value;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.train = pipeline::train_config_from_json(rest, c.train);
  return c;
}

namespace {

// ---------------------------------------------------------------------------
// Helpers

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string value_text(const ExprValue& v) {
  if (!v.defined()) return "undefined";
  if (auto d = to_decimal_string(v.value())) return *d;
  return to_exact_string(v.value());
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
  return s;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" ", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in list");
    }
  }
  return out;
}

// Data files are user input: problems with them are usage errors.
synth::LoadedDataset load_data(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("no such dataset: " + path.string());
  return synth::load_dataset(path);
}

void print_warnings(const synth::LoadedDataset& data, std::ostream& err) {
  for (const auto& w : data.warnings) err << "warning: " << w << '\n';
}

Checkpoint load_model(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("no such checkpoint: " + path.string());
  return load_checkpoint(path);
}

// Training config stored in a checkpoint, falling back to defaults.
pipeline::TrainConfig stored_config(const Checkpoint& ck) {
  pipeline::TrainConfig c;
  if (ck.config.is_object()) {
    json j = ck.config;
    for (const char* k : {"train", "dev", "out", "fold", "folds"}) j.erase(k);
    c = pipeline::train_config_from_json(j, c);
  }
  return c;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  long long n = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string dist = "0.2,0.2,0.2,0.2,0.2";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.n < 1) throw ConfigError("--n must be >= 1");
  const auto d = parse_list(a.dist);
  if (d.size() > 5 || d.empty()) throw ConfigError("--dist takes 1 to 5 probabilities");
  synth::OpCountDistribution dist{};
  std::copy(d.begin(), d.end(), dist.begin());
  auto records = synth::generate_dataset(static_cast<std::size_t>(a.n), dist, a.seed);
  std::ostringstream text;
  synth::write_records(text, records);
  if (a.out.empty() || a.out == "-") {
    out << text.str();
  } else {
    write_text_atomic(a.out, text.str());
    out << "wrote " << records.size() << " records to " << a.out << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  bool resume = false;
  int stop_after = -1;
  // Overrides; unset means "keep config/default".
  std::optional<std::string> train, dev, out, strategy;
  std::optional<int> fold, folds, epochs, finetune_epochs, joint_epochs, beam_size, bank_size, disturb_count,
      gen_batch, rank_batch, d_model, heads, d_ff, enc_layers, dec_layers, head_hidden, max_len, jobs;
  std::optional<double> pos_ratio, lr, weight_decay, warmup, max_grad_norm, gen_weight, rank_weight;
  std::optional<std::uint64_t> seed;
  std::optional<bool> online, joint;
};

RunConfig resolve_run_config(const TrainArgs& a) {
  RunConfig c;
  if (!a.config.empty()) {
    c = run_config_from_json(read_json_file(a.config), c);
  } else if (a.resume && a.out && fs::exists(fs::path(*a.out) / files::kConfig)) {
    // A resumed run starts from the configuration it was launched with.
    c = run_config_from_json(read_json_file(fs::path(*a.out) / files::kConfig), c);
  }
  auto& t = c.train;
  if (a.train) c.train_path = *a.train;
  if (a.dev) c.dev_path = *a.dev;
  if (a.out) c.out_dir = *a.out;
  if (a.fold) c.fold = *a.fold;
  if (a.folds) c.folds = *a.folds;
  if (a.strategy) t.strategy.source = bank::parse_source(*a.strategy);
  if (a.online) t.strategy.online = *a.online;
  if (a.joint) t.joint = *a.joint;
  if (a.epochs) t.finetune_epochs = t.joint_epochs = *a.epochs;
  if (a.finetune_epochs) t.finetune_epochs = *a.finetune_epochs;
  if (a.joint_epochs) t.joint_epochs = *a.joint_epochs;
  if (a.beam_size) t.beam_size = *a.beam_size;
  if (a.bank_size) t.bank_size = *a.bank_size;
  if (a.disturb_count) t.disturb_count = *a.disturb_count;
  if (a.gen_batch) t.gen_batch = *a.gen_batch;
  if (a.rank_batch) t.rank_batch = *a.rank_batch;
  if (a.d_model) t.dims.d_model = *a.d_model;
  if (a.heads) t.dims.heads = *a.heads;
  if (a.d_ff) t.dims.d_ff = *a.d_ff;
  if (a.enc_layers) t.dims.enc_layers = *a.enc_layers;
  if (a.dec_layers) t.dims.dec_layers = *a.dec_layers;
  if (a.head_hidden) t.dims.head_hidden = *a.head_hidden;
  if (a.max_len) t.max_len = *a.max_len;
  if (a.jobs) t.jobs = *a.jobs;
  if (a.pos_ratio) t.pos_ratio = *a.pos_ratio;
  if (a.lr) t.optimizer.learning_rate = *a.lr;
  if (a.weight_decay) t.optimizer.weight_decay = *a.weight_decay;
  if (a.warmup) t.optimizer.warmup_ratio = *a.warmup;
  if (a.max_grad_norm) t.optimizer.max_grad_norm = *a.max_grad_norm;
  if (a.gen_weight) t.gen_weight = *a.gen_weight;
  if (a.rank_weight) t.rank_weight = *a.rank_weight;
  if (a.seed) t.seed = *a.seed;
  c.validate();
  return c;
}

// Keeps the first `keep` lines of the training log.
void truncate_log(const fs::path& path, std::size_t keep) {
  std::vector<std::string> lines;
  if (std::ifstream in(path); in) {
    std::string line;
    while (lines.size() < keep && std::getline(in, line)) lines.push_back(line);
  }
  if (lines.size() < keep) throw CheckpointError("training log is shorter than the checkpoint");
  std::string text;
  for (const auto& l : lines) text += l + '\n';
  write_text_atomic(path, text);
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve_run_config(a);
  auto data = load_data(rc.train_path);
  print_warnings(data, err);
  std::vector<MappedProblem> train_set;
  std::vector<MappedProblem> dev_set;
  if (rc.folds >= 2) {
    const auto folds = synth::split_dataset(data.problems.size(), rc.folds, rc.train.seed);
    for (std::size_t i = 0; i < data.problems.size(); ++i) {
      (folds[i] == rc.fold ? dev_set : train_set).push_back(data.problems[i]);
    }
  } else {
    train_set = std::move(data.problems);
    if (!rc.dev_path.empty()) {
      auto dev = load_data(rc.dev_path);
      print_warnings(dev, err);
      dev_set = std::move(dev.problems);
    }
  }
  if (train_set.empty()) throw ConfigError("training set is empty");

  const fs::path dir = rc.out_dir;
  fs::create_directories(dir);
  const fs::path ck_path = dir / files::kCheckpoint;
  const fs::path log_path = dir / files::kLog;
  const fs::path bank_path = dir / files::kBank;

  Vocab vocab = Vocab::build(train_set);
  std::optional<pipeline::ResumePoint> resume;
  if (a.resume) {
    if (!fs::exists(ck_path)) throw ConfigError("nothing to resume: " + ck_path.string() + " is missing");
    Checkpoint ck = load_checkpoint(ck_path, &vocab);
    if (ck.config_hash != pipeline::config_hash(rc.train)) {
      throw ConfigError("configuration differs from the checkpoint; refusing to resume");
    }
    if (!ck.trainer) throw CheckpointError("checkpoint has no trainer state");
    std::optional<bank::ExpressionBank> saved_bank;
    if (ck.trainer->phase == "joint") {
      std::ifstream in(bank_path);
      if (!in) throw CheckpointError("missing " + bank_path.string());
      saved_bank = bank::ExpressionBank::load(in, rc.train.bank_size);
    }
    const std::size_t done = static_cast<std::size_t>(ck.trainer->epochs_done) +
                             (ck.trainer->phase == "finetune" ? 0u : static_cast<std::size_t>(rc.train.finetune_epochs));
    truncate_log(log_path, done);
    resume = pipeline::ResumePoint{std::move(ck), std::move(saved_bank)};
    out << "resuming from " << resume->checkpoint.trainer->phase << " epoch "
        << resume->checkpoint.trainer->epochs_done << '\n';
  } else {
    write_text_atomic(log_path, "");
  }
  write_text_atomic(dir / files::kConfig, to_json(rc).dump(2) + "\n");

  std::ofstream log(log_path, std::ios::app);
  pipeline::TrainHooks hooks;
  hooks.on_epoch = [&](const pipeline::EpochRecord& r) {
    log << r.to_json().dump() << '\n';
    log.flush();
    out << r.phase << " epoch " << r.epoch;
    if (r.gen_loss) out << "  J_GEN " << std::setprecision(6) << *r.gen_loss;
    if (r.rank_loss) out << "  J_RANK " << std::setprecision(6) << *r.rank_loss;
    if (r.bank_pos) out << "  bank +" << *r.bank_pos << "/-" << *r.bank_neg;
    if (r.dev_accuracy) out << "  dev " << std::setprecision(4) << *r.dev_accuracy;
    out << '\n';
  };
  hooks.on_checkpoint = [&](const Checkpoint& ck, const bank::ExpressionBank* b) {
    // The bank goes first so a checkpoint never points at a stale bank.
    if (b) write_text_atomic(bank_path, b->dump_string());
    save_checkpoint(ck_path, ck);
  };

  pipeline::Trainer trainer(rc.train, vocab, std::move(train_set), std::move(dev_set));
  model::ModelParams params = trainer.run(hooks, std::move(resume), a.stop_after);
  if (!trainer.completed()) {
    out << "stopped early; resume with --resume\n";
    return kExitOk;
  }
  Checkpoint final_ck{vocab, params, pipeline::to_json(rc.train), pipeline::config_hash(rc.train),
                      TrainerState{"done", rc.train.joint_epochs, 0, {}, {}}};
  save_checkpoint(dir / files::kModel, final_ck);
  out << "wrote " << (dir / files::kModel).string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// solve

struct SolveArgs {
  std::string checkpoint;
  std::string text;
  std::string input;
  int k = -1;
  int max_len = -1;
};

struct SolveItem {
  std::string id;
  std::string text;
  std::optional<std::string> equation;
};

std::vector<SolveItem> read_solve_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<SolveItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      throw FormatError("line " + std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      fail("invalid JSON");
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) fail("missing string field 'text'");
    SolveItem item{"line-" + std::to_string(line_no), j["text"].get<std::string>(), std::nullopt};
    if (j.contains("id") && j["id"].is_string()) item.id = j["id"].get<std::string>();
    if (j.contains("equation") && j["equation"].is_string()) item.equation = j["equation"].get<std::string>();
    items.push_back(std::move(item));
  }
  return items;
}

int cmd_solve(const SolveArgs& a, std::ostream& out) {
  if (a.text.empty() == a.input.empty()) throw ConfigError("give exactly one of --text or --input");
  Checkpoint ck = load_model(a.checkpoint);
  const auto cfg = stored_config(ck);
  const int k = a.k > 0 ? a.k : cfg.beam_size;
  const int max_len = a.max_len > 0 ? a.max_len : cfg.max_len;
  if (a.k == 0) throw ConfigError("--k must be >= 1");

  std::vector<SolveItem> items =
      a.input.empty() ? std::vector<SolveItem>{{"text", a.text, std::nullopt}} : read_solve_input(a.input);
  int failures = 0;
  for (const auto& item : items) {
    MappedText mt = map_numbers(item.text);
    out << "problem " << item.id << ": " << join(mt.tokens) << '\n';
    try {
      auto sol = pipeline::solve(ck.params, ck.vocab, mt.tokens, k, max_len);
      const ExprValue v = references_within(sol.expr, mt.numbers.size()) ? evaluate(sol.expr, mt.numbers)
                                                                          : ExprValue::undefined();
      out << "expression: " << serialize_infix(sol.expr) << '\n';
      out << "answer: " << value_text(v) << '\n';
      out << "  #  chosen  log_prob    score     candidate\n";
      for (std::size_t i = 0; i < sol.candidates.size(); ++i) {
        const auto& c = sol.candidates[i];
        char buf[64];
        std::snprintf(buf, sizeof buf, "%3zu  %-6s  %9.4f  ", i + 1, i == sol.chosen ? "*" : "", c.log_prob);
        out << buf;
        if (c.expr) {
          std::snprintf(buf, sizeof buf, "%.6f  ", c.score);
          out << buf << serialize_infix(*c.expr);
        } else {
          out << "   -      " << join(c.tokens) << " (unparseable)";
        }
        if (!c.finished) out << " (unfinished)";
        out << '\n';
      }
    } catch (const NoCandidate& e) {
      out << "no parseable candidate\n";
      ++failures;
    }
  }
  return failures == static_cast<int>(items.size()) ? kExitRuntime : kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string test;
  std::string report;
  std::string verdicts;
  int k = -1;
  int max_len = -1;
  int jobs = 1;
  bool by_length = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.jobs < 1) throw ConfigError("--jobs must be >= 1");
  Checkpoint ck = load_model(a.checkpoint);
  const auto cfg = stored_config(ck);
  const int k = a.k > 0 ? a.k : cfg.beam_size;
  const int max_len = a.max_len > 0 ? a.max_len : cfg.max_len;
  auto data = load_data(a.test);
  print_warnings(data, err);
  auto report = pipeline::evaluate_accuracy(ck.params, ck.vocab, data.problems, k, max_len, a.jobs);
  json summary = report.summary_json();
  summary["beam_size"] = k;
  summary["max_len"] = max_len;
  if (!a.report.empty()) write_text_atomic(a.report, summary.dump(2) + "\n");
  if (!a.verdicts.empty()) {
    std::ostringstream s;
    report.write_verdicts(s);
    write_text_atomic(a.verdicts, s.str());
  }
  auto row = [&](const std::string& label, const pipeline::Tally& t) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-8s %6zu  %8.4f  %8.4f  %8.4f\n", label.c_str(), t.n, t.accuracy(),
                  t.top1_accuracy(), t.oracle_accuracy());
    out << buf;
  };
  out << "bucket        n  gen&rank      top1    oracle\n";
  row("all", report.overall);
  if (a.by_length) {
    for (const auto& [ops, t] : report.by_op_count) row("#op=" + std::to_string(ops), t);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bank

struct BankArgs {
  std::string checkpoint;
  std::string data;
  std::string strategy = "model-tree";
  std::string out;
  int k = 10;
  int bank_size = 20;
  int disturb_count = -1;
  int max_len = -1;
  int jobs = 1;
  std::uint64_t seed = 1;
  std::uint64_t round = 0;
};

int cmd_bank(const BankArgs& a, std::ostream& out, std::ostream& err) {
  bank::BankConfig config{{bank::parse_source(a.strategy), false}, a.k, a.bank_size, a.disturb_count, a.jobs};
  if (a.k < 1 || a.bank_size < 1 || a.jobs < 1) throw ConfigError("--k, --bank-size and --jobs must be >= 1");
  auto data = load_data(a.data);
  print_warnings(data, err);
  std::optional<Checkpoint> ck;
  if (config.strategy.source != bank::Source::RandomSample) {
    if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required for model strategies");
    ck = load_model(a.checkpoint);
  }
  const int max_len = a.max_len > 0 ? a.max_len : (ck ? stored_config(*ck).max_len : 24);
  bank::Generator generator = ck ? pipeline::make_generator(ck->params, ck->vocab, max_len)
                                 : bank::Generator([](const MappedProblem&, int) {
                                     return std::vector<bank::GeneratedSequence>{};
                                   });
  auto built = bank::build_bank(data.problems, generator, config, a.seed, a.round);
  const std::string text = built.dump_string();
  if (a.out.empty() || a.out == "-") {
    out << text;
  } else {
    write_text_atomic(a.out, text);
    const auto& m = built.metrics();
    out << "problems " << built.entries().size() << "  positives " << built.positive_count() << "  negatives "
        << built.negative_count() << "  generated " << m.generated << "  unparseable " << m.unparseable << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// disturb

struct DisturbArgs {
  std::string expr;
  std::string numbers;
  std::string kind;
  std::uint64_t seed = 1;
};

int cmd_disturb(const DisturbArgs& a, std::ostream& out) {
  NumberTable table;
  {
    std::stringstream s(a.numbers);
    std::string item;
    while (std::getline(s, item, ',')) {
      try {
        table.push_back(parse_rational(item));
      } catch (const Error&) {
        throw ConfigError("bad number '" + item + "' in --numbers");
      }
    }
  }
  const Expr tree = parse_infix(a.expr);
  if (!references_within(tree, table.size())) throw ConfigError("expression uses a NUM token beyond --numbers");
  const disturb::Kind kind = disturb::parse_kind(a.kind);
  Rng rng = derive_rng(a.seed, "disturb");
  const auto outcome = disturb::apply(kind, tree, table.size(), rng);
  const ExprValue truth = evaluate(tree, table);
  const Label label = label_against(outcome.tree, truth, table);
  out << "before: " << serialize_infix(tree) << " = " << value_text(truth) << '\n';
  out << "after:  " << serialize_infix(outcome.tree) << " = " << value_text(evaluate(outcome.tree, table)) << '\n';
  out << "kind:   " << disturb::kind_name(outcome.kind) << '\n';
  out << "label:  " << (label == Label::Positive ? "positive" : "negative") << '\n';
  return kExitOk;
}

bool is_usage_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
         dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SyntaxError*>(&e) ||
         dynamic_cast<const MissingNumber*>(&e) || dynamic_cast<const TooSmall*>(&e) ||
         dynamic_cast<const NoAlternative*>(&e);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generate & Rank math word problem solver"};
  app.name(args.empty() ? "genrank" : args.front());
  app.require_subcommand(1);

  SynthArgs synth_a;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset as JSON-lines");
  synth->add_option("--n", synth_a.n, "Number of records")->required();
  synth->add_option("--seed", synth_a.seed, "Random seed");
  synth->add_option("--out", synth_a.out, "Output file (default stdout)");
  synth->add_option("--dist", synth_a.dist, "Probabilities of 1..5 operators, comma separated");

  TrainArgs train_a;
  auto* train = app.add_subcommand("train", "Fine-tune, then jointly train generator and ranker");
  train->add_option("--config", train_a.config, "JSON run config; flags override it");
  train->add_flag("--resume", train_a.resume, "Continue from <out>/checkpoint.bin");
  train->add_option("--stop-after", train_a.stop_after, "Stop after this many epochs")->group("");
  train->add_option("--train", train_a.train, "Training dataset");
  train->add_option("--dev", train_a.dev, "Dev dataset for per-epoch accuracy");
  train->add_option("--out", train_a.out, "Output directory");
  train->add_option("--fold", train_a.fold, "Held-out fold index");
  train->add_option("--folds", train_a.folds, "Fold count (>= 2 enables a held-out dev fold)");
  train->add_option("--strategy", train_a.strategy, "model | model-tree | random-sample");
  train->add_flag("--online,!--no-online", train_a.online, "Rebuild the bank after every joint epoch");
  train->add_flag("--joint,!--two-stage", train_a.joint, "Joint training, or head-only second stage");
  train->add_option("--epochs", train_a.epochs, "Both epoch counts");
  train->add_option("--finetune-epochs", train_a.finetune_epochs);
  train->add_option("--joint-epochs", train_a.joint_epochs);
  train->add_option("--k,--beam-size", train_a.beam_size);
  train->add_option("--bank-size", train_a.bank_size);
  train->add_option("--disturb-count", train_a.disturb_count);
  train->add_option("--pos-ratio", train_a.pos_ratio);
  train->add_option("--gen-batch", train_a.gen_batch);
  train->add_option("--rank-batch", train_a.rank_batch);
  train->add_option("--lr", train_a.lr);
  train->add_option("--weight-decay", train_a.weight_decay);
  train->add_option("--warmup", train_a.warmup);
  train->add_option("--max-grad-norm", train_a.max_grad_norm);
  train->add_option("--gen-weight", train_a.gen_weight);
  train->add_option("--rank-weight", train_a.rank_weight);
  train->add_option("--d-model", train_a.d_model);
  train->add_option("--heads", train_a.heads);
  train->add_option("--d-ff", train_a.d_ff);
  train->add_option("--enc-layers", train_a.enc_layers);
  train->add_option("--dec-layers", train_a.dec_layers);
  train->add_option("--head-hidden", train_a.head_hidden);
  train->add_option("--max-len", train_a.max_len);
  train->add_option("--seed", train_a.seed);
  train->add_option("--jobs", train_a.jobs);

  SolveArgs solve_a;
  auto* solve = app.add_subcommand("solve", "Generate and rank expressions for problems");
  solve->add_option("--checkpoint", solve_a.checkpoint)->required();
  solve->add_option("--text", solve_a.text, "Problem text");
  solve->add_option("--input", solve_a.input, "JSON-lines file with a 'text' field per line");
  solve->add_option("--k", solve_a.k, "Beam size (default from checkpoint)");
  solve->add_option("--max-len", solve_a.max_len);

  EvalArgs eval_a;
  auto* eval = app.add_subcommand("eval", "Evaluate solution accuracy on a dataset");
  eval->add_option("--checkpoint", eval_a.checkpoint)->required();
  eval->add_option("--test", eval_a.test)->required();
  eval->add_option("--report", eval_a.report, "JSON report path");
  eval->add_option("--verdicts", eval_a.verdicts, "Per-problem JSON-lines path");
  eval->add_option("--k", eval_a.k);
  eval->add_option("--max-len", eval_a.max_len);
  eval->add_option("--jobs", eval_a.jobs);
  eval->add_flag("--by-length", eval_a.by_length, "Print accuracy per operator count");

  BankArgs bank_a;
  auto* bank_cmd = app.add_subcommand("bank", "Build and dump an expression bank");
  bank_cmd->add_option("--checkpoint", bank_a.checkpoint);
  bank_cmd->add_option("--data", bank_a.data)->required();
  bank_cmd->add_option("--strategy", bank_a.strategy);
  bank_cmd->add_option("--k", bank_a.k);
  bank_cmd->add_option("--bank-size", bank_a.bank_size);
  bank_cmd->add_option("--disturb-count", bank_a.disturb_count);
  bank_cmd->add_option("--max-len", bank_a.max_len);
  bank_cmd->add_option("--jobs", bank_a.jobs);
  bank_cmd->add_option("--seed", bank_a.seed);
  bank_cmd->add_option("--round", bank_a.round);
  bank_cmd->add_option("--out", bank_a.out, "Output file (default stdout)");

  DisturbArgs disturb_a;
  auto* disturb_cmd = app.add_subcommand("disturb", "Apply one tree disturbance");
  disturb_cmd->add_option("--expr", disturb_a.expr)->required();
  disturb_cmd->add_option("--numbers", disturb_a.numbers, "Comma separated values of NUM0, NUM1, ...")->required();
  disturb_cmd->add_option("--kind", disturb_a.kind, "expand | edit | delete | swap")->required();
  disturb_cmd->add_option("--seed", disturb_a.seed);

  try {
    std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rest.begin(), rest.end());  // CLI11 consumes from the back
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_a, out);
    if (*train) return cmd_train(train_a, out, err);
    if (*solve) return cmd_solve(solve_a, out);
    if (*eval) return cmd_eval(eval_a, out, err);
    if (*bank_cmd) return cmd_bank(bank_a, out, err);
    if (*disturb_cmd) return cmd_disturb(disturb_a, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return is_usage_error(e) ? kExitUsage : kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace genrank::cli
