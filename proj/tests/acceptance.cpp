// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// all selected criteria pass. `acceptance 1 5 7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "genrank/cli.hpp"
#include "genrank/disturb.hpp"
#include "genrank/error.hpp"
#include "genrank/pipeline.hpp"
#include "genrank/synth.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace genrank;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("genrank-acceptance-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "genrank");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::vector<MappedProblem> mapped(const std::vector<synth::ProblemRecord>& records) {
  std::vector<MappedProblem> out;
  for (const auto& r : records) out.push_back(synth::map_record(r));
  return out;
}

// 1. Evaluation against the GMP tree walk.
Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng = derive_rng(1, "acceptance-1");
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    auto table = testsupport::random_table(rng, 5);
    Expr t = testsupport::random_tree(rng, 4, 5);
    if (!testsupport::same_value(evaluate(t, testsupport::library_table(table)),
                                 testsupport::oracle_eval_tree(t, table))) {
      ++mismatches;
    }
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 5.0, std::to_string(mismatches) + " mismatches on 1000 trees, " + fmt("%.2f s", s)};
}

// 2. parse(serialize(t)) == t.
Outcome criterion2() {
  Rng rng = derive_rng(2, "acceptance-2");
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    Expr t = testsupport::random_tree(rng, 6, 8);
    try {
      if (!(parse_infix(serialize_infix(t)) == t)) ++mismatches;
    } catch (const Error&) {
      ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches on 1000 trees"};
}

// 3. Disturbance validity, leaf-count deltas and oracle labels.
Outcome criterion3() {
  Rng rng = derive_rng(3, "acceptance-3");
  int bad_tree = 0, bad_delta = 0, bad_label = 0, commutative = 0, bad_commutative = 0;
  for (disturb::Kind kind : disturb::kAllKinds) {
    const int delta = kind == disturb::Kind::Expand ? 1 : kind == disturb::Kind::Delete ? -1 : 0;
    for (int i = 0; i < 500; ++i) {
      const std::size_t n = 2 + uniform_index(rng, 4);
      auto table = testsupport::random_table(rng, n);
      Expr truth = testsupport::random_compound_tree(rng, 4, n);
      auto out = disturb::apply(kind, truth, n, rng);
      const std::string text = serialize_infix(out.tree);
      try {
        if (!(parse_infix(text) == out.tree) || !references_within(out.tree, n)) ++bad_tree;
      } catch (const Error&) {
        ++bad_tree;
      }
      if (static_cast<long>(out.tree.leaf_count()) - static_cast<long>(truth.leaf_count()) != delta) ++bad_delta;
      const auto lib_table = testsupport::library_table(table);
      const Label label = label_against(out.tree, evaluate(truth, lib_table), lib_table);
      const bool oracle = testsupport::oracle_positive(testsupport::oracle_eval_tree(out.tree, table),
                                                       testsupport::oracle_eval_tree(truth, table));
      if ((label == Label::Positive) != oracle) ++bad_label;
      if (kind == disturb::Kind::Swap) {
        const Op op = disturb::node_at(truth, out.site).op();
        // A defined truth stays defined after a commutative swap.
        if ((op == Op::Add || op == Op::Mul) && evaluate(truth, lib_table).defined()) {
          ++commutative;
          if (label != Label::Positive) ++bad_commutative;
        }
      }
    }
  }
  const bool pass = bad_tree + bad_delta + bad_label + bad_commutative == 0 && commutative > 0;
  return {pass, "2000 disturbances: " + std::to_string(bad_tree) + " invalid, " + std::to_string(bad_delta) +
                    " wrong leaf delta, " + std::to_string(bad_label) + " label disagreements, " +
                    std::to_string(bad_commutative) + "/" + std::to_string(commutative) +
                    " commutative swaps not positive"};
}

// 4. Finite differences on both losses.
Outcome criterion4() {
  const auto t0 = Clock::now();
  model::Dims d;
  d.vocab_size = 12;
  d.d_model = 8;
  d.heads = 2;
  d.d_ff = 8;
  d.head_hidden = 8;
  d.enc_layers = 2;
  d.dec_layers = 2;
  Rng rng = derive_rng(4, "acceptance-4");
  auto p = model::ModelParams::initialize(d, rng);
  for (std::size_t t = 0; t < p.tensor_count(); ++t) {
    if (p.info(t).name.find("norm") == std::string::npos) p.tensor(t) *= 4.0;
  }
  auto ids = [&](std::size_t n) {
    std::vector<int> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(4 + static_cast<int>(uniform_index(rng, 8)));
    return out;
  };
  std::vector<model::GenerationExample> gen{{ids(5), ids(3)}, {ids(4), ids(2)}};
  std::vector<model::RankingExample> rank{{ids(5), ids(3), 1}, {ids(3), ids(4), 0}};
  auto g = testsupport::check_gradients(p, [&](const model::ModelParams& q) { return model::generation_loss(q, gen); });
  auto r = testsupport::check_gradients(p, [&](const model::ModelParams& q) { return model::ranking_loss(q, rank); });
  const double s = seconds_since(t0);
  return {g.relative_error < 1e-4 && r.relative_error < 1e-4 && s < 30.0,
          "relative error J_GEN " + fmt("%.2e", g.relative_error) + ", J_RANK " + fmt("%.2e", r.relative_error) +
              " over " + std::to_string(g.entries) + " parameters, " + fmt("%.1f s", s)};
}

// 5. Beam search against exhaustive enumeration. The beam is as wide as the
// candidate set, so the exact top-K is well defined.
Outcome criterion5() {
  const int vocab = 5, max_len = 4;
  const std::vector<int> allowed{Vocab::kEos, 3, 4};
  int seq_mismatch = 0;
  double worst = 0.0;
  for (std::uint64_t draw = 0; draw < 50; ++draw) {
    model::Dims d;
    d.vocab_size = vocab;
    d.d_model = 8;
    d.heads = 2;
    d.d_ff = 8;
    d.enc_layers = 1;
    d.dec_layers = 2;
    Rng rng = derive_rng(draw, "acceptance-5");
    auto p = model::ModelParams::initialize(d, rng);
    p.tensor("generator.w") *= 4.0;
    std::vector<int> src{3, 4, static_cast<int>(3 + uniform_index(rng, 2))};
    const model::Mat mem = model::encode(p, src);

    struct Seq {
      std::vector<int> ids;
      double lp;
    };
    std::vector<Seq> done, frontier{{{}, 0.0}};
    for (int step = 0; step < max_len; ++step) {
      std::vector<Seq> next;
      for (const auto& s : frontier) {
        std::vector<int> prefix{Vocab::kBos};
        prefix.insert(prefix.end(), s.ids.begin(), s.ids.end());
        const model::RowVec probs = model::decode_step(p, mem, prefix);
        for (int id : allowed) {
          Seq c{s.ids, s.lp + std::log(probs(id))};
          c.ids.push_back(id);
          (id == Vocab::kEos ? done : next).push_back(c);
        }
      }
      frontier = std::move(next);
    }
    done.insert(done.end(), frontier.begin(), frontier.end());
    std::sort(done.begin(), done.end(), [](const Seq& a, const Seq& b) {
      return a.lp != b.lp ? a.lp > b.lp : a.ids < b.ids;
    });

    pipeline::BeamOptions o;
    o.beam_size = static_cast<int>(done.size());
    o.max_len = max_len;
    o.banned = {Vocab::kPad, Vocab::kBos};
    auto beam = pipeline::beam_search(p, src, o);
    if (beam.size() != done.size()) {
      ++seq_mismatch;
      continue;
    }
    for (std::size_t i = 0; i < done.size(); ++i) {
      if (beam[i].tokens != done[i].ids) ++seq_mismatch;
      worst = std::max(worst, std::abs(beam[i].log_prob - done[i].lp));
    }
  }
  return {seq_mismatch == 0 && worst <= 1e-9,
          "50 draws x 31 sequences: " + std::to_string(seq_mismatch) + " sequence mismatches, max score error " +
              fmt("%.1e", worst)};
}

// 6. Bank defaults and invariants, offline stability across epochs.
Outcome criterion6() {
  std::vector<std::string> problems_found;
  const bank::BankConfig defaults;
  const pipeline::TrainConfig train_defaults;
  bool pass = defaults.beam_size == 10 && defaults.capacity == 20 && train_defaults.beam_size == 10 &&
              train_defaults.bank_size == 20;

  auto data = mapped(synth::generate_dataset(60, {0.4, 0.4, 0.2, 0, 0}, 6));
  pipeline::TrainConfig c;
  c.finetune_epochs = 2;
  c.joint_epochs = 3;
  c.dims.d_model = 16;
  c.dims.d_ff = 32;
  c.dims.enc_layers = 1;
  c.dims.dec_layers = 1;
  c.dims.head_hidden = 16;
  c.optimizer.learning_rate = 3e-3;
  c.max_len = 12;
  c.strategy.online = false;

  std::size_t violations = 0, entries = 0;
  auto check_bank = [&](const bank::ExpressionBank& b) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& e = b.entries()[i];
      const auto& p = data[i];
      ++entries;
      std::vector<mpq_class> table;
      for (const auto& v : p.numbers) table.push_back(testsupport::to_mpq(v));
      const auto truth = testsupport::oracle_eval_tree(p.ground_truth, table);
      if (e.positives.empty() || e.positives[0].text != serialize_infix(p.ground_truth)) ++violations;
      if (e.size() > static_cast<std::size_t>(b.capacity()) + 1) ++violations;
      std::set<std::string> seen;
      for (const auto* side : {&e.positives, &e.negatives}) {
        for (const auto& x : *side) {
          if (!seen.insert(x.text).second) ++violations;
          const bool positive = testsupport::oracle_positive(testsupport::oracle_eval_tree(x.expr, table), truth);
          if (positive != (x.label == Label::Positive) || positive != (side == &e.positives)) ++violations;
        }
      }
    }
  };

  std::vector<std::string> dumps;
  pipeline::Trainer t(c, Vocab::build(data), data);
  pipeline::TrainHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint&, const bank::ExpressionBank* b) {
    if (b) {
      dumps.push_back(b->dump_string());
      check_bank(*b);
    }
  };
  auto params = t.run(hooks);
  // A fresh online build with the trained model under every source.
  for (bank::Source s : {bank::Source::Model, bank::Source::ModelPlusTree, bank::Source::RandomSample}) {
    bank::BankConfig bc;
    bc.strategy.source = s;
    check_bank(bank::build_bank(data, pipeline::make_generator(params, t.vocab(), c.max_len), bc, 7, 1));
  }
  const bool stable = dumps.size() == 3 && dumps[0] == dumps[1] && dumps[1] == dumps[2];
  pass = pass && violations == 0 && stable;
  return {pass, "K=" + std::to_string(defaults.beam_size) + " B=" + std::to_string(defaults.capacity) + ", " +
                    std::to_string(violations) + " violations over " + std::to_string(entries) +
                    " entries, offline bank " + (stable ? "byte-stable" : "CHANGED") + " over 3 epochs"};
}

// 7. Directional reproduction at desk scale.
struct Scores {
  double ranked, top1, oracle;
};

Outcome criterion7() {
  const auto t0 = Clock::now();
  const auto train = mapped(synth::generate_dataset(2000, {1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 0}, 701));
  const auto test = mapped(synth::generate_dataset(500, {1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 0}, 702));
  const Vocab vocab = Vocab::build(train);

  pipeline::TrainConfig c;
  c.finetune_epochs = 10;
  c.joint_epochs = 10;
  c.dims.d_model = 32;
  c.dims.heads = 4;
  c.dims.d_ff = 64;
  c.dims.enc_layers = 2;
  c.dims.dec_layers = 2;
  c.dims.head_hidden = 32;
  c.optimizer.learning_rate = 1e-3;
  c.rank_batch = 32;
  c.jobs = jobs();

  int a_ok = 0, c_ok = 0;
  bool b_ok = true;
  std::ostringstream rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    c.seed = seed;
    c.strategy.online = true;
    pipeline::Trainer online(c, vocab, train);
    const auto finetuned = online.finetune_generator(online.initial_params());
    const auto on_params = online.joint_train(finetuned);
    c.strategy.online = false;
    pipeline::Trainer offline(c, vocab, train);
    const auto off_params = offline.joint_train(finetuned);

    auto score = [&](const model::ModelParams& p) {
      auto r = pipeline::evaluate_accuracy(p, vocab, test, c.beam_size, c.max_len, c.jobs).overall;
      return Scores{r.accuracy(), r.top1_accuracy(), r.oracle_accuracy()};
    };
    const Scores on = score(on_params), off = score(off_params);
    a_ok += on.ranked >= on.top1;
    b_ok = b_ok && on.oracle >= on.ranked && off.oracle >= off.ranked;
    c_ok += on.ranked >= off.ranked;
    rows << "\n    seed " << seed << ": online G&R " << fmt("%.4f", on.ranked) << " top-1 " << fmt("%.4f", on.top1)
         << " oracle " << fmt("%.4f", on.oracle) << " | offline G&R " << fmt("%.4f", off.ranked) << " top-1 "
         << fmt("%.4f", off.top1) << " oracle " << fmt("%.4f", off.oracle);
  }
  const double s = seconds_since(t0);
  const bool pass = a_ok >= 4 && b_ok && c_ok >= 3 && s < 1800.0;
  return {pass, "(a) G&R >= top-1 in " + std::to_string(a_ok) + "/5, (b) oracle >= G&R " +
                    (b_ok ? "in all runs" : "VIOLATED") + ", (c) online >= offline in " + std::to_string(c_ok) +
                    "/5, " + fmt("%.0f s", s) + rows.str()};
}

std::vector<std::string> tiny_train(const TempDir& d, const std::string& out, int finetune = 3, int joint = 3) {
  return {"train", "--train", d / "train.jsonl", "--out", d / out, "--finetune-epochs", std::to_string(finetune),
          "--joint-epochs", std::to_string(joint),
          "--d-model", "16", "--heads", "2", "--d-ff", "32", "--enc-layers", "1", "--dec-layers", "1",
          "--head-hidden", "16", "--k", "4", "--bank-size", "8", "--max-len", "12", "--lr", "3e-3",
          "--jobs", std::to_string(jobs())};
}

// 8. Two identical training runs give identical bytes.
Outcome criterion8() {
  TempDir d("8");
  if (cli({"synth", "--n", "80", "--seed", "8", "--dist", "0.4,0.4,0.2", "--out", d / "train.jsonl"}) != 0) {
    return {false, "synth failed"};
  }
  if (cli(tiny_train(d, "a")) != 0 || cli(tiny_train(d, "b")) != 0) return {false, "train failed"};
  std::string differing;
  for (const char* f : {"train_log.jsonl", "checkpoint.bin", "bank.jsonl", "model.bin"}) {
    const auto a = slurp(d.path / "a" / f), b = slurp(d.path / "b" / f);
    if (a.empty() || a != b) differing += std::string(" ") + f;
  }
  return {differing.empty(), differing.empty() ? "training log, checkpoint, bank and model byte-identical"
                                               : "differing:" + differing};
}

// 9. The independent script reproduces the report from the verdicts.
Outcome criterion9() {
  TempDir d("9");
  if (cli({"synth", "--n", "300", "--seed", "9", "--dist", "0.34,0.33,0.33", "--out", d / "train.jsonl"}) != 0 ||
      cli({"synth", "--n", "120", "--seed", "10", "--dist", "0.34,0.33,0.33", "--out", d / "test.jsonl"}) != 0) {
    return {false, "synth failed"};
  }
  // Partly trained, so verdicts mix correct and wrong picks.
  if (cli(tiny_train(d, "run", 8, 2)) != 0) return {false, "train failed"};
  if (cli({"eval", "--checkpoint", d / "run/model.bin", "--test", d / "test.jsonl", "--report", d / "report.json",
           "--verdicts", d / "verdicts.jsonl", "--k", "4"}) != 0) {
    return {false, "eval failed"};
  }
  const std::string script = std::string(GENRANK_PYTHON) + " " + GENRANK_RECOMPUTE + " --data " + (d / "test.jsonl") +
                             " --verdicts " + (d / "verdicts.jsonl") + " --report ";
  const int matched = std::system((script + (d / "report.json") + " > " + (d / "match.txt")).c_str());
  auto report = nlohmann::json::parse(slurp(d.path / "report.json"));
  std::string summary = slurp(d.path / "match.txt");
  if (!summary.empty() && summary.back() == '\n') summary.pop_back();

  // A tampered report must be caught, so the script is not vacuous.
  auto tampered = report;
  tampered["by_op_count"].begin().value()["correct"] = tampered["by_op_count"].begin().value()["correct"].get<int>() + 1;
  std::ofstream(d / "tampered.json") << tampered.dump(2);
  const int caught = std::system((script + (d / "tampered.json") + " > /dev/null").c_str());
  const bool pass = matched == 0 && caught != 0;
  return {pass, summary + (caught != 0 ? "; tampered report rejected" : "; tampered report ACCEPTED") + " (G&R " +
                    fmt("%.4f", report["accuracy"].get<double>()) + ", " +
                    std::to_string(report["by_op_count"].size()) + " op-count buckets)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Outcome (*)()> all{criterion1, criterion2, criterion3, criterion4, criterion5,
                                       criterion6, criterion7, criterion8, criterion9};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty()) {
    for (int i = 1; i <= 9; ++i) selected.insert(i);
  }
  bool ok = true;
  for (int n : selected) {
    if (n < 1 || n > 9) continue;
    Outcome o;
    try {
      o = all[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
