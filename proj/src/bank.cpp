#include "genrank/bank.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "genrank/disturb.hpp"
#include "genrank/error.hpp"

namespace genrank::bank {

using nlohmann::json;

std::string_view source_name(Source s) {
  switch (s) {
    case Source::Model: return "model";
    case Source::ModelPlusTree: return "model-tree";
    case Source::RandomSample: return "random-sample";
  }
  return "?";
}

Source parse_source(std::string_view name) {
  for (auto s : {Source::Model, Source::ModelPlusTree, Source::RandomSample}) {
    if (source_name(s) == name) return s;
  }
  throw ConfigError("unknown bank strategy '" + std::string(name) + "'");
}

std::size_t ExpressionBank::positive_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.positives.size();
  return n;
}

std::size_t ExpressionBank::negative_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.negatives.size();
  return n;
}

void ExpressionBank::dump(std::ostream& out) const {
  auto line = [&](const std::string& id, const LabeledExpression& c) {
    json j{{"problem_id", id},
           {"expression", c.text},
           {"label", c.label == Label::Positive ? "positive" : "negative"},
           {"provenance", std::string(provenance_name(c.provenance))}};
    j["score_hint"] = c.score_hint ? json(*c.score_hint) : json(nullptr);
    out << j.dump() << '\n';
  };
  for (const auto& e : entries_) {
    for (const auto& c : e.positives) line(e.problem_id, c);
    for (const auto& c : e.negatives) line(e.problem_id, c);
  }
}

std::string ExpressionBank::dump_string() const {
  std::ostringstream s;
  dump(s);
  return s.str();
}

ExpressionBank ExpressionBank::load(std::istream& in, int capacity) {
  std::vector<Entry> entries;
  std::unordered_map<std::string, std::size_t> where;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(text);
      LabeledExpression c{parse_infix(j.at("expression").get<std::string>()), "", Label::Negative,
                          parse_provenance(j.at("provenance").get<std::string>()), std::nullopt};
      c.text = serialize_infix(c.expr);
      const std::string label = j.at("label").get<std::string>();
      if (label != "positive" && label != "negative") throw FormatError("bad label '" + label + "'");
      c.label = label == "positive" ? Label::Positive : Label::Negative;
      if (j.contains("score_hint") && !j["score_hint"].is_null()) c.score_hint = j["score_hint"].get<double>();
      const std::string id = j.at("problem_id").get<std::string>();
      auto [it, fresh] = where.emplace(id, entries.size());
      if (fresh) entries.push_back(Entry{id, {}, {}});
      Entry& e = entries[it->second];
      (c.label == Label::Positive ? e.positives : e.negatives).push_back(std::move(c));
    } catch (const json::exception& e) {
      throw FormatError("bank line " + std::to_string(line_no) + ": " + e.what());
    } catch (const SyntaxError& e) {
      throw FormatError("bank line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ExpressionBank(std::move(entries), capacity);
}

std::vector<LabeledExpression> collect_candidates(const MappedProblem& problem,
                                                  std::span<const MappedProblem> all_problems,
                                                  std::size_t problem_index, const Generator& generator,
                                                  const BankConfig& config, Rng& rng, BuildMetrics& metrics) {
  const ExprValue truth = evaluate(problem.ground_truth, problem.numbers);
  std::vector<LabeledExpression> out;
  const Source source = config.strategy.source;
  if (source == Source::Model || source == Source::ModelPlusTree) {
    for (auto& seq : generator(problem, config.beam_size)) {
      ++metrics.generated;
      std::optional<Expr> e;
      try {
        e = parse_infix(std::span<const std::string>(seq.tokens));
      } catch (const SyntaxError&) {
        ++metrics.unparseable;
        continue;
      }
      if (!references_within(*e, problem.numbers.size())) {
        ++metrics.unparseable;
        continue;
      }
      out.push_back(make_labeled(std::move(*e), truth, problem.numbers, Provenance::Model, seq.log_prob));
    }
  }
  if (source == Source::ModelPlusTree) {
    const int count = config.disturb_count >= 0 ? config.disturb_count
                                                : std::max(0, config.capacity - config.beam_size);
    for (auto& c : disturb::disturb_candidates(problem, static_cast<std::size_t>(count), rng)) {
      out.push_back(std::move(c));
    }
  }
  if (source == Source::RandomSample && all_problems.size() > 1) {
    for (int n = 0; n < config.capacity; ++n) {
      std::size_t j = uniform_index(rng, all_problems.size() - 1);
      if (j >= problem_index) ++j;
      const Expr& other = all_problems[j].ground_truth;
      if (!references_within(other, problem.numbers.size())) {
        ++metrics.discarded_random;
        continue;
      }
      out.push_back(make_labeled(other, truth, problem.numbers, Provenance::RandomSample));
    }
  }
  return out;
}

namespace {

Entry build_entry(std::span<const MappedProblem> problems, std::size_t index, const Generator& generator,
                  const BankConfig& config, std::uint64_t seed, std::uint64_t round, BuildMetrics& metrics) {
  const MappedProblem& problem = problems[index];
  Rng rng = derive_rng(seed, "bank", round, index);
  auto candidates = collect_candidates(problem, problems, index, generator, config, rng, metrics);

  Entry entry{problem.id, {}, {}};
  const ExprValue truth = evaluate(problem.ground_truth, problem.numbers);
  LabeledExpression gt = make_labeled(problem.ground_truth, truth, problem.numbers, Provenance::GroundTruth);
  std::unordered_set<std::string> seen{gt.text};
  entry.positives.push_back(std::move(gt));
  std::size_t kept = 0;
  for (auto& c : candidates) {
    if (kept >= static_cast<std::size_t>(config.capacity)) break;
    if (!seen.insert(c.text).second) continue;
    ++kept;
    (c.label == Label::Positive ? entry.positives : entry.negatives).push_back(std::move(c));
  }
  return entry;
}

}  // namespace

ExpressionBank build_bank(std::span<const MappedProblem> problems, const Generator& generator,
                          const BankConfig& config, std::uint64_t seed, std::uint64_t round) {
  if (config.beam_size < 1 || config.capacity < 1) throw ConfigError("beam size and bank size must be >= 1");
  std::vector<Entry> entries(problems.size());
  std::vector<BuildMetrics> metrics(problems.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, config.jobs));
  auto work = [&](std::size_t worker) {
    for (std::size_t i = worker; i < problems.size(); i += jobs) {
      entries[i] = build_entry(problems, i, generator, config, seed, round, metrics[i]);
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(work, w);
  }
  BuildMetrics total;
  for (const auto& m : metrics) {
    total.generated += m.generated;
    total.unparseable += m.unparseable;
    total.discarded_random += m.discarded_random;
  }
  ExpressionBank bank(std::move(entries), config.capacity);
  bank.set_metrics(total);
  return bank;
}

std::vector<RankingSample> sample_ranking_batch(const ExpressionBank& bank, std::size_t batch_size,
                                                double pos_ratio, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(pos_ratio > 0.0 && pos_ratio < 1.0)) throw ConfigError("pos_ratio must lie in (0, 1)");
  std::vector<RankingSample> pos;
  std::vector<RankingSample> neg;
  const auto& entries = bank.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (const auto& c : entries[i].positives) pos.push_back({i, &c});
    for (const auto& c : entries[i].negatives) neg.push_back({i, &c});
  }
  if (pos.empty() && neg.empty()) throw EmptyBank("expression bank has no entries");
  std::size_t want_pos = static_cast<std::size_t>(std::ceil(pos_ratio * static_cast<double>(batch_size)));
  if (neg.empty()) want_pos = batch_size;
  if (pos.empty()) want_pos = 0;
  std::vector<RankingSample> out;
  out.reserve(batch_size);
  for (std::size_t n = 0; n < batch_size; ++n) {
    const auto& pool = n < want_pos ? pos : neg;
    out.push_back(pool[uniform_index(rng, pool.size())]);
  }
  return out;
}

}  // namespace genrank::bank
