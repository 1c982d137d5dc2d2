#pragma once

// Per-problem expression bank of labeled candidates for ranker training.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genrank/candidate.hpp"
#include "genrank/expr.hpp"
#include "genrank/rng.hpp"

namespace genrank::bank {

enum class Source { Model, ModelPlusTree, RandomSample };

struct Strategy {
  Source source = Source::ModelPlusTree;
  bool online = true;
  friend bool operator==(const Strategy&, const Strategy&) = default;
};

std::string_view source_name(Source s);
/// "model", "model-tree" or "random-sample"; throws ConfigError.
Source parse_source(std::string_view name);

/// One generated sequence as the model produced it.
struct GeneratedSequence {
  std::vector<std::string> tokens;  // without [bos]/[eos]
  double log_prob = 0.0;
};

/// Top-K generator output for a problem, best first.
using Generator = std::function<std::vector<GeneratedSequence>(const MappedProblem&, int k)>;

struct Entry {
  std::string problem_id;
  std::vector<LabeledExpression> positives;  // ground truth first
  std::vector<LabeledExpression> negatives;

  std::size_t size() const { return positives.size() + negatives.size(); }
};

struct BuildMetrics {
  std::size_t generated = 0;
  std::size_t unparseable = 0;
  std::size_t discarded_random = 0;  // random samples referencing absent numbers
};

struct BankConfig {
  Strategy strategy;
  int beam_size = 10;   // K
  int capacity = 20;    // B, ground truth exempt
  int disturb_count = -1;  // < 0 means capacity - beam_size
  int jobs = 1;
};

class ExpressionBank {
 public:
  ExpressionBank() = default;
  ExpressionBank(std::vector<Entry> entries, int capacity) : entries_(std::move(entries)), capacity_(capacity) {}

  const std::vector<Entry>& entries() const { return entries_; }
  int capacity() const { return capacity_; }
  std::size_t positive_count() const;
  std::size_t negative_count() const;
  const BuildMetrics& metrics() const { return metrics_; }
  void set_metrics(BuildMetrics m) { metrics_ = m; }

  /// JSON lines: problem_id, expression, label, provenance, score_hint.
  void dump(std::ostream& out) const;
  std::string dump_string() const;
  /// Inverse of dump; entries follow first appearance order of problem ids.
  static ExpressionBank load(std::istream& in, int capacity);

 private:
  std::vector<Entry> entries_;
  int capacity_ = 0;
  BuildMetrics metrics_;
};

/// Builds every problem's entry. `seed` and `round` fix all randomness so the
/// result only depends on (problems, generator, config, seed, round).
/// Problems are processed independently (optionally on `jobs` threads) and
/// merged in input order.
ExpressionBank build_bank(std::span<const MappedProblem> problems, const Generator& generator,
                          const BankConfig& config, std::uint64_t seed, std::uint64_t round = 0);

/// The candidate list for one problem before truncation, for inspection.
std::vector<LabeledExpression> collect_candidates(const MappedProblem& problem,
                                                  std::span<const MappedProblem> all_problems,
                                                  std::size_t problem_index, const Generator& generator,
                                                  const BankConfig& config, Rng& rng, BuildMetrics& metrics);

struct RankingSample {
  std::size_t problem_index;
  const LabeledExpression* candidate;
};

/// ceil(pos_ratio * batch_size) positives and the rest negatives, each drawn
/// uniformly (with replacement) over all (problem, expression) pairs of that
/// class. An empty class is filled from the other. Throws EmptyBank.
std::vector<RankingSample> sample_ranking_batch(const ExpressionBank& bank, std::size_t batch_size,
                                                double pos_ratio, Rng& rng);

}  // namespace genrank::bank
