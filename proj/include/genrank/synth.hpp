#pragma once

// Synthetic word problems and the JSON-lines dataset format.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "genrank/expr.hpp"

namespace genrank::synth {

struct ProblemRecord {
  std::string id;
  std::string text;      // raw, numerals inline
  std::string equation;  // infix over raw numerals
  std::optional<std::string> answer;
};

/// A text pattern with numeric slots {0}, {1}, ... (each appearing once, in
/// increasing order) and an expression pattern over the same slots. Slots
/// absent from the expression are distractor numbers.
struct Template {
  std::string text;
  std::string expression;
  int op_count = 0;
  int slots = 0;
};

const std::vector<Template>& templates();

/// Probability of each operator count 1..5.
using OpCountDistribution = std::array<double, 5>;

/// Throws ConfigError unless n >= 1 and the distribution sums to 1.
std::vector<ProblemRecord> generate_dataset(std::size_t n, const OpCountDistribution& distribution,
                                            std::uint64_t seed);

struct LoadedDataset {
  std::vector<MappedProblem> problems;
  std::vector<std::string> warnings;
};

/// Number-maps one record. Equation numerals become the first NUM token with
/// the same value, or a constant leaf when the text has no such number.
/// Throws ParseError on a bad equation.
MappedProblem map_record(const ProblemRecord& record, std::vector<std::string>* warnings = nullptr);

/// Reads JSON-lines records. Throws FormatError/ParseError naming the line.
std::vector<ProblemRecord> read_records(std::istream& in);
std::vector<ProblemRecord> read_records(const std::filesystem::path& path);
void write_records(std::ostream& out, const std::vector<ProblemRecord>& records);

LoadedDataset load_dataset(const std::filesystem::path& path);
LoadedDataset load_dataset(std::istream& in);

/// Fold index per record: seeded shuffle, then round-robin. Throws ConfigError
/// when folds < 2.
std::vector<int> split_dataset(std::size_t record_count, int folds, std::uint64_t seed);

}  // namespace genrank::synth
