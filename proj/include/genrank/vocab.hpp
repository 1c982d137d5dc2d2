#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genrank/expr.hpp"

namespace genrank {

/// Token <-> index map shared by encoder input and decoder output.
/// Indices 0..3 are always [pad], [bos], [eos], [unk].
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab();
  /// Specials, operators, parentheses, NUM0..NUM{max_numbers-1}, then the
  /// word tokens and ground-truth constants of `problems` in sorted order.
  static Vocab build(std::span<const MappedProblem> problems, int min_numbers = 8);
  static Vocab from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  /// Index of a token; kUnk when absent.
  int index(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  /// Stops at the first [eos]; drops [bos] and [pad].
  std::vector<std::string> decode(std::span<const int> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace genrank
