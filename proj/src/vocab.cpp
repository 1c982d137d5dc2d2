#include "genrank/vocab.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace genrank {

Vocab::Vocab() {
  for (const char* t : {"[pad]", "[bos]", "[eos]", "[unk]"}) add(t);
}

void Vocab::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

namespace {

void collect_constants(const Expr& e, std::set<std::string>& out) {
  if (e.is_leaf()) {
    if (auto* r = std::get_if<Rational>(&e.operand())) out.insert(*to_decimal_string(*r));
    return;
  }
  collect_constants(e.left(), out);
  collect_constants(e.right(), out);
}

}  // namespace

Vocab Vocab::build(std::span<const MappedProblem> problems, int min_numbers) {
  Vocab v;
  for (const char* t : {"+", "-", "*", "/", "(", ")"}) v.add(t);
  std::size_t max_numbers = static_cast<std::size_t>(std::max(min_numbers, 0));
  std::set<std::string> words;
  std::set<std::string> constants;
  for (const auto& p : problems) {
    max_numbers = std::max(max_numbers, p.numbers.size());
    for (const auto& t : p.tokens) {
      if (!parse_num_token(t)) words.insert(t);
    }
    collect_constants(p.ground_truth, constants);
  }
  for (std::size_t i = 0; i < max_numbers; ++i) v.add(num_token(static_cast<int>(i)));
  for (const auto& c : constants) v.add(c);
  for (const auto& w : words) v.add(w);
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  if (tokens.size() < 4 || tokens[0] != "[pad]" || tokens[1] != "[bos]" || tokens[2] != "[eos]" ||
      tokens[3] != "[unk]") {
    throw std::invalid_argument("vocabulary must start with [pad] [bos] [eos] [unk]");
  }
  for (const auto& t : tokens) {
    if (v.index_.contains(t) && v.index_.at(t) >= 4) throw std::invalid_argument("duplicate token " + t);
    v.add(t);
  }
  return v;
}

int Vocab::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    out.push_back(token(id));
  }
  return out;
}

}  // namespace genrank
