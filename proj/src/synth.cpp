#include "genrank/synth.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <set>

#include <nlohmann/json.hpp>

#include "genrank/error.hpp"
#include "genrank/rng.hpp"

namespace genrank::synth {

using nlohmann::json;

namespace {

// {name} and {item} are filled per record; {0}..{k} are numbers.
const char* const kRawTemplates[][2] = {
    // one operator
    {"{name} has {0} {item} and buys {1} more {item} . how many {item} does {name} have now ?", "{0} + {1}"},
    {"a box holds {0} {item} . {name} takes {1} {item} out of the box . how many {item} are left in the box ?",
     "{0} - {1}"},
    {"each bag has {0} {item} . there are {1} bags . how many {item} are there in all ?", "{0} * {1}"},
    {"{0} {item} are shared equally among {1} children . how many {item} does each child get ?", "{0} / {1}"},
    {"the shop sold {0} books on monday and {1} books on tuesday . the shop is open {2} hours a day . how many "
     "books were sold in the two days ?",
     "{0} + {1}"},
    {"{name} is {0} years old . the father of {name} is {1} years older . how old is the father ?", "{0} + {1}"},
    {"a farm has {0} cows and {1} sheep . how many more sheep than cows are there ?", "{1} - {0}"},
    {"a car travels {0} km in {1} hours . the car is red and has {2} seats . what is its speed in km per hour ?",
     "{0} / {1}"},
    {"a class has {0} rows of desks with {1} desks in each row . how many desks are in the class ?", "{0} * {1}"},

    // two operators
    {"{name} has {0} {item} . {name} buys {1} more and then gives {2} to a friend . how many {item} does {name} "
     "have now ?",
     "{0} + {1} - {2}"},
    {"each box has {0} {item} . {name} buys {1} boxes and loses {2} {item} . how many {item} does {name} have ?",
     "{0} * {1} - {2}"},
    {"{0} children share {1} {item} and {2} more {item} equally . how many {item} does each child get ?",
     "( {1} + {2} ) / {0}"},
    {"a project is completed in {0} days by {1} workers . if it takes {2} days to complete , how many workers "
     "will it take ?",
     "{0} * {1} / {2}"},
    {"a shop has {0} books . it sells {1} books each day for {2} days . how many books are left ?",
     "{0} - {1} * {2}"},
    {"a train travels {0} km in {1} hours and then {2} km more in the same time . what is its speed in km per "
     "hour ?",
     "( {0} + {2} ) / {1}"},
    {"{name} reads {0} pages a day for {1} days . the book has {2} pages in all . how many pages are left ?",
     "{2} - {0} * {1}"},
    {"a farm has {0} cows . it has {1} times as many sheep as cows and {2} more pigs than sheep . how many pigs "
     "are there ?",
     "{0} * {1} + {2}"},
    {"{name} had {0} {item} . {name} lost {1} {item} and then lost {2} more . the box is blue and has {3} "
     "sides . how many {item} does {name} have now ?",
     "{0} - {1} - {2}"},

    // three operators
    {"{name} has {0} {item} and a friend has {1} {item} . they put them in bags of {2} {item} and sell {3} bags "
     ". how many bags are left ?",
     "( {0} + {1} ) / {2} - {3}"},
    {"a box has {0} rows of {1} {item} . {name} takes {2} {item} and a friend takes {3} {item} . how many {item} "
     "are left in the box ?",
     "{0} * {1} - {2} - {3}"},
    {"a shop sells {0} books on monday , {1} books on tuesday and {2} books on wednesday . each book costs {3} "
     "dollars . how much money did the shop get ?",
     "( {0} + {1} + {2} ) * {3}"},
    {"{0} workers build {1} walls in {2} days . how many walls can {3} workers build in one day ?",
     "{1} / {0} / {2} * {3}"},
    {"a train travels {0} km per hour for {1} hours and {2} km per hour for {3} hours . how far does it travel "
     "in all ?",
     "{0} * {1} + {2} * {3}"},
    {"{name} has {0} dollars . {name} buys {1} books at {2} dollars each and a pen for {3} dollars . how much "
     "money is left ?",
     "{0} - {1} * {2} - {3}"},
    {"a farm has {0} cows and {1} sheep . each animal eats {2} kg of grass a day . how much grass do they eat in "
     "{3} days ?",
     "( {0} + {1} ) * {2} * {3}"},
    {"{0} children share {1} {item} equally . each child then gets {2} more {item} and eats {3} {item} . the "
     "class has {4} desks . how many {item} does each child have now ?",
     "{1} / {0} + {2} - {3}"},

    // four operators
    {"{name} has {0} {item} , a friend has {1} {item} and the teacher has {2} {item} . they share them equally "
     "among {3} children and each child eats {4} {item} . how many {item} does each child have now ?",
     "( {0} + {1} + {2} ) / {3} - {4}"},
    {"a shop has {0} boxes of {1} pens and {2} boxes of {3} pens . it sells {4} pens . how many pens are left ?",
     "{0} * {1} + {2} * {3} - {4}"},
    {"{name} earns {0} dollars a day for {1} days and {2} dollars a day for {3} days . {name} spends {4} dollars "
     ". how much money is left ?",
     "{0} * {1} + {2} * {3} - {4}"},
    {"a box has {0} rows of {1} {item} . {name} eats {2} {item} and a friend eats {3} {item} . the rest are "
     "shared among {4} children . how many {item} does each child get ?",
     "( {0} * {1} - {2} - {3} ) / {4}"},
    {"a farm has {0} cows . it has {1} more sheep than cows and {2} times as many pigs as sheep . it sells {3} "
     "pigs and buys {4} pigs . how many pigs are there now ?",
     "( {0} + {1} ) * {2} - {3} + {4}"},
    {"{0} workers build a wall in {1} days . {2} workers join them and {3} workers leave . the wall is {4} "
     "meters long . how many days will it take them to build the wall ?",
     "{0} * {1} / ( {0} + {2} - {3} )"},
    {"{name} reads {0} pages a day for {1} days and {2} pages a day for {3} days . the book has {4} pages . how "
     "many pages are left ?",
     "{4} - {0} * {1} - {2} * {3}"},
    {"a class has {0} boys and {1} girls . each child brings {2} pens and the teacher brings {3} pens . then "
     "{4} pens are lost . how many pens are there now ?",
     "( {0} + {1} ) * {2} + {3} - {4}"},

    // five operators
    {"a train travels {0} km per hour for {1} hours and {2} km per hour for {3} hours . what is its average "
     "speed in km per hour ?",
     "( {0} * {1} + {2} * {3} ) / ( {1} + {3} )"},
    {"{name} buys {0} bags of {1} {item} and {2} bags of {3} {item} . {name} eats {4} {item} and shares the "
     "rest among {5} children . how many {item} does each child get ?",
     "( {0} * {1} + {2} * {3} - {4} ) / {5}"},
    {"a shop sells {0} books at {1} dollars each and {2} pens at {3} dollars each . it pays {4} dollars for "
     "rent and {5} dollars for light . how much money does it keep ?",
     "{0} * {1} + {2} * {3} - {4} - {5}"},
    {"{name} has {0} dollars . {name} buys {1} books at {2} dollars each and {3} pens at {4} dollars each . "
     "then {name} gets {5} dollars from the father . how much money does {name} have now ?",
     "{0} - {1} * {2} - {3} * {4} + {5}"},
    {"a farm has {0} rows of {1} trees and {2} rows of {3} trees . each tree gives {4} kg of apples . the "
     "apples are put in bags of {5} kg . how many bags are there ?",
     "( {0} * {1} + {2} * {3} ) * {4} / {5}"},
    {"{0} children each have {1} {item} and {2} children each have {3} {item} . they eat {4} {item} each day . "
     "how many days will the {item} last if there are {5} more {item} in a box ?",
     "( {0} * {1} + {2} * {3} + {5} ) / {4}"},
    {"a project is completed in {0} days by {1} workers . after {2} days , {3} more workers join . how many "
     "more days are needed ?",
     "( {0} * {1} - {1} * {2} ) / ( {1} + {3} )"},
    {"{name} has {0} marbles and a friend has {1} marbles . {name} gives {2} marbles to the friend and the "
     "friend gives {3} marbles back . the marbles are kept in {4} boxes . how many more marbles does the friend "
     "have than {name} now ?",
     "( {1} + {2} - {3} ) - ( {0} - {2} + {3} )"},
};

const char* const kNames[] = {"tom", "amy", "ben", "lily", "sam", "kate"};
const char* const kItems[] = {"apples", "pens", "candies", "stickers", "marbles", "cards"};

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

int count_slots(const std::string& text) {
  int n = 0;
  while (text.find("{" + std::to_string(n) + "}") != std::string::npos) ++n;
  return n;
}

std::vector<Template> build_templates() {
  std::vector<Template> out;
  for (const auto& raw : kRawTemplates) {
    Template t;
    t.text = raw[0];
    t.expression = raw[1];
    t.slots = count_slots(t.text);
    std::string probe = t.expression;
    for (int s = 0; s < t.slots; ++s) probe = replace_all(probe, "{" + std::to_string(s) + "}", num_token(s));
    t.op_count = static_cast<int>(parse_infix(probe).op_count());
    out.push_back(std::move(t));
  }
  return out;
}

std::string fill(const std::string& pattern, const std::vector<int>& values, const std::string& name,
                 const std::string& item) {
  std::string s = replace_all(pattern, "{name}", name);
  s = replace_all(s, "{item}", item);
  for (std::size_t i = 0; i < values.size(); ++i) {
    s = replace_all(s, "{" + std::to_string(i) + "}", std::to_string(values[i]));
  }
  return s;
}

[[noreturn]] void format_error(std::size_t line, const std::string& what) {
  throw FormatError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

const std::vector<Template>& templates() {
  static const std::vector<Template> all = build_templates();
  return all;
}

std::vector<ProblemRecord> generate_dataset(std::size_t n, const OpCountDistribution& distribution,
                                            std::uint64_t seed) {
  if (n < 1) throw ConfigError("dataset size must be at least 1");
  double total = 0.0;
  for (double p : distribution) {
    if (p < 0.0 || !std::isfinite(p)) throw ConfigError("operator-count probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("operator-count distribution must sum to 1");

  std::array<std::vector<const Template*>, 5> by_ops;
  for (const auto& t : templates()) by_ops[static_cast<std::size_t>(t.op_count - 1)].push_back(&t);

  std::vector<ProblemRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = derive_rng(seed, "synth", i);
    const double u = uniform_unit(rng);
    std::size_t ops = 0;
    double acc = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      acc += distribution[k];
      if (u < acc || k == 4) {
        ops = k;
        break;
      }
    }
    while (distribution[ops] == 0.0) --ops;  // guard against rounding at the top end
    const Template& t = *by_ops[ops][uniform_index(rng, by_ops[ops].size())];
    const std::string name = kNames[uniform_index(rng, std::size(kNames))];
    const std::string item = kItems[uniform_index(rng, std::size(kItems))];

    // Distinct values keep the value -> NUM mapping unambiguous at load time.
    for (;;) {
      std::vector<int> values;
      std::set<int> used;
      while (static_cast<int>(values.size()) < t.slots) {
        const int v = 2 + static_cast<int>(uniform_index(rng, 99));
        if (used.insert(v).second) values.push_back(v);
      }
      NumberTable table;
      for (int v : values) table.emplace_back(v);
      std::string mapped = t.expression;
      for (int s = 0; s < t.slots; ++s) mapped = replace_all(mapped, "{" + std::to_string(s) + "}", num_token(s));
      const ExprValue value = evaluate(parse_infix(mapped), table);
      if (!value.defined()) continue;
      ProblemRecord rec;
      rec.id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
      rec.text = fill(t.text, values, name, item);
      rec.equation = fill(t.expression, values, name, item);
      rec.answer = to_exact_string(value.value());
      out.push_back(std::move(rec));
      break;
    }
  }
  return out;
}

MappedProblem map_record(const ProblemRecord& record, std::vector<std::string>* warnings) {
  MappedText mapped = map_numbers(record.text);
  std::vector<std::string> eq = tokenize(record.equation);
  // Math23K-style "x = ..." prefix.
  if (eq.size() >= 2 && (eq[0] == "x" || eq[0] == "X") && eq[1] == "=") eq.erase(eq.begin(), eq.begin() + 2);
  for (auto& tok : eq) {
    if (!is_numeral(tok)) continue;
    const Rational v = parse_rational(tok);
    for (std::size_t i = 0; i < mapped.numbers.size(); ++i) {
      if (mapped.numbers[i] == v) {
        tok = num_token(static_cast<int>(i));
        break;
      }
    }
  }
  Expr truth = [&] {
    try {
      return parse_infix(std::span<const std::string>(eq));
    } catch (const SyntaxError& e) {
      throw ParseError("record " + record.id + ": bad equation '" + record.equation + "': " + e.what());
    }
  }();
  if (record.answer && warnings) {
    const ExprValue value = evaluate(truth, mapped.numbers);
    bool consistent = false;
    try {
      consistent = value.defined() && value.value() == parse_rational(*record.answer);
    } catch (const ParseError&) {
    }
    if (!consistent) {
      warnings->push_back("record " + record.id + ": answer " + *record.answer +
                          " disagrees with equation value " + value.to_string() + "; equation kept");
    }
  }
  return MappedProblem{record.id, std::move(mapped.tokens), std::move(mapped.numbers), std::move(truth)};
}

std::vector<ProblemRecord> read_records(std::istream& in) {
  std::vector<ProblemRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      format_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) format_error(line_no, "record is not an object");
    auto str = [&](const char* key) -> std::string {
      if (!j.contains(key) || !j[key].is_string()) format_error(line_no, std::string("missing string field '") + key + "'");
      return j[key].get<std::string>();
    };
    ProblemRecord r{str("id"), str("text"), str("equation"), std::nullopt};
    if (j.contains("answer") && !j["answer"].is_null()) {
      if (j["answer"].is_string()) {
        r.answer = j["answer"].get<std::string>();
      } else if (j["answer"].is_number()) {
        r.answer = j["answer"].dump();
      } else {
        format_error(line_no, "answer must be a string or number");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ProblemRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_records(in);
}

void write_records(std::ostream& out, const std::vector<ProblemRecord>& records) {
  for (const auto& r : records) {
    json j{{"id", r.id}, {"text", r.text}, {"equation", r.equation}};
    j["answer"] = r.answer ? json(*r.answer) : json(nullptr);
    out << j.dump() << '\n';
  }
}

LoadedDataset load_dataset(std::istream& in) {
  LoadedDataset out;
  // Re-read line by line so errors can name the offending line.
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream one(line);
    auto recs = [&] {
      try {
        return read_records(one);
      } catch (const FormatError& e) {
        std::string msg = e.what();
        throw FormatError("line " + std::to_string(line_no) + msg.substr(msg.find(':')));
      }
    }();
    for (const auto& r : recs) {
      try {
        out.problems.push_back(map_record(r, &out.warnings));
      } catch (const ParseError& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_dataset(in);
}

std::vector<int> split_dataset(std::size_t record_count, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds");
  std::vector<std::size_t> order(record_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derive_rng(seed, "folds");
  shuffle_in_place(order, rng);
  std::vector<int> fold(record_count);
  for (std::size_t i = 0; i < order.size(); ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return fold;
}

}  // namespace genrank::synth
