#include <doctest.h>

#include <set>
#include <sstream>

#include "genrank/error.hpp"
#include "genrank/synth.hpp"
#include "support.hpp"

using namespace genrank;
using namespace genrank::synth;

namespace {

LoadedDataset load_text(const std::string& text) {
  std::istringstream in(text);
  return load_dataset(in);
}

std::string dump(const std::vector<ProblemRecord>& records) {
  std::ostringstream out;
  write_records(out, records);
  return out.str();
}

}  // namespace

TEST_CASE("templates are well formed") {
  std::set<int> counts;
  for (const auto& t : templates()) {
    CAPTURE(t.expression);
    std::string mapped = t.expression;
    for (int s = 0; s < t.slots; ++s) {
      const std::string slot = "{" + std::to_string(s) + "}";
      CHECK(t.text.find(slot) != std::string::npos);
      for (auto at = mapped.find(slot); at != std::string::npos; at = mapped.find(slot))
        mapped.replace(at, slot.size(), num_token(s));
    }
    const Expr e = parse_infix(mapped);
    CHECK(e.op_count() == t.op_count);
    CHECK(references_within(e, static_cast<std::size_t>(t.slots)));
    counts.insert(t.op_count);
  }
  CHECK(counts == std::set<int>{1, 2, 3, 4, 5});
}

TEST_CASE("generation is deterministic and self-consistent") {
  const OpCountDistribution d{0.2, 0.2, 0.2, 0.2, 0.2};
  CHECK(dump(generate_dataset(1, d, 7)) == dump(generate_dataset(1, d, 7)));
  CHECK(dump(generate_dataset(50, d, 7)) != dump(generate_dataset(50, d, 8)));

  auto records = generate_dataset(300, d, 9);
  for (const auto& r : records) {
    CAPTURE(r.text);
    std::vector<std::string> warnings;
    auto p = map_record(r, &warnings);
    CHECK(warnings.empty());
    auto v = evaluate(p.ground_truth, p.numbers);
    REQUIRE(v.defined());
    CHECK(to_exact_string(v.value()) == *r.answer);
    // The independent text evaluator agrees on the raw equation.
    CHECK(testsupport::oracle_eval_text(r.equation, {}) == testsupport::to_mpq(v.value()));
    for (const auto& n : p.numbers) {
      CHECK(n >= 2);
      CHECK(n <= 100);
    }
  }
}

TEST_CASE("operator-count histogram matches the distribution") {
  const OpCountDistribution d{0.1, 0.3, 0.25, 0.2, 0.15};
  const std::size_t n = 10000;
  auto records = generate_dataset(n, d, 3);
  std::array<int, 5> hist{};
  for (const auto& r : records) ++hist[static_cast<std::size_t>(map_record(r).ground_truth.op_count() - 1)];
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(hist[k] / double(n) - d[k]) < 0.02);

  const OpCountDistribution only_two{0, 1, 0, 0, 0};
  for (const auto& r : generate_dataset(100, only_two, 4)) CHECK(map_record(r).ground_truth.op_count() == 2);
}

TEST_CASE("generation rejects bad arguments") {
  CHECK_THROWS_AS(generate_dataset(0, {1, 0, 0, 0, 0}, 1), ConfigError);
  CHECK_THROWS_AS(generate_dataset(5, {0.5, 0, 0, 0, 0}, 1), ConfigError);
  CHECK_THROWS_AS(generate_dataset(5, {1.5, -0.5, 0, 0, 0}, 1), ConfigError);
}

TEST_CASE("the project/workers record loads as NUM0 * NUM1 / NUM2") {
  auto loaded = load_text(
      R"({"id":"t1","text":"A project is completed in 25 days by 12 workers.  If it takes 20 days to complete, how many workers will it take?","equation":"25 * 12 / 20","answer":"15"})"
      "\n");
  REQUIRE(loaded.problems.size() == 1);
  CHECK(serialize_infix(loaded.problems[0].ground_truth) == "NUM0 * NUM1 / NUM2");
  CHECK(loaded.problems[0].numbers == NumberTable{25, 12, 20});
  CHECK(loaded.warnings.empty());
}

TEST_CASE("loading edge cases") {
  CHECK(load_text("").problems.empty());
  CHECK(load_text("\n  \n").problems.empty());

  auto bad_answer = load_text(R"({"id":"w","text":"add 3 and 4","equation":"3 + 4","answer":"8"})");
  REQUIRE(bad_answer.problems.size() == 1);
  REQUIRE(bad_answer.warnings.size() == 1);
  CHECK(bad_answer.warnings[0].find("w") != std::string::npos);
  CHECK(evaluate(bad_answer.problems[0].ground_truth, bad_answer.problems[0].numbers).value() == 7);

  // Numerals absent from the text become constants; "x =" prefixes are dropped.
  auto constant = load_text(R"({"id":"c","text":"half of 9","equation":"x = 9 * 0.5","answer":4.5})");
  CHECK(serialize_infix(constant.problems[0].ground_truth) == "NUM0 * 0.5");
  CHECK(constant.warnings.empty());

  // Repeated values map to their first occurrence.
  auto repeated = load_text(R"({"id":"r","text":"3 apples and 3 pears","equation":"3 + 3"})");
  CHECK(serialize_infix(repeated.problems[0].ground_truth) == "NUM0 + NUM0");
}

TEST_CASE("malformed lines name the line") {
  auto message = [](const std::string& text) -> std::string {
    try {
      load_text(text);
    } catch (const FormatError& e) {
      return std::string("format:") + e.what();
    } catch (const ParseError& e) {
      return std::string("parse:") + e.what();
    }
    return "ok";
  };
  const std::string good = R"({"id":"a","text":"1 and 2","equation":"1 + 2"})";
  CHECK(message(good + "\n" + good + "\n{nope\n").rfind("format:line 3", 0) == 0);
  CHECK(message(good + "\n" + R"({"id":"b","text":"x"})").rfind("format:line 2", 0) == 0);
  CHECK(message(R"({"id":"b","text":"x","equation":"1 +"})").rfind("parse:line 1", 0) == 0);
  CHECK(message(R"({"id":"b","text":"x","equation":"1","answer":[1]})").rfind("format:line 1", 0) == 0);
}

TEST_CASE("records round-trip through JSON-lines") {
  auto records = generate_dataset(20, {0.2, 0.2, 0.2, 0.2, 0.2}, 5);
  std::istringstream in(dump(records));
  auto back = read_records(in);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].text == records[i].text);
    CHECK(back[i].equation == records[i].equation);
    CHECK(back[i].answer == records[i].answer);
  }
}

TEST_CASE("folds") {
  auto f = split_dataset(10, 5, 1);
  std::array<int, 5> sizes{};
  for (int k : f) ++sizes[static_cast<std::size_t>(k)];
  for (int s : sizes) CHECK(s == 2);
  CHECK(split_dataset(10, 5, 1) == f);
  CHECK(split_dataset(10, 5, 2) != f);

  auto g = split_dataset(23, 4, 3);
  CHECK(g.size() == 23);
  std::array<int, 4> gs{};
  for (int k : g) ++gs[static_cast<std::size_t>(k)];
  CHECK(*std::max_element(gs.begin(), gs.end()) - *std::min_element(gs.begin(), gs.end()) <= 1);
  CHECK_THROWS_AS(split_dataset(10, 1, 1), ConfigError);
}
