#include <doctest.h>

#include <map>
#include <set>

#include "genrank/disturb.hpp"
#include "genrank/error.hpp"
#include "support.hpp"

using namespace genrank;
using namespace genrank::disturb;

namespace {

const Expr kWorkers = parse_infix("NUM0 * NUM1 / NUM2");

// Every outcome reachable from `tree` by `kind`, over many seeds.
std::set<std::string> reachable(Kind kind, const Expr& tree, std::size_t num_count, int draws = 2000) {
  std::set<std::string> out;
  for (int i = 0; i < draws; ++i) {
    Rng rng = derive_rng(static_cast<std::uint64_t>(i), "test-reach");
    out.insert(serialize_infix(apply(kind, tree, num_count, rng).tree));
  }
  return out;
}

MappedProblem problem(const char* truth, NumberTable table) {
  return MappedProblem{"p", {}, std::move(table), parse_infix(std::string_view(truth))};
}

}  // namespace

TEST_CASE("expand") {
  Rng rng = derive_rng(1, "test");
  auto single = expand(Expr::num(0), 2, rng);
  CHECK(single.tree.leaf_count() == 2);
  CHECK(reachable(Kind::Expand, Expr::num(0), 2).count("NUM0 + NUM1"));
  // The enumerated expansions of the NUM2 site include (NUM2 / NUM0).
  CHECK(reachable(Kind::Expand, kWorkers, 3).count("NUM0 * NUM1 / ( NUM2 / NUM0 )"));
  // 3 leaves x 4 ops x 3 numbers x 2 sides = 72, but when the new number
  // equals the leaf both sides give one tree: 3 x 4 coincide.
  CHECK(reachable(Kind::Expand, kWorkers, 3, 8000).size() == 60);
  CHECK_THROWS_AS(expand(kWorkers, 0, rng), NoAlternative);
}

TEST_CASE("edit") {
  auto edits = reachable(Kind::Edit, kWorkers, 3);
  CHECK(edits.count("NUM0 * NUM1 - NUM2"));
  // Leaves: 3 sites x 2 alternatives; operators: 2 sites x 3 alternatives.
  CHECK(edits.size() == 12);
  const NumberTable t{25, 12, 20};
  CHECK(evaluate(parse_infix("NUM0 * NUM1 - NUM2"), t).value() == 280);
  CHECK(label_against(parse_infix("NUM0 * NUM1 - NUM2"), evaluate(kWorkers, t), t) == Label::Negative);

  // A single NUM token has no replacement.
  Rng rng = derive_rng(2, "test");
  CHECK_THROWS_AS(edit(Expr::num(0), 1, rng), NoAlternative);
}

TEST_CASE("delete") {
  auto deletions = reachable(Kind::Delete, kWorkers, 3);
  CHECK(deletions == std::set<std::string>{"NUM0 * NUM1", "NUM1 / NUM2", "NUM0 / NUM2"});
  CHECK(reachable(Kind::Delete, parse_infix("NUM0 + NUM1"), 2) == std::set<std::string>{"NUM0", "NUM1"});
  Rng rng = derive_rng(3, "test");
  CHECK_THROWS_AS(remove_leaf(Expr::num(0), rng), TooSmall);
}

TEST_CASE("swap") {
  auto swaps = reachable(Kind::Swap, kWorkers, 3);
  CHECK(swaps == std::set<std::string>{"NUM2 / ( NUM0 * NUM1 )", "NUM1 * NUM0 / NUM2"});
  Expr root_swapped = parse_infix("NUM2 / ( NUM0 * NUM1 )");
  CHECK(parse_infix(serialize_infix(root_swapped)) == root_swapped);

  const NumberTable t{25, 12};
  Rng rng = derive_rng(4, "test");
  auto plus = swap(parse_infix("NUM0 + NUM1"), rng);
  CHECK(serialize_infix(plus.tree) == "NUM1 + NUM0");
  CHECK(label_against(plus.tree, evaluate(parse_infix("NUM0 + NUM1"), t), t) == Label::Positive);
  auto minus = swap(parse_infix("NUM0 - NUM1"), rng);
  CHECK(evaluate(minus.tree, t).value() == -13);
  CHECK(label_against(minus.tree, evaluate(parse_infix("NUM0 - NUM1"), t), t) == Label::Negative);
  CHECK_THROWS_AS(swap(Expr::num(0), rng), TooSmall);
}

TEST_CASE("sites are uniform over eligible nodes") {
  // Five leaves: each should be expanded about a fifth of the time.
  const Expr tree = parse_infix("NUM0 + NUM1 * NUM2 - NUM3 / NUM4");
  std::map<NodePath, int> hits;
  const int n = 20000;
  Rng rng = derive_rng(5, "test-uniform");
  for (int i = 0; i < n; ++i) ++hits[expand(tree, 5, rng).site];
  REQUIRE(hits.size() == 5);
  for (const auto& [site, count] : hits) CHECK(std::abs(count / double(n) - 0.2) < 0.015);
}

TEST_CASE("outcome site points at the rewritten node") {
  Rng rng = derive_rng(6, "test-site");
  for (int i = 0; i < 200; ++i) {
    Expr tree = testsupport::random_compound_tree(rng, 4, 4);
    auto out = swap(tree, rng);
    const Expr& before = node_at(tree, out.site);
    const Expr& after = node_at(out.tree, out.site);
    REQUIRE_FALSE(before.is_leaf());
    CHECK(after.op() == before.op());
    CHECK(after.left() == before.right());
    CHECK(after.right() == before.left());
  }
}

TEST_CASE("determinism") {
  Rng a = derive_rng(7, "test-det");
  Rng b = derive_rng(7, "test-det");
  for (int i = 0; i < 100; ++i) {
    const Kind k = kAllKinds[static_cast<std::size_t>(i % 4)];
    auto x = apply(k, kWorkers, 3, a);
    auto y = apply(k, kWorkers, 3, b);
    CHECK(x.tree == y.tree);
    CHECK(x.site == y.site);
  }
}

TEST_CASE("disturb_candidates") {
  Rng rng = derive_rng(8, "test-cands");
  auto p = problem("NUM0 * NUM1 / NUM2", {25, 12, 20});
  CHECK(disturb_candidates(p, 0, rng).empty());

  auto plus = problem("NUM0 + NUM1", {4, 9});
  for (int i = 0; i < 50; ++i) {
    for (const auto& c : disturb_candidates(plus, 6, rng)) {
      if (serialize_infix(c.expr) == "NUM1 + NUM0") CHECK(c.label == Label::Positive);
    }
  }

  // Label soundness and dedup over random ground truths.
  for (int i = 0; i < 200; ++i) {
    auto table = testsupport::random_table(rng, 4);
    MappedProblem rp{"r", {}, testsupport::library_table(table), testsupport::random_tree(rng, 4, 4)};
    auto truth = testsupport::oracle_eval_tree(rp.ground_truth, table);
    auto cands = disturb_candidates(rp, 10, rng);
    CHECK(cands.size() <= 10);
    std::set<std::string> seen{serialize_infix(rp.ground_truth)};
    for (const auto& c : cands) {
      CHECK(seen.insert(c.text).second);
      CHECK(c.text == serialize_infix(c.expr));
      CHECK(c.provenance == Provenance::Disturbance);
      const bool positive = testsupport::oracle_positive(testsupport::oracle_eval_tree(c.expr, table), truth);
      CHECK((c.label == Label::Positive) == positive);
    }
  }
}

TEST_CASE("kind names") {
  for (Kind k : kAllKinds) CHECK(parse_kind(kind_name(k)) == k);
  CHECK(kind_name(Kind::Delete) == "delete");
  CHECK_THROWS_AS(parse_kind("shuffle"), ConfigError);
}
