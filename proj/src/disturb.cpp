#include "genrank/disturb.hpp"

#include <functional>
#include <unordered_set>

#include "genrank/error.hpp"

namespace genrank::disturb {

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::Expand: return "expand";
    case Kind::Edit: return "edit";
    case Kind::Delete: return "delete";
    case Kind::Swap: return "swap";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  throw ConfigError("unknown disturbance kind '" + std::string(name) + "'");
}

namespace {

struct Site {
  NodePath path;
  const Expr* node;
};

void collect(const Expr& e, NodePath& path, std::vector<Site>& out) {
  out.push_back({path, &e});
  if (e.is_leaf()) return;
  path.push_back(Step::Left);
  collect(e.left(), path, out);
  path.back() = Step::Right;
  collect(e.right(), path, out);
  path.pop_back();
}

std::vector<Site> sites(const Expr& tree, bool leaves, bool operators) {
  std::vector<Site> all;
  NodePath path;
  collect(tree, path, all);
  std::vector<Site> out;
  for (auto& s : all) {
    if ((s.node->is_leaf() && leaves) || (!s.node->is_leaf() && operators)) out.push_back(std::move(s));
  }
  return out;
}

// Rebuilds the spine from the root down to `path`, substituting `f(node)`.
Expr rewrite_at(const Expr& tree, const NodePath& path, std::size_t depth,
                const std::function<Expr(const Expr&)>& f) {
  if (depth == path.size()) return f(tree);
  if (path[depth] == Step::Left) {
    return Expr::binary(tree.op(), rewrite_at(tree.left(), path, depth + 1, f), tree.right());
  }
  return Expr::binary(tree.op(), tree.left(), rewrite_at(tree.right(), path, depth + 1, f));
}

Expr rewrite_at(const Expr& tree, const NodePath& path, const std::function<Expr(const Expr&)>& f) {
  return rewrite_at(tree, path, 0, f);
}

}  // namespace

const Expr& node_at(const Expr& tree, const NodePath& path) {
  const Expr* e = &tree;
  for (Step s : path) e = s == Step::Left ? &e->left() : &e->right();
  return *e;
}

Outcome expand(const Expr& tree, std::size_t num_count, Rng& rng) {
  if (num_count == 0) throw NoAlternative("expand needs at least one NUM token");
  auto leaves = sites(tree, true, false);
  const Site& site = leaves[uniform_index(rng, leaves.size())];
  const Op op = kAllOps[uniform_index(rng, kAllOps.size())];
  const Expr fresh = Expr::num(static_cast<int>(uniform_index(rng, num_count)));
  const bool fresh_on_right = uniform_index(rng, 2) == 0;
  Expr out = rewrite_at(tree, site.path, [&](const Expr& leaf) {
    return fresh_on_right ? Expr::binary(op, leaf, fresh) : Expr::binary(op, fresh, leaf);
  });
  return {std::move(out), Kind::Expand, site.path};
}

Outcome edit(const Expr& tree, std::size_t num_count, Rng& rng) {
  auto all = sites(tree, true, true);
  const Site& site = all[uniform_index(rng, all.size())];
  const Expr& node = *site.node;
  Expr replacement = node;
  if (node.is_leaf()) {
    std::vector<int> options;
    const auto* current = std::get_if<NumRef>(&node.operand());
    for (std::size_t i = 0; i < num_count; ++i) {
      if (!current || current->index != static_cast<int>(i)) options.push_back(static_cast<int>(i));
    }
    if (options.empty()) throw NoAlternative("no other NUM token to edit a leaf into");
    replacement = Expr::num(options[uniform_index(rng, options.size())]);
  } else {
    std::vector<Op> options;
    for (Op op : kAllOps) {
      if (op != node.op()) options.push_back(op);
    }
    replacement = Expr::binary(options[uniform_index(rng, options.size())], node.left(), node.right());
  }
  Expr out = rewrite_at(tree, site.path, [&](const Expr&) { return replacement; });
  return {std::move(out), Kind::Edit, site.path};
}

Outcome remove_leaf(const Expr& tree, Rng& rng) {
  if (tree.is_leaf()) throw TooSmall("cannot delete from a single-leaf expression");
  auto leaves = sites(tree, true, false);
  const Site& site = leaves[uniform_index(rng, leaves.size())];
  NodePath parent(site.path.begin(), site.path.end() - 1);
  const Step removed = site.path.back();
  Expr out = rewrite_at(tree, parent, [&](const Expr& p) {
    return removed == Step::Left ? p.right() : p.left();
  });
  return {std::move(out), Kind::Delete, site.path};
}

Outcome swap(const Expr& tree, Rng& rng) {
  if (tree.is_leaf()) throw TooSmall("cannot swap children of a single leaf");
  auto ops = sites(tree, false, true);
  const Site& site = ops[uniform_index(rng, ops.size())];
  Expr out = rewrite_at(tree, site.path,
                        [](const Expr& n) { return Expr::binary(n.op(), n.right(), n.left()); });
  return {std::move(out), Kind::Swap, site.path};
}

Outcome apply(Kind kind, const Expr& tree, std::size_t num_count, Rng& rng) {
  switch (kind) {
    case Kind::Expand: return expand(tree, num_count, rng);
    case Kind::Edit: return edit(tree, num_count, rng);
    case Kind::Delete: return remove_leaf(tree, rng);
    case Kind::Swap: return swap(tree, rng);
  }
  throw std::logic_error("bad disturbance kind");
}

std::vector<LabeledExpression> disturb_candidates(const MappedProblem& problem, std::size_t count,
                                                  Rng& rng) {
  std::vector<LabeledExpression> out;
  if (count == 0) return out;
  const ExprValue truth = evaluate(problem.ground_truth, problem.numbers);
  std::unordered_set<std::string> seen{serialize_infix(problem.ground_truth)};
  for (std::size_t n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < kRetryBudget; ++attempt) {
      const Kind kind = kAllKinds[uniform_index(rng, kAllKinds.size())];
      std::optional<Outcome> outcome;
      try {
        outcome = apply(kind, problem.ground_truth, problem.numbers.size(), rng);
      } catch (const NoAlternative&) {
        continue;
      } catch (const TooSmall&) {
        continue;
      }
      auto cand = make_labeled(outcome->tree, truth, problem.numbers, Provenance::Disturbance);
      if (!seen.insert(cand.text).second) continue;
      out.push_back(std::move(cand));
      break;
    }
  }
  return out;
}

}  // namespace genrank::disturb
