#pragma once

// Tree-based disturbance: Expand, Edit, Delete and Swap rewrites of a
// ground-truth expression tree.

#include <cstddef>
#include <string_view>
#include <vector>

#include "genrank/candidate.hpp"
#include "genrank/expr.hpp"
#include "genrank/rng.hpp"

namespace genrank::disturb {

enum class Kind { Expand, Edit, Delete, Swap };

inline constexpr std::array<Kind, 4> kAllKinds{Kind::Expand, Kind::Edit, Kind::Delete, Kind::Swap};

std::string_view kind_name(Kind kind);
/// Accepts the lowercase names ("expand", ...). Throws ConfigError.
Kind parse_kind(std::string_view name);

enum class Step { Left, Right };
using NodePath = std::vector<Step>;

struct Outcome {
  Expr tree;
  Kind kind;
  NodePath site;
};

// `num_count` is the size of the problem's number table; new or replacement
// numbers are always NUM tokens of the problem.

/// A uniformly chosen leaf L becomes (L op n) or (n op L).
Outcome expand(const Expr& tree, std::size_t num_count, Rng& rng);
/// A uniformly chosen node changes kind in place. Throws NoAlternative.
Outcome edit(const Expr& tree, std::size_t num_count, Rng& rng);
/// A uniformly chosen leaf is removed and its sibling takes the parent's
/// place. Throws TooSmall on a single leaf.
Outcome remove_leaf(const Expr& tree, Rng& rng);
/// A uniformly chosen operator node exchanges its children. Throws TooSmall.
Outcome swap(const Expr& tree, Rng& rng);

Outcome apply(Kind kind, const Expr& tree, std::size_t num_count, Rng& rng);

inline constexpr int kRetryBudget = 8;

/// `count` independent single disturbances of the ground truth, labeled by
/// numeric comparison. Inapplicable draws and duplicates (of the ground truth
/// or of earlier outcomes) are redrawn up to kRetryBudget times, then skipped.
std::vector<LabeledExpression> disturb_candidates(const MappedProblem& problem, std::size_t count,
                                                  Rng& rng);

/// Subtree addressed by `path`.
const Expr& node_at(const Expr& tree, const NodePath& path);

}  // namespace genrank::disturb
