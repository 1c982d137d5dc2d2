#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "genrank/expr.hpp"

namespace genrank {

enum class Label { Negative = 0, Positive = 1 };

enum class Provenance { GroundTruth, Model, Disturbance, RandomSample };

std::string_view provenance_name(Provenance p);
/// Inverse of provenance_name; throws FormatError.
Provenance parse_provenance(std::string_view name);

/// A candidate solution for one problem with its correctness label.
struct LabeledExpression {
  Expr expr;
  std::string text;  // serialize_infix(expr), cached for dedup and dumps
  Label label = Label::Negative;
  Provenance provenance = Provenance::Model;
  std::optional<double> score_hint;  // generator log-probability, when known
};

/// Positive iff the candidate evaluates to the same defined value as the
/// ground truth under the problem's number table.
Label label_against(const Expr& candidate, const ExprValue& truth, const NumberTable& table);

LabeledExpression make_labeled(Expr expr, const ExprValue& truth, const NumberTable& table,
                               Provenance provenance,
                               std::optional<double> score_hint = std::nullopt);

}  // namespace genrank
