#include "genrank/candidate.hpp"

#include "genrank/error.hpp"

namespace genrank {

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::GroundTruth: return "ground-truth";
    case Provenance::Model: return "model";
    case Provenance::Disturbance: return "disturbance";
    case Provenance::RandomSample: return "random-sample";
  }
  return "?";
}

Provenance parse_provenance(std::string_view name) {
  for (auto p : {Provenance::GroundTruth, Provenance::Model, Provenance::Disturbance,
                 Provenance::RandomSample}) {
    if (provenance_name(p) == name) return p;
  }
  throw FormatError("unknown provenance '" + std::string(name) + "'");
}

Label label_against(const Expr& candidate, const ExprValue& truth, const NumberTable& table) {
  return results_equal(evaluate(candidate, table), truth) ? Label::Positive : Label::Negative;
}

LabeledExpression make_labeled(Expr expr, const ExprValue& truth, const NumberTable& table,
                               Provenance provenance, std::optional<double> score_hint) {
  Label label = label_against(expr, truth, table);
  std::string text = serialize_infix(expr);
  return LabeledExpression{std::move(expr), std::move(text), label, provenance, score_hint};
}

}  // namespace genrank
