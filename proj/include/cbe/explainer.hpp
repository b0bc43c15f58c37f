#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cbe/bottleneck.hpp"
#include "cbe/concept_space.hpp"

namespace cbe {

enum class ExplanationKind { match, nonmatch, diagnosis };

std::string to_string(ExplanationKind k);

struct ConceptPick {
  std::size_t index = 0;  // global concept index
  std::string id;
  std::string text;
  double score = 0.0;

  friend bool operator==(const ConceptPick&, const ConceptPick&) = default;
};

/// One explained group. Pair kinds fill both sides; diagnosis fills `ref` only.
struct ExplanationEntry {
  std::size_t group = 0;
  std::string group_name;
  ConceptPick ref;
  std::optional<ConceptPick> probe;
  double divergence = 0.0;  // non-match only

  friend bool operator==(const ExplanationEntry&, const ExplanationEntry&) = default;
};

struct Explanation {
  ExplanationKind kind = ExplanationKind::match;
  std::string decision;
  std::optional<double> similarity;
  std::vector<ExplanationEntry> entries;
  std::size_t k = 0;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

inline constexpr std::size_t kDefaultExplanationK = 4;
inline constexpr double kDefaultDiagnosisThreshold = 0.0;

/// Groups whose softmaxed argmax agrees, strongest shared concept first.
Explanation explain_match(const ConceptScores& ref, const ConceptScores& probe, const ConceptSet& set,
                          std::size_t k = kDefaultExplanationK);

/// Groups ranked by total-variation distance between the two group distributions.
Explanation explain_nonmatch(const ConceptScores& ref, const ConceptScores& probe, const ConceptSet& set,
                             std::size_t k = kDefaultExplanationK);

/// Per-group argmax concepts whose raw score clears `threshold`, by raw score.
Explanation explain_diagnosis(const ConceptScores& scores, const ConceptSet& set, double threshold,
                              const std::string& prediction, std::size_t k = kDefaultExplanationK);

/// Header line plus one line per entry; scores with 4 decimals, ties to even.
std::string render_explanation(const Explanation& x);

/// Single-line JSON record of the structured explanation.
std::string explanation_record(const Explanation& x);

/// Selected concept texts joined with "; " in entry order.
std::string explanation_text(const Explanation& x);

/// Fixed 4-decimal formatting used by the renderer.
std::string format_score(double v);

/// Threshold maximizing micro concept-set F1 of diagnosis selections against
/// the given present sets; lowest threshold on ties, 0 when nothing is selectable.
double calibrate_diagnosis_threshold(const std::vector<ConceptScores>& scores,
                                     const std::vector<std::vector<std::size_t>>& present, const ConceptSet& set);

}  // namespace cbe
