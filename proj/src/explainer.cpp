#include "cbe/explainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <json.hpp>

#include "cbe/error.hpp"

namespace cbe {

namespace {

std::size_t group_argmax(std::span<const double> scores, const ConceptSet& set, std::size_t g) {
  std::size_t best = set.group_begin(g);
  for (std::size_t i = best + 1; i < set.group_end(g); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

ConceptPick pick(const ConceptSet& set, std::size_t index, double score) {
  const Concept& c = set.concept_at(index);
  return {index, c.id, c.text, score};
}

void require_same_set(const ConceptScores& a, const ConceptScores& b, const ConceptSet& set) {
  for (const ConceptScores* s : {&a, &b}) {
    if (s->raw.size() != set.size() || s->softmaxed.size() != set.size()) {
      throw ShapeError("concept scores do not match the concept set");
    }
  }
}

// Stable sort keeps the group-index order among equal keys.
template <typename Key>
void rank_entries(std::vector<ExplanationEntry>& entries, std::size_t k, Key key) {
  std::stable_sort(entries.begin(), entries.end(),
                   [&](const ExplanationEntry& a, const ExplanationEntry& b) { return key(a) > key(b); });
  if (entries.size() > k) entries.resize(k);
}

nlohmann::json pick_json(const ConceptPick& p) {
  return {{"index", p.index}, {"id", p.id}, {"text", p.text}, {"score", p.score}};
}

}  // namespace

std::string to_string(ExplanationKind k) {
  switch (k) {
    case ExplanationKind::match: return "match";
    case ExplanationKind::nonmatch: return "nonmatch";
    case ExplanationKind::diagnosis: return "diagnosis";
  }
  return "match";
}

Explanation explain_match(const ConceptScores& ref, const ConceptScores& probe, const ConceptSet& set,
                          std::size_t k) {
  require_same_set(ref, probe, set);
  Explanation x{ExplanationKind::match, "match", std::nullopt, {}, k};
  for (std::size_t g = 0; g < set.group_count(); ++g) {
    const std::size_t a = group_argmax(ref.softmaxed, set, g);
    const std::size_t b = group_argmax(probe.softmaxed, set, g);
    if (a != b) continue;
    x.entries.push_back({g, set.groups()[g].name, pick(set, a, ref.softmaxed[a]), pick(set, b, probe.softmaxed[b]), 0.0});
  }
  rank_entries(x.entries, k, [](const ExplanationEntry& e) { return std::min(e.ref.score, e.probe->score); });
  return x;
}

Explanation explain_nonmatch(const ConceptScores& ref, const ConceptScores& probe, const ConceptSet& set,
                             std::size_t k) {
  require_same_set(ref, probe, set);
  Explanation x{ExplanationKind::nonmatch, "non-match", std::nullopt, {}, k};
  for (std::size_t g = 0; g < set.group_count(); ++g) {
    double tv = 0.0;
    for (std::size_t i = set.group_begin(g); i < set.group_end(g); ++i) {
      tv += std::abs(ref.softmaxed[i] - probe.softmaxed[i]);
    }
    const std::size_t a = group_argmax(ref.softmaxed, set, g);
    const std::size_t b = group_argmax(probe.softmaxed, set, g);
    ExplanationEntry e{g, set.groups()[g].name, pick(set, a, ref.softmaxed[a]), pick(set, b, probe.softmaxed[b]), 0.0};
    e.divergence = 0.5 * tv;
    x.entries.push_back(std::move(e));
  }
  rank_entries(x.entries, k, [](const ExplanationEntry& e) { return e.divergence; });
  return x;
}

Explanation explain_diagnosis(const ConceptScores& scores, const ConceptSet& set, double threshold,
                              const std::string& prediction, std::size_t k) {
  if (scores.raw.size() != set.size()) throw ShapeError("concept scores do not match the concept set");
  Explanation x{ExplanationKind::diagnosis, prediction, std::nullopt, {}, k};
  for (std::size_t g = 0; g < set.group_count(); ++g) {
    const std::size_t a = group_argmax(scores.raw, set, g);
    if (scores.raw[a] >= threshold) x.entries.push_back({g, set.groups()[g].name, pick(set, a, scores.raw[a]), std::nullopt, 0.0});
  }
  rank_entries(x.entries, k, [](const ExplanationEntry& e) { return e.ref.score; });
  return x;
}

std::string format_score(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 4);
  return {buf, r.ptr};
}

std::string render_explanation(const Explanation& x) {
  std::string out = "DECISION: " + x.decision + " (similarity=" +
                    (x.similarity ? format_score(*x.similarity) : std::string("n/a")) + ")\n";
  for (std::size_t r = 0; r < x.entries.size(); ++r) {
    const auto& e = x.entries[r];
    out += std::to_string(r + 1) + ". [" + e.group_name + "] ";
    switch (x.kind) {
      case ExplanationKind::match:
        out += e.ref.text + " (ref=" + format_score(e.ref.score) + ", probe=" + format_score(e.probe->score) + ")";
        break;
      case ExplanationKind::nonmatch:
        out += e.ref.text + " vs " + e.probe->text + " (ref=" + format_score(e.ref.score) +
               ", probe=" + format_score(e.probe->score) + ")";
        break;
      case ExplanationKind::diagnosis:
        out += e.ref.text + " (score=" + format_score(e.ref.score) + ")";
        break;
    }
    out += '\n';
  }
  return out;
}

std::string explanation_record(const Explanation& x) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : x.entries) {
    nlohmann::json j = {{"group", e.group}, {"group_name", e.group_name}, {"ref", pick_json(e.ref)}};
    if (e.probe) j["probe"] = pick_json(*e.probe);
    if (x.kind == ExplanationKind::nonmatch) j["divergence"] = e.divergence;
    entries.push_back(std::move(j));
  }
  nlohmann::json j = {{"kind", to_string(x.kind)}, {"decision", x.decision}, {"k", x.k}, {"entries", entries}};
  j["similarity"] = x.similarity ? nlohmann::json(*x.similarity) : nlohmann::json(nullptr);
  return j.dump();
}

std::string explanation_text(const Explanation& x) {
  std::string out;
  for (const auto& e : x.entries) {
    if (!out.empty()) out += "; ";
    out += e.ref.text;
    if (x.kind == ExplanationKind::nonmatch) out += " vs " + e.probe->text;
  }
  return out;
}

double calibrate_diagnosis_threshold(const std::vector<ConceptScores>& scores,
                                     const std::vector<std::vector<std::size_t>>& present, const ConceptSet& set) {
  if (scores.size() != present.size()) throw DataError("score and label counts differ");
  struct Candidate {
    double score;
    bool hit;
  };
  std::vector<Candidate> selectable;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].raw.size() != set.size()) throw ShapeError("concept scores do not match the concept set");
    const std::set<std::size_t> truth(present[i].begin(), present[i].end());
    positives += truth.size();
    for (std::size_t g = 0; g < set.group_count(); ++g) {
      const std::size_t a = group_argmax(scores[i].raw, set, g);
      selectable.push_back({scores[i].raw[a], truth.contains(a)});
    }
  }
  if (selectable.empty()) return kDefaultDiagnosisThreshold;
  std::sort(selectable.begin(), selectable.end(),
            [](const Candidate& a, const Candidate& b) { return a.score < b.score; });

  // Threshold t = selectable[i].score keeps every candidate from i upward.
  std::size_t hits_above = 0;
  for (const auto& c : selectable) hits_above += c.hit ? 1 : 0;
  double best_f1 = -1.0;
  double best_t = kDefaultDiagnosisThreshold;
  for (std::size_t i = 0; i < selectable.size();) {
    const double t = selectable[i].score;
    const std::size_t selected = selectable.size() - i;
    const double denom = static_cast<double>(selected + positives);
    const double f1 = denom > 0.0 ? 2.0 * static_cast<double>(hits_above) / denom : 0.0;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
    for (; i < selectable.size() && selectable[i].score == t; ++i) hits_above -= selectable[i].hit ? 1 : 0;
  }
  return best_t;
}

}  // namespace cbe
