#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbe/embedding_store.hpp"
#include "cbe/linalg.hpp"

namespace cbe {

struct VerifyResult {
  double accuracy = 0.0;
  double threshold = 0.0;  // lowest optimal; "same" iff sim >= threshold
  std::size_t pairs = 0;
};

using EmbeddingLookup = std::unordered_map<std::string, std::vector<double>>;

/// Cosine similarity per pair; DataError on an id missing from `embeddings`.
std::vector<double> pair_similarities(const EmbeddingLookup& embeddings, const PairList& pairs);

/// Threshold sweep over midpoints of sorted unique similarities plus a
/// sentinel on each side.
VerifyResult verify_accuracy(std::span<const double> sims, const std::vector<bool>& same);
VerifyResult verify_accuracy(const EmbeddingLookup& embeddings, const PairList& pairs);

struct ClassificationReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no positive predictions; reported as 0
  bool recall_undefined = false;     // no positive labels; reported as 0
};

ClassificationReport classification_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels);

struct TextScore {
  double score = 0.0;
  bool empty_input = false;
};

/// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(const std::string& text);

/// LCS-based F1.
TextScore rouge_l(const std::string& candidate, const std::string& reference);

/// Exact-match METEOR: maximum matches, then fewest chunks.
TextScore meteor(const std::string& candidate, const std::string& reference);

/// Fewest chunks among maximum exact alignments of two token sequences.
std::size_t meteor_chunks(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                          std::size_t* matches = nullptr);

struct ZeroShotResult {
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
};

/// Argmax cosine against class-text rows, lowest index on ties. NumericsError
/// on a zero-norm image row.
ZeroShotResult zero_shot_eval(const std::vector<std::vector<double>>& images, const Matrix& class_text,
                              std::span<const std::size_t> labels);

}  // namespace cbe
