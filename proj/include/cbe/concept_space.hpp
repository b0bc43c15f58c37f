#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbe/embedding_store.hpp"
#include "cbe/linalg.hpp"

namespace cbe {

struct Concept {
  std::string id;
  std::string text;

  friend bool operator==(const Concept&, const Concept&) = default;
};

struct ConceptGroup {
  std::string name;
  std::vector<Concept> concepts;

  friend bool operator==(const ConceptGroup&, const ConceptGroup&) = default;
};

/// Grouped descriptors. Concepts are enumerated groups-outer, concepts-inner in
/// file order; that enumeration index is what every score vector is aligned to.
class ConceptSet {
 public:
  ConceptSet() = default;
  /// DataError on empty set, empty group, duplicate group name or concept id.
  explicit ConceptSet(std::vector<ConceptGroup> groups);

  std::size_t size() const { return group_of_.size(); }
  std::size_t group_count() const { return groups_.size(); }
  const std::vector<ConceptGroup>& groups() const { return groups_; }

  /// Enumeration index range [begin, end) of group g.
  std::size_t group_begin(std::size_t g) const { return offsets_[g]; }
  std::size_t group_end(std::size_t g) const { return offsets_[g + 1]; }
  std::size_t group_of(std::size_t concept_index) const { return group_of_[concept_index]; }

  const Concept& concept_at(std::size_t i) const {
    return groups_[group_of_[i]].concepts[i - offsets_[group_of_[i]]];
  }
  std::vector<std::string> ids() const;

  /// Enumeration index for an id; DataError when unknown.
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.contains(id); }

  friend bool operator==(const ConceptSet& a, const ConceptSet& b) { return a.groups_ == b.groups_; }

 private:
  std::vector<ConceptGroup> groups_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> group_of_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// JSON document {"groups": [{"name": .., "concepts": [{"id": .., "text": ..}]}]}.
ConceptSet load_concepts(const std::filesystem::path& path);
void write_concepts(const ConceptSet& set, const std::filesystem::path& path);

enum class Domain { face, xray };

/// Shipped descriptor sets: a FISWG-style facial set (19 components) and a
/// chest radiograph set. Identical to data/concepts/*.json.
ConceptSet builtin_concepts(Domain domain);

/// N x d text embeddings aligned to a ConceptSet, every row unit-norm.
class ConceptTextEmbeddings {
 public:
  const Matrix& matrix() const { return rows_; }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }
  std::size_t size() const { return rows_.rows; }
  std::size_t dim() const { return rows_.cols; }

 private:
  Matrix rows_;
  friend ConceptTextEmbeddings bind_text_embeddings(const ConceptSet&, const EmbeddingMatrix&);
  friend ConceptTextEmbeddings bind_text_embeddings(const ConceptSet&, const Matrix&);
};

/// BindError when row count != N; DataError on a zero-norm row.
ConceptTextEmbeddings bind_text_embeddings(const ConceptSet& set, const EmbeddingMatrix& matrix);
ConceptTextEmbeddings bind_text_embeddings(const ConceptSet& set, const Matrix& matrix);

}  // namespace cbe
