#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbe/concept_space.hpp"
#include "cbe/embedding_store.hpp"

namespace cbe {

struct SynthConfig {
  Domain mode = Domain::face;
  std::size_t dim = 256;
  double noise = 0.03;

  // face: identities are one concept drawn per group.
  std::size_t identities = 50;
  std::size_t images_per_identity = 20;
  double test_identity_fraction = 0.2;
  std::size_t pairs_per_class = 300;

  // xray: independent concept draws; the label follows the marker concept.
  std::size_t images = 2000;
  double test_fraction = 0.15;
  double concept_rate = 0.15;
  double positive_rate = 0.4;
  std::string marker;  // empty: first concept in enumeration order
};

struct SyntheticDataset {
  EmbeddingMatrix embeddings;
  std::vector<RecordMeta> manifest;
  PairList pairs;                  // face mode
  ConceptLabelSet concept_labels;  // xray mode
};

/// Random unit-norm text embeddings, one row per concept in enumeration order.
EmbeddingMatrix synthesize_text_embeddings(const ConceptSet& set, std::size_t dim, std::uint64_t seed);

/// Pure function of (config, seed, set, text). ConfigError on an empty set or
/// an impossible configuration.
SyntheticDataset synthesize_dataset(const SynthConfig& config, std::uint64_t seed, const ConceptSet& set,
                                    const ConceptTextEmbeddings& text);

}  // namespace cbe
