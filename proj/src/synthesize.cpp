#include "cbe/synthesize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cbe/error.hpp"
#include "cbe/rng.hpp"

namespace cbe {

namespace {

enum StreamTag : std::uint64_t { kTextStream = 1, kIdentityStream, kNoiseStream, kPairStream, kSplitStream };

std::string format_id(const char* pattern, std::size_t a, std::size_t b = 0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

// normalize(sum of concept rows + sigma * N(0, I)) rounded to f32.
void emit_row(const ConceptTextEmbeddings& text, const std::vector<std::size_t>& concepts, double noise,
              SplitMix64& rng, std::vector<float>& out) {
  std::vector<double> v(text.dim(), 0.0);
  for (std::size_t c : concepts) {
    const auto row = text.row(c);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += row[k];
  }
  if (noise > 0.0) {
    for (double& x : v) x += noise * rng.gaussian();
  }
  const double norm = l2_norm(v);
  if (!(norm > 0.0)) throw ConfigError("synthetic image embedding has zero norm; increase noise");
  for (double x : v) out.push_back(static_cast<float>(x / norm));
}

SyntheticDataset synth_face(const SynthConfig& cfg, std::uint64_t seed, const ConceptSet& set,
                            const ConceptTextEmbeddings& text) {
  if (cfg.identities < 4) throw ConfigError("face mode needs at least 4 identities");
  if (cfg.images_per_identity < 2) throw ConfigError("face mode needs at least 2 images per identity");
  const auto n_test = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(cfg.test_identity_fraction * static_cast<double>(cfg.identities))));
  if (n_test + 2 > cfg.identities) throw ConfigError("test fraction leaves fewer than 2 training identities");

  SplitMix64 identity_rng(derive_seed(seed, kIdentityStream));
  std::vector<std::vector<std::size_t>> identity_concepts(cfg.identities);
  for (auto& concepts : identity_concepts) {
    for (std::size_t g = 0; g < set.group_count(); ++g) {
      const std::size_t width = set.group_end(g) - set.group_begin(g);
      concepts.push_back(set.group_begin(g) + static_cast<std::size_t>(identity_rng.below(width)));
    }
  }

  SyntheticDataset out;
  SplitMix64 noise_rng(derive_seed(seed, kNoiseStream));
  std::vector<float> data;
  data.reserve(cfg.identities * cfg.images_per_identity * text.dim());
  std::vector<std::size_t> identity_of;
  const std::size_t first_test = cfg.identities - n_test;
  for (std::size_t id = 0; id < cfg.identities; ++id) {
    const std::string label = format_id("id%03zu", id);
    for (std::size_t img = 0; img < cfg.images_per_identity; ++img) {
      emit_row(text, identity_concepts[id], cfg.noise, noise_rng, data);
      out.manifest.push_back({format_id("id%03zu_img%02zu", id, img), label,
                              id >= first_test ? Split::test : Split::train});
      identity_of.push_back(id);
    }
  }
  const std::size_t rows = out.manifest.size();
  out.embeddings = EmbeddingMatrix(rows, text.dim(), std::move(data));

  std::vector<std::pair<std::size_t, std::size_t>> same;
  std::vector<std::pair<std::size_t, std::size_t>> diff;
  for (std::size_t i = 0; i < rows; ++i) {
    if (out.manifest[i].split != Split::test) continue;
    for (std::size_t j = i + 1; j < rows; ++j) {
      if (out.manifest[j].split != Split::test) continue;
      (identity_of[i] == identity_of[j] ? same : diff).emplace_back(i, j);
    }
  }
  SplitMix64 pair_rng(derive_seed(seed, kPairStream));
  shuffle(std::span(same), pair_rng);
  shuffle(std::span(diff), pair_rng);
  const std::size_t per_class = std::min({cfg.pairs_per_class, same.size(), diff.size()});
  for (std::size_t k = 0; k < per_class; ++k) {
    out.pairs.push_back({out.manifest[same[k].first].id, out.manifest[same[k].second].id, true});
    out.pairs.push_back({out.manifest[diff[k].first].id, out.manifest[diff[k].second].id, false});
  }
  return out;
}

SyntheticDataset synth_xray(const SynthConfig& cfg, std::uint64_t seed, const ConceptSet& set,
                            const ConceptTextEmbeddings& text) {
  if (cfg.images < 2) throw ConfigError("xray mode needs at least 2 images");
  if (!(cfg.noise > 0.0)) throw ConfigError("xray mode needs noise > 0 (images may carry no concept)");
  if (cfg.test_fraction <= 0.0 || cfg.test_fraction >= 1.0) throw ConfigError("test fraction must be in (0, 1)");
  const std::size_t marker = cfg.marker.empty() ? 0 : set.index_of(cfg.marker);

  SyntheticDataset out;
  SplitMix64 concept_rng(derive_seed(seed, kIdentityStream));
  SplitMix64 noise_rng(derive_seed(seed, kNoiseStream));
  std::vector<float> data;
  data.reserve(cfg.images * text.dim());
  std::vector<bool> positive(cfg.images);
  for (std::size_t i = 0; i < cfg.images; ++i) {
    std::vector<std::size_t> present;
    std::vector<std::string> present_ids;
    for (std::size_t c = 0; c < set.size(); ++c) {
      const double rate = c == marker ? cfg.positive_rate : cfg.concept_rate;
      if (concept_rng.uniform() < rate) {
        present.push_back(c);
        present_ids.push_back(set.concept_at(c).id);
      }
    }
    positive[i] = std::find(present.begin(), present.end(), marker) != present.end();
    emit_row(text, present, cfg.noise, noise_rng, data);
    const std::string id = format_id("cxr%05zu", i);
    out.concept_labels.emplace(id, std::move(present_ids));
    out.manifest.push_back({id, positive[i] ? "1" : "0", Split::train});
  }
  out.embeddings = EmbeddingMatrix(cfg.images, text.dim(), std::move(data));

  std::vector<std::size_t> order(cfg.images);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 split_rng(derive_seed(seed, kSplitStream));
  shuffle(std::span(order), split_rng);
  const auto n_test = static_cast<std::size_t>(std::ceil(cfg.test_fraction * static_cast<double>(cfg.images)));
  for (std::size_t k = 0; k < n_test; ++k) out.manifest[order[k]].split = Split::test;
  return out;
}

}  // namespace

EmbeddingMatrix synthesize_text_embeddings(const ConceptSet& set, std::size_t dim, std::uint64_t seed) {
  if (set.size() == 0) throw ConfigError("empty concept set");
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
  SplitMix64 rng(derive_seed(seed, kTextStream));
  std::vector<float> data;
  data.reserve(set.size() * dim);
  for (std::size_t c = 0; c < set.size(); ++c) {
    std::vector<double> v(dim);
    double norm = 0.0;
    while (!(norm > 0.0)) {
      for (double& x : v) x = rng.gaussian();
      norm = l2_norm(v);
    }
    for (double x : v) data.push_back(static_cast<float>(x / norm));
  }
  return EmbeddingMatrix(set.size(), dim, std::move(data));
}

SyntheticDataset synthesize_dataset(const SynthConfig& config, std::uint64_t seed, const ConceptSet& set,
                                    const ConceptTextEmbeddings& text) {
  if (set.size() == 0) throw ConfigError("empty concept set");
  if (text.size() != set.size()) throw BindError("text embeddings do not match the concept set");
  if (config.noise < 0.0 || !std::isfinite(config.noise)) throw ConfigError("noise must be finite and >= 0");
  return config.mode == Domain::face ? synth_face(config, seed, set, text) : synth_xray(config, seed, set, text);
}

}  // namespace cbe
