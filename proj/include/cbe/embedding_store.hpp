#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cbe {

/// n x d row-major 32-bit embeddings. Immutable once loaded; share freely.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Validates n >= 1, d >= 1, data.size() == n*d and finiteness (DataError).
  EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<float> data);

  std::size_t rows() const { return n_; }
  std::size_t dim() const { return d_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<float> data_;
};

/// CBE container: "CBEM", u32 version=1, u64 n, u32 d, n*d little-endian f32.
inline constexpr std::uint32_t kCbeVersion = 1;
inline constexpr std::size_t kCbeHeaderBytes = 4 + 4 + 8 + 4;

void write_cbe(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_cbe(const std::filesystem::path& path);

enum class Split { train, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct RecordMeta {
  std::string id;
  std::optional<std::string> label;
  Split split = Split::train;

  friend bool operator==(const RecordMeta&, const RecordMeta&) = default;
};

/// Line-delimited JSON records {"id", "label"?, "split"}; order preserved.
std::vector<RecordMeta> load_manifest(const std::filesystem::path& path);
void write_manifest(std::span<const RecordMeta> records, const std::filesystem::path& path);

/// Embedding rows bound to their manifest records (row i <-> record i).
class Dataset {
 public:
  /// BindError on count mismatch; DataError on duplicate ids.
  Dataset(EmbeddingMatrix matrix, std::vector<RecordMeta> records);

  const EmbeddingMatrix& embeddings() const { return matrix_; }
  const std::vector<RecordMeta>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Row index for an id; DataError when absent.
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.contains(id); }

 private:
  EmbeddingMatrix matrix_;
  std::vector<RecordMeta> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Pair {
  std::string a;
  std::string b;
  bool same = false;

  friend bool operator==(const Pair&, const Pair&) = default;
};

using PairList = std::vector<Pair>;

/// Records {"a", "b", "same"}; duplicate (a, b) rejected with DataError.
PairList load_pairs(const std::filesystem::path& path);
void write_pairs(const PairList& pairs, const std::filesystem::path& path);
/// DataError naming the first id that does not resolve in the dataset.
void validate_pairs(const PairList& pairs, const Dataset& dataset);

/// Per image id, the concept ids marked present (file order kept).
using ConceptLabelSet = std::map<std::string, std::vector<std::string>>;

/// Records {"id", "concepts": [..]}.
ConceptLabelSet load_concept_labels(const std::filesystem::path& path);
void write_concept_labels(const ConceptLabelSet& labels, std::span<const RecordMeta> order,
                          const std::filesystem::path& path);

}  // namespace cbe
