#include "cbe/embedding_store.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cbe/error.hpp"
#include "io_util.hpp"

namespace cbe {

namespace {

using io::get_le;
using io::put_le;
using io::slurp;
using io::spill;
using json = nlohmann::json;

constexpr std::array<char, 4> kMagic = {'C', 'B', 'E', 'M'};

// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!record.is_object()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": record is not an object");
    }
    fn(record, lineno);
  }
}

std::string require_string(const json& record, const char* key, const std::string& where) {
  const auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw DataError(where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

void write_lines(const std::vector<json>& records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  spill(out, path);
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<float> data)
    : n_(n), d_(d), data_(std::move(data)) {
  if (n_ == 0 || d_ == 0) throw DataError("embedding matrix must have n >= 1 and d >= 1");
  if (data_.size() != n_ * d_) {
    throw DataError("embedding payload has " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(n_ * d_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw DataError("non-finite embedding value at row " + std::to_string(i / d_) + ", column " +
                      std::to_string(i % d_));
    }
  }
}

void write_cbe(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  if (matrix.rows() == 0 || matrix.dim() == 0) throw DataError("refusing to write an empty matrix");
  std::string bytes;
  bytes.reserve(kCbeHeaderBytes + matrix.data().size() * 4);
  bytes.append(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(bytes, kCbeVersion);
  put_le<std::uint64_t>(bytes, matrix.rows());
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(matrix.dim()));
  for (float v : matrix.data()) put_le<float>(bytes, v);
  spill(bytes, path);
}

EmbeddingMatrix read_cbe(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string where = path.string();
  if (bytes.size() < kCbeHeaderBytes) throw FormatError(where + ": truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError(where + ": bad magic, expected CBEM");
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCbeVersion) {
    throw FormatError(where + ": unsupported version " + std::to_string(version));
  }
  const auto n = get_le<std::uint64_t>(bytes.data() + 8);
  const auto d = get_le<std::uint32_t>(bytes.data() + 16);
  if (n == 0 || d == 0) throw FormatError(where + ": header declares an empty matrix");
  const std::uint64_t payload = bytes.size() - kCbeHeaderBytes;
  if (n > payload / 4 / d || n * d * 4 != payload) {
    throw FormatError(where + ": payload has " + std::to_string(payload) + " bytes, header declares " +
                      std::to_string(n) + "x" + std::to_string(d));
  }
  std::vector<float> data(n * d);
  const char* p = bytes.data() + kCbeHeaderBytes;
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_le<float>(p + 4 * i);
  return EmbeddingMatrix(n, d, std::move(data));
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DataError("unknown split value '" + s + "'");
}

std::vector<RecordMeta> load_manifest(const std::filesystem::path& path) {
  std::vector<RecordMeta> records;
  std::set<std::string> seen;
  for_each_record(path, [&](const json& r, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    RecordMeta meta;
    meta.id = require_string(r, "id", where);
    if (const auto it = r.find("label"); it != r.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError(where + ": label must be a string");
      meta.label = it->get<std::string>();
    }
    meta.split = parse_split(require_string(r, "split", where));
    if (!seen.insert(meta.id).second) throw DataError(where + ": duplicate id '" + meta.id + "'");
    records.push_back(std::move(meta));
  });
  return records;
}

void write_manifest(std::span<const RecordMeta> records, const std::filesystem::path& path) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    json j = {{"id", r.id}, {"split", to_string(r.split)}};
    if (r.label) j["label"] = *r.label;
    lines.push_back(std::move(j));
  }
  write_lines(lines, path);
}

Dataset::Dataset(EmbeddingMatrix matrix, std::vector<RecordMeta> records)
    : matrix_(std::move(matrix)), records_(std::move(records)) {
  if (records_.size() != matrix_.rows()) {
    throw BindError("manifest has " + std::to_string(records_.size()) + " records but matrix has " +
                    std::to_string(matrix_.rows()) + " rows");
  }
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second) {
      throw DataError("duplicate id '" + records_[i].id + "'");
    }
  }
}

std::size_t Dataset::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown record id '" + id + "'");
  return it->second;
}

PairList load_pairs(const std::filesystem::path& path) {
  PairList pairs;
  std::set<std::pair<std::string, std::string>> seen;
  for_each_record(path, [&](const json& r, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    Pair p;
    p.a = require_string(r, "a", where);
    p.b = require_string(r, "b", where);
    const auto it = r.find("same");
    if (it == r.end() || !it->is_boolean()) throw DataError(where + ": missing boolean field 'same'");
    p.same = it->get<bool>();
    if (!seen.emplace(p.a, p.b).second) {
      throw DataError(where + ": duplicate pair (" + p.a + ", " + p.b + ")");
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

void write_pairs(const PairList& pairs, const std::filesystem::path& path) {
  std::vector<json> lines;
  lines.reserve(pairs.size());
  for (const auto& p : pairs) lines.push_back({{"a", p.a}, {"b", p.b}, {"same", p.same}});
  write_lines(lines, path);
}

void validate_pairs(const PairList& pairs, const Dataset& dataset) {
  for (const auto& p : pairs) {
    for (const auto* id : {&p.a, &p.b}) {
      if (!dataset.contains(*id)) throw DataError("pair references unknown id '" + *id + "'");
    }
  }
}

ConceptLabelSet load_concept_labels(const std::filesystem::path& path) {
  ConceptLabelSet labels;
  for_each_record(path, [&](const json& r, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const std::string id = require_string(r, "id", where);
    const auto it = r.find("concepts");
    if (it == r.end() || !it->is_array()) throw DataError(where + ": missing array field 'concepts'");
    std::vector<std::string> concepts;
    for (const auto& c : *it) {
      if (!c.is_string()) throw DataError(where + ": concept ids must be strings");
      concepts.push_back(c.get<std::string>());
    }
    if (!labels.emplace(id, std::move(concepts)).second) {
      throw DataError(where + ": duplicate label record for '" + id + "'");
    }
  });
  return labels;
}

void write_concept_labels(const ConceptLabelSet& labels, std::span<const RecordMeta> order,
                          const std::filesystem::path& path) {
  std::vector<json> lines;
  for (const auto& r : order) {
    const auto it = labels.find(r.id);
    if (it == labels.end()) continue;
    lines.push_back({{"id", r.id}, {"concepts", it->second}});
  }
  write_lines(lines, path);
}

}  // namespace cbe
