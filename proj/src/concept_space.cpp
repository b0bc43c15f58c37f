#include "cbe/concept_space.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cbe/error.hpp"

namespace cbe {

using json = nlohmann::json;

ConceptSet::ConceptSet(std::vector<ConceptGroup> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw DataError("concept set has no groups");
  std::set<std::string> names;
  offsets_.push_back(0);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& group = groups_[g];
    if (group.concepts.empty()) throw DataError("concept group '" + group.name + "' is empty");
    if (!names.insert(group.name).second) {
      throw DataError("duplicate concept group name '" + group.name + "'");
    }
    for (const auto& c : group.concepts) {
      if (!index_.emplace(c.id, group_of_.size()).second) {
        throw DataError("duplicate concept id '" + c.id + "'");
      }
      group_of_.push_back(g);
    }
    offsets_.push_back(group_of_.size());
  }
}

std::vector<std::string> ConceptSet::ids() const {
  std::vector<std::string> out;
  out.reserve(size());
  for (const auto& g : groups_) {
    for (const auto& c : g.concepts) out.push_back(c.id);
  }
  return out;
}

std::size_t ConceptSet::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown concept id '" + id + "'");
  return it->second;
}

ConceptSet load_concepts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const auto groups_it = doc.find("groups");
  if (groups_it == doc.end() || !groups_it->is_array()) {
    throw DataError(path.string() + ": expected top-level array 'groups'");
  }
  std::vector<ConceptGroup> groups;
  for (const auto& g : *groups_it) {
    if (!g.is_object() || !g.contains("name") || !g["name"].is_string() || !g.contains("concepts") ||
        !g["concepts"].is_array()) {
      throw DataError(path.string() + ": each group needs a string 'name' and an array 'concepts'");
    }
    ConceptGroup group{g["name"].get<std::string>(), {}};
    for (const auto& c : g["concepts"]) {
      if (!c.is_object() || !c.contains("id") || !c["id"].is_string() || !c.contains("text") ||
          !c["text"].is_string()) {
        throw DataError(path.string() + ": concept in group '" + group.name +
                        "' needs string 'id' and 'text'");
      }
      group.concepts.push_back({c["id"].get<std::string>(), c["text"].get<std::string>()});
    }
    groups.push_back(std::move(group));
  }
  return ConceptSet(std::move(groups));
}

void write_concepts(const ConceptSet& set, const std::filesystem::path& path) {
  // Keys are emitted in a fixed order so the file reads naturally.
  std::ostringstream out;
  out << "{\n  \"groups\": [\n";
  for (std::size_t g = 0; g < set.group_count(); ++g) {
    const auto& group = set.groups()[g];
    out << "    {\n      \"name\": " << json(group.name).dump() << ",\n      \"concepts\": [\n";
    for (std::size_t i = 0; i < group.concepts.size(); ++i) {
      const auto& c = group.concepts[i];
      out << "        {\"id\": " << json(c.id).dump() << ", \"text\": " << json(c.text).dump() << "}"
          << (i + 1 < group.concepts.size() ? "," : "") << "\n";
    }
    out << "      ]\n    }" << (g + 1 < set.group_count() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open for writing: " + path.string());
  file << out.str();
  if (!file) throw IoError("write failed: " + path.string());
}

ConceptTextEmbeddings bind_text_embeddings(const ConceptSet& set, const Matrix& matrix) {
  if (matrix.rows != set.size()) {
    throw BindError("text embeddings have " + std::to_string(matrix.rows) + " rows but the concept set has " +
                    std::to_string(set.size()) + " concepts");
  }
  ConceptTextEmbeddings bound;
  bound.rows_ = matrix;
  for (std::size_t i = 0; i < matrix.rows; ++i) {
    auto row = bound.rows_.row(i);
    const double norm = l2_norm(row);
    if (!(norm > 0.0)) {
      throw DataError("text embedding for concept '" + set.concept_at(i).id + "' has zero norm");
    }
    for (double& x : row) x /= norm;
  }
  return bound;
}

ConceptTextEmbeddings bind_text_embeddings(const ConceptSet& set, const EmbeddingMatrix& matrix) {
  Matrix m(matrix.rows(), matrix.dim());
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = matrix.data()[i];
  return bind_text_embeddings(set, m);
}

}  // namespace cbe
