#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cbe/bottleneck.hpp"
#include "cbe/concept_space.hpp"
#include "cbe/losses.hpp"

namespace cbe {

/// A trained model plus what is needed to interpret it: the concept ids it was
/// bound to (in enumeration order) and the class label of each head row.
struct Checkpoint {
  std::string task;  // "face" or "xray"
  ModelConfig model;
  LossConfig loss;
  std::vector<std::string> concept_ids;
  std::vector<std::string> class_labels;
  BottleneckParams params;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "CBCK", u32 version, u64 header length, JSON header (config, ids, labels,
/// norm statistics, tensor table with shapes and payload byte offsets), then
/// the tensors as little-endian f32 in table order.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& where = "<memory>");

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// BindError unless the set enumerates exactly the checkpoint's concept ids.
void check_concepts(const Checkpoint& checkpoint, const ConceptSet& set);

}  // namespace cbe
