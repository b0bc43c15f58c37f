#include "cbe/checkpoint.hpp"

#include <cmath>

#include <json.hpp>

#include "cbe/error.hpp"
#include "io_util.hpp"

namespace cbe {

namespace {

using json = nlohmann::json;

constexpr std::string_view kMagic = "CBCK";
constexpr std::size_t kPreambleBytes = 4 + 4 + 8;

json model_to_json(const ModelConfig& m) {
  return {{"use_adapter", m.use_adapter}, {"use_group_softmax", m.use_group_softmax},
          {"use_linear", m.use_linear},   {"tau", m.tau},
          {"alpha", m.alpha},             {"d", m.d},
          {"h", m.h},                     {"n_concepts", m.n_concepts},
          {"m", m.m},                     {"k_classes", m.k_classes}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.use_adapter = j.at("use_adapter").get<bool>();
  m.use_group_softmax = j.at("use_group_softmax").get<bool>();
  m.use_linear = j.at("use_linear").get<bool>();
  m.tau = j.at("tau").get<double>();
  m.alpha = j.at("alpha").get<double>();
  m.d = j.at("d").get<std::size_t>();
  m.h = j.at("h").get<std::size_t>();
  m.n_concepts = j.at("n_concepts").get<std::size_t>();
  m.m = j.at("m").get<std::size_t>();
  m.k_classes = j.at("k_classes").get<std::size_t>();
  return m;
}

json loss_to_json(const LossConfig& l) {
  return {{"variant", to_string(l.variant)}, {"margin", l.margin},   {"h", l.h},
          {"scale", l.scale},               {"ema_momentum", l.ema_momentum},
          {"w_cls", l.w_cls},               {"w_concept", l.w_concept}};
}

LossConfig loss_from_json(const json& j) {
  LossConfig l;
  l.variant = parse_margin_variant(j.at("variant").get<std::string>());
  l.margin = j.at("margin").get<double>();
  l.h = j.at("h").get<double>();
  l.scale = j.at("scale").get<double>();
  l.ema_momentum = j.at("ema_momentum").get<double>();
  l.w_cls = j.at("w_cls").get<double>();
  l.w_concept = j.at("w_concept").get<double>();
  return l;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  check_shapes(ck.params, ck.model);
  json table = json::array();
  std::size_t offset = 0;
  for (TensorId id : kAllTensors) {
    const Matrix& m = ck.params.tensors[id];
    const std::size_t bytes = m.size() * 4;
    table.push_back({{"name", tensor_name(id)}, {"shape", {m.rows, m.cols}}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  const json header = {
      {"version", kCheckpointVersion},
      {"task", ck.task},
      {"model", model_to_json(ck.model)},
      {"loss", loss_to_json(ck.loss)},
      {"concept_ids", ck.concept_ids},
      {"class_labels", ck.class_labels},
      {"norm_ema",
       {{"mean", ck.params.norm_ema.mean}, {"std", ck.params.norm_ema.std}, {"updates", ck.params.norm_ema.updates}}},
      {"tensors", table},
  };
  const std::string text = header.dump(1);

  std::string out;
  out.reserve(kPreambleBytes + text.size() + offset);
  out.append(kMagic);
  io::put_le<std::uint32_t>(out, kCheckpointVersion);
  io::put_le<std::uint64_t>(out, text.size());
  out.append(text);
  for (TensorId id : kAllTensors) {
    for (double v : ck.params.tensors[id].data) io::put_le<float>(out, static_cast<float>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& where) {
  if (bytes.size() < kPreambleBytes) throw FormatError(where + ": truncated checkpoint preamble");
  if (bytes.substr(0, 4) != kMagic) throw FormatError(where + ": bad magic, expected CBCK");
  const auto version = io::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw FormatError(where + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = io::get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPreambleBytes) throw FormatError(where + ": truncated checkpoint header");
  const std::string_view payload = bytes.substr(kPreambleBytes + header_len);

  Checkpoint ck;
  try {
    const json header = json::parse(bytes.substr(kPreambleBytes, header_len));
    if (header.at("version").get<std::uint32_t>() != kCheckpointVersion) {
      throw FormatError(where + ": header version disagrees with preamble");
    }
    ck.task = header.at("task").get<std::string>();
    ck.model = model_from_json(header.at("model"));
    ck.loss = loss_from_json(header.at("loss"));
    ck.concept_ids = header.at("concept_ids").get<std::vector<std::string>>();
    ck.class_labels = header.at("class_labels").get<std::vector<std::string>>();
    const json& ema = header.at("norm_ema");
    ck.params.norm_ema = {ema.at("mean").get<double>(), ema.at("std").get<double>(),
                          ema.at("updates").get<std::uint64_t>()};

    const json& table = header.at("tensors");
    if (!table.is_array() || table.size() != kTensorCount) {
      throw FormatError(where + ": tensor table must list " + std::to_string(kTensorCount) + " tensors");
    }
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < kTensorCount; ++i) {
      const json& entry = table[i];
      const auto id = kAllTensors[i];
      if (entry.at("name").get<std::string>() != tensor_name(id)) {
        throw FormatError(where + ": tensor table out of order at '" + entry.at("name").get<std::string>() + "'");
      }
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("bytes").get<std::size_t>();
      if (shape.size() != 2 || nbytes != shape[0] * shape[1] * 4 || offset != expected_offset) {
        throw FormatError(where + ": inconsistent tensor table entry for " + std::string(tensor_name(id)));
      }
      if (offset + nbytes > payload.size()) throw FormatError(where + ": truncated tensor payload");
      Matrix m(shape[0], shape[1]);
      for (std::size_t k = 0; k < m.size(); ++k) {
        const float v = io::get_le<float>(payload.data() + offset + 4 * k);
        if (!std::isfinite(v)) throw DataError(where + ": non-finite value in " + std::string(tensor_name(id)));
        m.data[k] = v;
      }
      ck.params.tensors[id] = std::move(m);
      expected_offset += nbytes;
    }
    if (expected_offset != payload.size()) throw FormatError(where + ": trailing bytes after tensor payload");
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed checkpoint header: " + e.what());
  }
  ck.model.validate();
  check_shapes(ck.params, ck.model);
  if (ck.concept_ids.size() != ck.model.n_concepts || ck.class_labels.size() != ck.model.k_classes) {
    throw FormatError(where + ": concept ids or class labels disagree with model dims");
  }
  return ck;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::spill(encode_checkpoint(checkpoint), path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::slurp(path), path.string());
}

void check_concepts(const Checkpoint& checkpoint, const ConceptSet& set) {
  if (set.ids() != checkpoint.concept_ids) {
    throw BindError("concept set does not match the checkpoint's concept ids (order matters)");
  }
}

}  // namespace cbe
