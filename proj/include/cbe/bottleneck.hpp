#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbe/concept_space.hpp"
#include "cbe/linalg.hpp"

namespace cbe {

/// Trainable tensors, in checkpoint order.
enum class TensorId : std::size_t { alpha, adapter_w1, adapter_b1, adapter_w2, adapter_b2, w_agg, head };
inline constexpr std::size_t kTensorCount = 7;
inline constexpr std::array<TensorId, kTensorCount> kAllTensors = {
    TensorId::alpha,      TensorId::adapter_w1, TensorId::adapter_b1, TensorId::adapter_w2,
    TensorId::adapter_b2, TensorId::w_agg,      TensorId::head};

std::string_view tensor_name(TensorId id);
std::optional<TensorId> parse_tensor_name(std::string_view name);

/// Per-tensor trainable flags, indexed by TensorId.
using TensorFlags = std::array<bool, kTensorCount>;

inline bool flag(const TensorFlags& flags, TensorId id) { return flags[static_cast<std::size_t>(id)]; }

struct ModelConfig {
  bool use_adapter = true;
  bool use_group_softmax = true;
  bool use_linear = true;
  double tau = 100.0;
  double alpha = 0.8;  // initial blend; trained only when flagged

  std::size_t d = 0;           // embedding dimension
  std::size_t h = 0;           // adapter hidden width
  std::size_t n_concepts = 0;  // N
  std::size_t m = 512;         // X_emb width
  std::size_t k_classes = 0;   // K

  /// ConfigError on invalid dims; use_linear=false requires m == N.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// h = max(1, d/4), m = 512 (or N when the linear layer is off).
ModelConfig default_model_config(std::size_t d, std::size_t n_concepts, std::size_t k_classes);

struct TensorSet {
  std::array<Matrix, kTensorCount> tensors;

  Matrix& operator[](TensorId id) { return tensors[static_cast<std::size_t>(id)]; }
  const Matrix& operator[](TensorId id) const { return tensors[static_cast<std::size_t>(id)]; }

  /// Same shapes, all zeros.
  TensorSet zeros_like() const;
  void set_zero();
  void add(const TensorSet& other);
  void scale(double factor);

  friend bool operator==(const TensorSet&, const TensorSet&) = default;
};

/// Running statistics of |X_emb| feeding the adaptive-margin quality proxy.
struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  std::uint64_t updates = 0;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Shapes: alpha 1x1, adapter_w1 d x h, adapter_b1 1 x h, adapter_w2 h x d,
/// adapter_b2 1 x d, w_agg N x m, head K x m.
struct BottleneckParams {
  TensorSet tensors;
  NormStats norm_ema;

  double alpha() const { return tensors[TensorId::alpha].data[0]; }
  const Matrix& w1() const { return tensors[TensorId::adapter_w1]; }
  const Matrix& b1() const { return tensors[TensorId::adapter_b1]; }
  const Matrix& w2() const { return tensors[TensorId::adapter_w2]; }
  const Matrix& b2() const { return tensors[TensorId::adapter_b2]; }
  const Matrix& w_agg() const { return tensors[TensorId::w_agg]; }
  const Matrix& head() const { return tensors[TensorId::head]; }

  friend bool operator==(const BottleneckParams&, const BottleneckParams&) = default;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a splitmix64 stream,
/// zero biases, unit-norm head rows, alpha from the config, entries rounded to f32.
BottleneckParams init_params(std::uint64_t seed, const ModelConfig& config);

/// ShapeError unless params match the config's dims.
void check_shapes(const BottleneckParams& params, const ModelConfig& config);

struct ConceptScores {
  std::vector<double> raw;        // cosine similarities S
  std::vector<double> softmaxed;  // group softmax of S

  std::span<const double> raw_group(const ConceptSet& set, std::size_t g) const {
    return std::span(raw).subspan(set.group_begin(g), set.group_end(g) - set.group_begin(g));
  }
  std::span<const double> softmaxed_group(const ConceptSet& set, std::size_t g) const {
    return std::span(softmaxed).subspan(set.group_begin(g), set.group_end(g) - set.group_begin(g));
  }
};

/// I = alpha * e + (1 - alpha) * F(e), F(e) = W2^T relu(W1^T e + b1) + b2.
/// Returns e unchanged when the adapter is disabled.
std::vector<double> adapt_embedding(std::span<const double> e, const BottleneckParams& params,
                                    const ModelConfig& config);

/// S_j = (I . T_j) / |I|; NumericsError when |I| = 0.
std::vector<double> concept_scores(std::span<const double> image, const ConceptTextEmbeddings& text);

/// Max-shifted softmax of tau * S inside each group.
std::vector<double> group_softmax(std::span<const double> raw, const ConceptSet& set, double tau);

/// X_emb = W_agg^T s, or s itself when the linear layer is off.
std::vector<double> aggregate(std::span<const double> s, const BottleneckParams& params, const ModelConfig& config);

/// Everything backward and the explainer need from one forward pass.
struct ForwardCache {
  std::vector<double> input;       // e
  std::vector<double> hidden_pre;  // W1^T e + b1
  std::vector<double> hidden;      // relu(hidden_pre)
  std::vector<double> adapter_out; // F(e)
  std::vector<double> image;       // I
  ConceptScores scores;
  std::vector<double> x_emb;
};

ForwardCache forward(std::span<const double> e, const ConceptTextEmbeddings& text, const ConceptSet& set,
                     const BottleneckParams& params, const ModelConfig& config);

/// Intermediate gradients, exposed for tests.
struct BackwardTrace {
  std::vector<double> grad_softmaxed;  // dL/dS_sm
  std::vector<double> grad_raw;        // dL/dS, including any direct term
  std::vector<double> grad_image;      // dL/dI
};

/// Accumulates dL/dtheta into `grads` for every tensor flagged in `trainable`,
/// given dL/dX_emb and an optional direct dL/dS (empty span for none). The
/// head tensor is owned by the loss and is not touched here.
/// NumericsError if any produced gradient is non-finite.
BackwardTrace backward(const ForwardCache& cache, std::span<const double> grad_x_emb,
                       std::span<const double> grad_raw_direct, const ConceptTextEmbeddings& text,
                       const ConceptSet& set, const BottleneckParams& params, const ModelConfig& config,
                       const TensorFlags& trainable, TensorSet& grads);

}  // namespace cbe
