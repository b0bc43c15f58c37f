#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbe/bottleneck.hpp"
#include "cbe/concept_space.hpp"
#include "cbe/embedding_store.hpp"
#include "cbe/losses.hpp"

namespace cbe {

enum class OptimizerKind { adam, adamw };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adamw;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  TensorFlags trainable{};
  std::size_t threads = 1;

  void validate() const;
};

/// AdamW, lr 3e-4, 5 epochs; adapter, w_agg and head trainable.
TrainConfig default_face_train_config();
/// Adam, lr 5e-3, 10 epochs; adapter, w_agg and head trainable.
TrainConfig default_xray_train_config();

struct OptState {
  TensorSet first;
  TensorSet second;
  std::uint64_t step = 0;
};

OptState make_opt_state(const BottleneckParams& params);

/// One Adam/AdamW update of every trainable tensor. AdamW applies the
/// decoupled decay lr * wd * theta before the moment step; Adam folds wd * theta
/// into the gradient. NumericsError naming the tensor on a non-finite gradient.
void optimizer_step(BottleneckParams& params, const TensorSet& grads, OptState& state, const TrainConfig& cfg);

/// Training order for one epoch: a pure function of (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

enum class Objective {
  face,       // cross-entropy over margin logits of the prototype head
  supervised  // w_cls * CE(head . X_emb) + w_concept * concept L1 on raw scores
};

struct SampleSpec {
  std::size_t target = 0;
  std::vector<std::size_t> present;  // supervised only
};

/// Values held constant under differentiation.
struct StopGradient {
  double quality = 0.0;  // adaptive-margin quality indicator
  double l1_max = 0.0;   // concept L1 target level
};

struct SampleLoss {
  double total = 0.0;
  double cls = 0.0;
  double concept_term = 0.0;
};

/// Stop-gradient constants read off a forward pass under current params.
StopGradient stop_gradient(Objective objective, const ForwardCache& cache, const BottleneckParams& params,
                           const LossConfig& loss);

SampleLoss objective_value(Objective objective, const ForwardCache& cache, const SampleSpec& spec,
                           const StopGradient& frozen, const BottleneckParams& params, const LossConfig& loss);

/// objective_value plus accumulation of dL/dtheta (flagged tensors only) into grads.
SampleLoss objective_backward(Objective objective, const ForwardCache& cache, const SampleSpec& spec,
                              const StopGradient& frozen, const ConceptTextEmbeddings& text, const ConceptSet& set,
                              const BottleneckParams& params, const ModelConfig& model, const LossConfig& loss,
                              const TensorFlags& trainable, TensorSet& grads);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double cls_loss = 0.0;
  double concept_loss = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  BottleneckParams params;
  std::vector<EpochLog> log;
};

/// Sorted distinct labels of the given split; ConfigError if a record lacks one.
std::vector<std::string> class_labels(const Dataset& dataset, Split split);

/// Unsupervised-concept verification training: margin-softmax over identities of
/// the train split. ConfigError with fewer than 2 identities or when K differs
/// from the number of train identities.
TrainResult train_face(const Dataset& dataset, const ConceptSet& set, const ConceptTextEmbeddings& text,
                       BottleneckParams params, const ModelConfig& model, const LossConfig& loss,
                       const TrainConfig& train);

/// Concept-supervised diagnosis training on the train split. Records without a
/// concept label entry train with an empty present set; a warning is written to
/// `warnings` when given.
TrainResult train_xray(const Dataset& dataset, const ConceptLabelSet& labels, const ConceptSet& set,
                       const ConceptTextEmbeddings& text, BottleneckParams params, const ModelConfig& model,
                       const LossConfig& loss, const TrainConfig& train, std::ostream* warnings = nullptr);

/// Present-concept indices per record id (DataError on unknown concept ids).
std::vector<std::size_t> present_indices(const ConceptLabelSet& labels, const std::string& id, const ConceptSet& set,
                                         bool* found = nullptr);

/// One {"epoch", "mean_loss", "cls_loss", "concept_loss"} record per line.
std::string format_loss_log(std::span<const EpochLog> log);

}  // namespace cbe
