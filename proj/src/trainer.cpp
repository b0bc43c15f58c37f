#include "cbe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <json.hpp>

#include "cbe/error.hpp"
#include "cbe/rng.hpp"
#include "parallel.hpp"

namespace cbe {

namespace {

TensorFlags default_trainable() {
  TensorFlags f{};
  for (TensorId id : {TensorId::adapter_w1, TensorId::adapter_b1, TensorId::adapter_w2, TensorId::adapter_b2,
                      TensorId::w_agg, TensorId::head}) {
    f[static_cast<std::size_t>(id)] = true;
  }
  return f;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
}

struct TrainingSet {
  std::vector<std::vector<double>> inputs;
  std::vector<SampleSpec> specs;
};

TrainResult run_training(Objective objective, const TrainingSet& data, const ConceptSet& set,
                         const ConceptTextEmbeddings& text, BottleneckParams params, const ModelConfig& model,
                         const LossConfig& loss, const TrainConfig& train) {
  model.validate();
  loss.validate();
  train.validate();
  check_shapes(params, model);

  const std::size_t n = data.inputs.size();
  const bool track_norms = objective == Objective::face && loss.variant == MarginVariant::adaface;
  OptState state = make_opt_state(params);
  const TensorSet zero_grads = params.tensors.zeros_like();
  TensorSet total = zero_grads;
  const std::size_t threads = std::max<std::size_t>(1, train.threads);
  std::vector<TensorSet> buffers(threads, zero_grads);
  std::vector<SampleLoss> sample_losses(n);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const auto order = epoch_order(n, train.seed, epoch);
    for (std::size_t start = 0; start < n; start += train.batch_size) {
      const std::size_t batch = std::min(train.batch_size, n - start);
      std::vector<ForwardCache> caches(batch);
      parallel_for(batch, threads, [&](std::size_t b) {
        caches[b] = forward(data.inputs[order[start + b]], text, set, params, model);
      });
      if (track_norms) {
        std::vector<double> norms(batch);
        for (std::size_t b = 0; b < batch; ++b) norms[b] = l2_norm(caches[b].x_emb);
        update_norm_ema(params.norm_ema, norms, loss.ema_momentum);
      }

      total.set_zero();
      for (std::size_t wave = 0; wave < batch; wave += threads) {
        const std::size_t width = std::min(threads, batch - wave);
        parallel_for(width, threads, [&](std::size_t t) {
          const std::size_t b = wave + t;
          const std::size_t row = order[start + b];
          buffers[t].set_zero();
          const StopGradient frozen = stop_gradient(objective, caches[b], params, loss);
          sample_losses[row] = objective_backward(objective, caches[b], data.specs[row], frozen, text, set, params,
                                                  model, loss, train.trainable, buffers[t]);
        });
        for (std::size_t t = 0; t < width; ++t) total.add(buffers[t]);
      }
      total.scale(1.0 / static_cast<double>(batch));
      optimizer_step(params, total, state, train);
      for (TensorId id : kAllTensors) {
        if (flag(train.trainable, id)) round_to_float(params.tensors[id].data);
      }
    }

    EpochLog entry{epoch + 1, 0.0, 0.0, 0.0};
    for (const auto& s : sample_losses) {
      entry.mean_loss += s.total;
      entry.cls_loss += s.cls;
      entry.concept_loss += s.concept_term;
    }
    const auto count = static_cast<double>(n);
    entry.mean_loss /= count;
    entry.cls_loss /= count;
    entry.concept_loss /= count;
    result.log.push_back(entry);
  }
  result.params = std::move(params);
  return result;
}

std::vector<double> row_as_double(const EmbeddingMatrix& m, std::size_t row) { return to_double(m.row(row)); }

}  // namespace

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamw"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
}

TrainConfig default_face_train_config() {
  TrainConfig c;
  c.trainable = default_trainable();
  return c;
}

TrainConfig default_xray_train_config() {
  TrainConfig c;
  c.optimizer = OptimizerKind::adam;
  c.lr = 5e-3;
  c.weight_decay = 0.0;
  c.epochs = 10;
  c.trainable = default_trainable();
  return c;
}

OptState make_opt_state(const BottleneckParams& params) {
  return {params.tensors.zeros_like(), params.tensors.zeros_like(), 0};
}

void optimizer_step(BottleneckParams& params, const TensorSet& grads, OptState& state, const TrainConfig& cfg) {
  for (TensorId id : kAllTensors) {
    if (flag(cfg.trainable, id) && !all_finite(grads[id])) {
      throw NumericsError("non-finite gradient for tensor " + std::string(tensor_name(id)));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (TensorId id : kAllTensors) {
    if (!flag(cfg.trainable, id)) continue;
    auto& theta = params.tensors[id].data;
    const auto& g = grads[id].data;
    auto& m = state.first[id].data;
    auto& v = state.second[id].data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double gi = g[i];
      if (cfg.optimizer == OptimizerKind::adamw) {
        theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
      } else {
        gi += cfg.weight_decay * theta[i];
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(derive_seed(seed, 0x5eedULL + epoch));
  shuffle(std::span(order), rng);
  return order;
}

StopGradient stop_gradient(Objective objective, const ForwardCache& cache, const BottleneckParams& params,
                           const LossConfig& loss) {
  StopGradient s;
  if (objective == Objective::face) {
    if (loss.variant == MarginVariant::adaface) {
      s.quality = quality_indicator(l2_norm(cache.x_emb), params.norm_ema, loss.h);
    }
  } else {
    const auto& raw = cache.scores.raw;
    s.l1_max = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  }
  return s;
}

SampleLoss objective_value(Objective objective, const ForwardCache& cache, const SampleSpec& spec,
                           const StopGradient& frozen, const BottleneckParams& params, const LossConfig& loss) {
  SampleLoss out;
  if (objective == Objective::face) {
    out.cls = cross_entropy(margin_logits(cache.x_emb, spec.target, params.head(), loss, frozen.quality), spec.target);
    out.total = out.cls;
  } else {
    out.cls = cross_entropy(linear_logits(cache.x_emb, params.head()), spec.target);
    out.concept_term = concept_l1(cache.scores.raw, spec.present, frozen.l1_max);
    out.total = loss.w_cls * out.cls + loss.w_concept * out.concept_term;
  }
  return out;
}

SampleLoss objective_backward(Objective objective, const ForwardCache& cache, const SampleSpec& spec,
                              const StopGradient& frozen, const ConceptTextEmbeddings& text, const ConceptSet& set,
                              const BottleneckParams& params, const ModelConfig& model, const LossConfig& loss,
                              const TensorFlags& trainable, TensorSet& grads) {
  SampleLoss out;
  const Matrix& head = params.head();
  const std::span<const double> x = cache.x_emb;
  std::vector<double> grad_x(x.size(), 0.0);
  Matrix* grad_head = flag(trainable, TensorId::head) ? &grads[TensorId::head] : nullptr;
  std::vector<double> grad_raw;

  if (objective == Objective::face) {
    const auto logits = margin_logits(x, spec.target, head, loss, frozen.quality);
    out.cls = cross_entropy(logits, spec.target);
    out.total = out.cls;
    const auto grad_logits = cross_entropy_grad(logits, spec.target);
    margin_logits_backward(x, spec.target, head, loss, frozen.quality, grad_logits, grad_x, grad_head);
  } else {
    const auto logits = linear_logits(x, head);
    out.cls = cross_entropy(logits, spec.target);
    out.concept_term = concept_l1(cache.scores.raw, spec.present, frozen.l1_max);
    out.total = loss.w_cls * out.cls + loss.w_concept * out.concept_term;
    auto grad_logits = cross_entropy_grad(logits, spec.target);
    for (double& g : grad_logits) g *= loss.w_cls;
    for (std::size_t k = 0; k < head.rows; ++k) {
      const double g = grad_logits[k];
      if (g == 0.0) continue;
      const auto h_row = head.row(k);
      for (std::size_t c = 0; c < x.size(); ++c) grad_x[c] += g * h_row[c];
      if (grad_head != nullptr) {
        auto g_row = grad_head->row(k);
        for (std::size_t c = 0; c < x.size(); ++c) g_row[c] += g * x[c];
      }
    }
    if (loss.w_concept != 0.0) {
      grad_raw = concept_l1_grad(cache.scores.raw, spec.present, frozen.l1_max);
      for (double& g : grad_raw) g *= loss.w_concept;
    }
  }
  backward(cache, grad_x, grad_raw, text, set, params, model, trainable, grads);
  return out;
}

std::vector<std::string> class_labels(const Dataset& dataset, Split split) {
  std::set<std::string> labels;
  for (const auto& r : dataset.records()) {
    if (r.split != split) continue;
    if (!r.label) throw ConfigError("record '" + r.id + "' has no label");
    labels.insert(*r.label);
  }
  return {labels.begin(), labels.end()};
}

std::vector<std::size_t> present_indices(const ConceptLabelSet& labels, const std::string& id, const ConceptSet& set,
                                         bool* found) {
  std::vector<std::size_t> present;
  const auto it = labels.find(id);
  if (found != nullptr) *found = it != labels.end();
  if (it == labels.end()) return present;
  for (const auto& c : it->second) present.push_back(set.index_of(c));
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  return present;
}

namespace {

std::size_t class_index(const std::vector<std::string>& labels, const std::string& label) {
  return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), label) - labels.begin());
}

}  // namespace

TrainResult train_face(const Dataset& dataset, const ConceptSet& set, const ConceptTextEmbeddings& text,
                       BottleneckParams params, const ModelConfig& model, const LossConfig& loss,
                       const TrainConfig& train) {
  const auto labels = class_labels(dataset, Split::train);
  if (labels.size() < 2) throw ConfigError("face training needs at least 2 train identities");
  if (labels.size() != model.k_classes) {
    throw ConfigError("model has K=" + std::to_string(model.k_classes) + " but the train split has " +
                      std::to_string(labels.size()) + " identities");
  }
  TrainingSet data;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records()[i];
    if (r.split != Split::train) continue;
    data.inputs.push_back(row_as_double(dataset.embeddings(), i));
    data.specs.push_back({class_index(labels, *r.label), {}});
  }
  return run_training(Objective::face, data, set, text, std::move(params), model, loss, train);
}

TrainResult train_xray(const Dataset& dataset, const ConceptLabelSet& concept_labels, const ConceptSet& set,
                       const ConceptTextEmbeddings& text, BottleneckParams params, const ModelConfig& model,
                       const LossConfig& loss, const TrainConfig& train, std::ostream* warnings) {
  const auto labels = class_labels(dataset, Split::train);
  if (labels.size() < 2) throw ConfigError("supervised training needs at least 2 classes in the train split");
  if (labels.size() != model.k_classes) {
    throw ConfigError("model has K=" + std::to_string(model.k_classes) + " but the train split has " +
                      std::to_string(labels.size()) + " classes");
  }
  TrainingSet data;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records()[i];
    if (r.split != Split::train) continue;
    bool found = false;
    auto present = present_indices(concept_labels, r.id, set, &found);
    if (!found) ++missing;
    data.inputs.push_back(row_as_double(dataset.embeddings(), i));
    data.specs.push_back({class_index(labels, *r.label), std::move(present)});
  }
  if (missing > 0 && warnings != nullptr) {
    *warnings << "warning: " << missing << " train record(s) have no concept label entry; trained with no concepts\n";
  }
  return run_training(Objective::supervised, data, set, text, std::move(params), model, loss, train);
}

std::string format_loss_log(std::span<const EpochLog> log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::json j = {
        {"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"cls_loss", e.cls_loss}, {"concept_loss", e.concept_loss}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace cbe
