#include "cbe/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cbe/error.hpp"
#include "cbe/rng.hpp"

namespace cbe {

namespace {

constexpr double kKinkGuard = 1e-3;
// Cosine operands shorter than this make the curvature large enough that the
// central-difference truncation error alone can exceed the tolerance.
constexpr double kMinCosineNorm = 0.25;
constexpr int kMaxAttempts = 10000;

std::vector<StopGradient> base_constants(const GradCheckProblem& p) {
  std::vector<StopGradient> out;
  out.reserve(p.inputs.size());
  for (const auto& e : p.inputs) {
    out.push_back(stop_gradient(p.objective, forward(e, p.text, p.set, p.params, p.model), p.params, p.loss));
  }
  return out;
}

double batch_objective(const GradCheckProblem& p, const BottleneckParams& params,
                       const std::vector<StopGradient>& frozen) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.inputs.size(); ++i) {
    const ForwardCache cache = forward(p.inputs[i], p.text, p.set, params, p.model);
    total += objective_value(p.objective, cache, p.specs[i], frozen[i], params, p.loss).total;
  }
  return total / static_cast<double>(p.inputs.size());
}

void fill_gaussian(Matrix& m, SplitMix64& rng, double scale) {
  for (double& x : m.data) x = scale * rng.gaussian();
}

// Rejects instances sitting within kKinkGuard of a non-differentiable point.
bool near_kink(const GradCheckProblem& p, const std::vector<ForwardCache>& caches,
               const std::vector<StopGradient>& frozen) {
  for (std::size_t i = 0; i < caches.size(); ++i) {
    const auto& cache = caches[i];
    if (p.model.use_adapter) {
      for (double v : cache.hidden_pre) {
        if (std::abs(v) < kKinkGuard) return true;
      }
    }
    if (l2_norm(cache.image) < kMinCosineNorm) return true;
    if (p.objective != Objective::face) continue;
    if (l2_norm(cache.x_emb) < kMinCosineNorm) return true;
    const double c = cosine(cache.x_emb, p.params.head().row(p.specs[i].target));
    if (std::abs(c) > 1.0 - kKinkGuard) return true;
    double angular = 0.0;
    if (p.loss.variant == MarginVariant::arcface) angular = p.loss.margin;
    if (p.loss.variant == MarginVariant::adaface) angular = -p.loss.margin * frozen[i].quality;
    if (angular == 0.0) continue;
    const double shifted = std::acos(c) + angular;
    if (std::abs(shifted) < kKinkGuard || std::abs(shifted - std::numbers::pi) < kKinkGuard) return true;
  }
  return false;
}

// With m = 1, or a single concept score, X_emb keeps a fixed direction and the
// cosine head cannot see upstream parameters: those partials are exactly zero
// and the difference quotient returns only cancellation noise.
bool degenerate(const GradCheckProblem& p) {
  if (p.objective != Objective::face) return false;
  if (p.model.m < 2 || p.model.n_concepts < 2) return true;
  for (std::size_t k = 0; k < p.params.head().rows; ++k) {
    if (l2_norm(p.params.head().row(k)) < kMinCosineNorm) return true;
  }
  return false;
}

bool try_build(SplitMix64& rng, CheckedLoss loss, GradCheckProblem& p) {
  const std::size_t d = 2 + rng.below(15);
  const std::size_t groups = 1 + rng.below(4);
  std::vector<ConceptGroup> spec;
  for (std::size_t g = 0; g < groups; ++g) {
    ConceptGroup group{"g" + std::to_string(g), {}};
    const std::size_t size = 1 + rng.below(3);
    for (std::size_t c = 0; c < size; ++c) {
      const std::string id = group.name + ".c" + std::to_string(c);
      group.concepts.push_back({id, id});
    }
    spec.push_back(std::move(group));
  }
  p.set = ConceptSet(std::move(spec));
  const std::size_t n = p.set.size();

  Matrix text(n, d);
  fill_gaussian(text, rng, 1.0);
  p.text = bind_text_embeddings(p.set, text);

  ModelConfig& model = p.model;
  model = ModelConfig{};
  model.d = d;
  model.h = 1 + rng.below(4);
  model.n_concepts = n;
  model.k_classes = 2 + rng.below(4);
  model.use_adapter = rng.below(2) == 1;
  model.use_group_softmax = rng.below(2) == 1;
  model.use_linear = rng.below(2) == 1;
  model.m = model.use_linear ? 1 + rng.below(8) : n;
  model.tau = rng.uniform(0.5, 3.0);
  const double pick = rng.uniform();
  model.alpha = pick < 0.1 ? 1.0 : pick < 0.2 ? 0.0 : rng.uniform(0.1, 0.9);

  BottleneckParams& params = p.params;
  params = BottleneckParams{};
  auto& t = params.tensors;
  t[TensorId::alpha] = Matrix(1, 1, model.alpha);
  t[TensorId::adapter_w1] = Matrix(d, model.h);
  t[TensorId::adapter_b1] = Matrix(1, model.h);
  t[TensorId::adapter_w2] = Matrix(model.h, d);
  t[TensorId::adapter_b2] = Matrix(1, d);
  t[TensorId::w_agg] = Matrix(n, model.m);
  t[TensorId::head] = Matrix(model.k_classes, model.m);
  for (TensorId id : kAllTensors) {
    if (id != TensorId::alpha) fill_gaussian(t[id], rng, 0.5);
  }
  params.norm_ema = {rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), 1};

  LossConfig& cfg = p.loss;
  cfg = LossConfig{};
  cfg.scale = rng.uniform(1.0, 4.0);
  cfg.margin = rng.uniform(0.1, 0.6);
  cfg.h = rng.uniform(0.2, 1.0);
  p.objective = loss == CheckedLoss::supervised ? Objective::supervised : Objective::face;
  switch (loss) {
    case CheckedLoss::adaface: cfg.variant = MarginVariant::adaface; break;
    case CheckedLoss::arcface: cfg.variant = MarginVariant::arcface; break;
    case CheckedLoss::cosface: cfg.variant = MarginVariant::cosface; break;
    case CheckedLoss::plain: cfg.variant = MarginVariant::plain; break;
    case CheckedLoss::supervised: cfg.variant = MarginVariant::plain; break;
  }

  const std::size_t batch = 1 + rng.below(3);
  p.inputs.assign(batch, std::vector<double>(d));
  p.specs.assign(batch, SampleSpec{});
  std::vector<ForwardCache> caches;
  for (std::size_t i = 0; i < batch; ++i) {
    for (double& x : p.inputs[i]) x = rng.gaussian();
    p.specs[i].target = rng.below(model.k_classes);
    caches.push_back(forward(p.inputs[i], p.text, p.set, params, model));
    if (p.objective == Objective::supervised) {
      const auto& raw = caches.back().scores.raw;
      const double top = *std::max_element(raw.begin(), raw.end());
      for (std::size_t j = 0; j < n; ++j) {
        if (raw[j] < top - kKinkGuard && rng.below(2) == 1) p.specs[i].present.push_back(j);
      }
    }
  }

  p.trainable.fill(true);
  if (rng.uniform() < 0.2) p.trainable[rng.below(kTensorCount)] = false;

  std::vector<StopGradient> frozen;
  for (const auto& c : caches) frozen.push_back(stop_gradient(p.objective, c, params, cfg));
  return !degenerate(p) && !near_kink(p, caches, frozen);
}

}  // namespace

std::string to_string(CheckedLoss l) {
  switch (l) {
    case CheckedLoss::adaface: return "adaface";
    case CheckedLoss::arcface: return "arcface";
    case CheckedLoss::cosface: return "cosface";
    case CheckedLoss::plain: return "plain";
    case CheckedLoss::supervised: return "supervised";
  }
  return "plain";
}

CheckedLoss parse_checked_loss(const std::string& s) {
  for (CheckedLoss l : {CheckedLoss::adaface, CheckedLoss::arcface, CheckedLoss::cosface, CheckedLoss::plain,
                        CheckedLoss::supervised}) {
    if (to_string(l) == s) return l;
  }
  throw ConfigError("unknown loss '" + s + "'");
}

InstanceCheck check_gradients(const GradCheckProblem& p) {
  p.model.validate();
  check_shapes(p.params, p.model);
  if (p.inputs.empty() || p.inputs.size() != p.specs.size()) throw ConfigError("gradient check needs a batch");

  const std::vector<StopGradient> frozen = base_constants(p);
  TensorSet analytic = p.params.tensors.zeros_like();
  for (std::size_t i = 0; i < p.inputs.size(); ++i) {
    const ForwardCache cache = forward(p.inputs[i], p.text, p.set, p.params, p.model);
    objective_backward(p.objective, cache, p.specs[i], frozen[i], p.text, p.set, p.params, p.model, p.loss,
                       p.trainable, analytic);
  }
  analytic.scale(1.0 / static_cast<double>(p.inputs.size()));

  InstanceCheck out;
  BottleneckParams probe = p.params;
  for (TensorId id : kAllTensors) {
    if (!flag(p.trainable, id)) continue;
    TensorCheck check;
    check.tensor = id;
    auto& values = probe.tensors[id].data;
    check.entries = values.size();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + kGradCheckStep;
      const double up = batch_objective(p, probe, frozen);
      values[k] = saved - kGradCheckStep;
      const double down = batch_objective(p, probe, frozen);
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * kGradCheckStep);
      const double a = analytic[id].data[k];
      const double abs_err = std::abs(a - numeric);
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_rel_error = std::max(check.max_rel_error, abs_err / std::max(1e-8, std::abs(numeric)));
      check.max_abs_analytic = std::max(check.max_abs_analytic, std::abs(a));
      check.max_abs_numeric = std::max(check.max_abs_numeric, std::abs(numeric));
    }
    out.max_rel_error = std::max(out.max_rel_error, check.max_rel_error);
    out.tensors.push_back(check);
  }
  return out;
}

GradCheckProblem random_problem(std::uint64_t seed, CheckedLoss loss) {
  SplitMix64 rng(seed);
  GradCheckProblem p;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    if (try_build(rng, loss, p)) return p;
  }
  throw NumericsError("could not draw a well-conditioned gradient-check instance");
}

GradCheckReport grad_check(std::uint64_t seed, std::size_t count, std::optional<CheckedLoss> only) {
  constexpr std::array<CheckedLoss, 5> cycle = {CheckedLoss::adaface, CheckedLoss::arcface, CheckedLoss::cosface,
                                                CheckedLoss::plain, CheckedLoss::supervised};
  GradCheckReport report;
  for (std::size_t i = 0; i < count; ++i) {
    const CheckedLoss loss = only.value_or(cycle[i % cycle.size()]);
    const std::uint64_t instance_seed = derive_seed(seed, i);
    InstanceCheck check = check_gradients(random_problem(instance_seed, loss));
    check.seed = instance_seed;
    check.loss = loss;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.instances.push_back(std::move(check));
  }
  return report;
}

}  // namespace cbe
