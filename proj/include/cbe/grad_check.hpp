#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbe/bottleneck.hpp"
#include "cbe/concept_space.hpp"
#include "cbe/losses.hpp"
#include "cbe/trainer.hpp"

namespace cbe {

/// Which objective a gradient-check instance differentiates.
enum class CheckedLoss { adaface, arcface, cosface, plain, supervised };

std::string to_string(CheckedLoss l);
CheckedLoss parse_checked_loss(const std::string& s);

/// A small self-contained problem: the batch-mean objective over `inputs`.
struct GradCheckProblem {
  ConceptSet set;
  ConceptTextEmbeddings text;
  ModelConfig model;
  LossConfig loss;
  Objective objective = Objective::face;
  BottleneckParams params;
  std::vector<std::vector<double>> inputs;
  std::vector<SampleSpec> specs;
  TensorFlags trainable{};
};

struct TensorCheck {
  TensorId tensor = TensorId::alpha;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
};

struct InstanceCheck {
  std::uint64_t seed = 0;
  CheckedLoss loss = CheckedLoss::plain;
  std::vector<TensorCheck> tensors;  // trainable tensors only
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<InstanceCheck> instances;
  double max_rel_error = 0.0;
};

inline constexpr double kGradCheckStep = 1e-4;

/// Central differences on every trainable scalar of `problem`. Stop-gradient
/// constants are read at the base point and held fixed while perturbing.
InstanceCheck check_gradients(const GradCheckProblem& problem);

/// A random small instance (d <= 16, N <= 12, K <= 5). Draws near a kink, with
/// short cosine operands, or where the head cannot see X_emb direction changes
/// are redrawn.
GradCheckProblem random_problem(std::uint64_t seed, CheckedLoss loss);

/// `count` instances derived from `seed`; the loss cycles through all
/// variants unless one is selected.
GradCheckReport grad_check(std::uint64_t seed, std::size_t count, std::optional<CheckedLoss> only = std::nullopt);

}  // namespace cbe
