#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbe/bottleneck.hpp"

namespace cbe {

enum class MarginVariant { plain, cosface, arcface, adaface };

std::string to_string(MarginVariant v);
MarginVariant parse_margin_variant(const std::string& s);

struct LossConfig {
  MarginVariant variant = MarginVariant::adaface;
  double margin = 0.5;
  double h = 0.33;  // quality indicator concentration
  double scale = 64.0;
  double ema_momentum = 0.01;
  double w_cls = 1.0;
  double w_concept = 2.0;

  void validate() const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Angles entering an angular margin are clamped here before arccos.
inline constexpr double kCosineClamp = 1.0 - 1e-7;

/// clamp((|x| - mu) / (sigma / h), -1, 1). StateError before the first EMA update.
double quality_indicator(double x_norm, const NormStats& stats, double h);

/// mu <- (1-b) mu + b mean, sigma <- max(1e-3, (1-b) sigma + b std) over one batch.
void update_norm_ema(NormStats& stats, std::span<const double> batch_norms, double momentum);

/// Scaled margin logits. Non-target j: s cos(theta_j). Target y by variant:
/// plain s cos(theta_y); cosface s (cos(theta_y) - m); arcface s cos(theta_y + m);
/// adaface s (cos(theta_y - m q) - (m q + m)) with q the quality indicator.
/// Combined target angles are kept inside [0, pi].
std::vector<double> margin_logits(std::span<const double> x_emb, std::size_t target, const Matrix& prototypes,
                                  const LossConfig& cfg, double quality);

/// Reads the quality indicator from params.norm_ema when the variant is adaface.
std::vector<double> margin_logits(std::span<const double> x_emb, std::size_t target, const BottleneckParams& params,
                                  const LossConfig& cfg);

/// Chain rule of margin_logits with the quality indicator held constant.
/// Adds dL/dx into grad_x and, if non-null, dL/dprototypes into grad_prototypes.
void margin_logits_backward(std::span<const double> x_emb, std::size_t target, const Matrix& prototypes,
                            const LossConfig& cfg, double quality, std::span<const double> grad_logits,
                            std::span<double> grad_x, Matrix* grad_prototypes);

/// Plain linear read: logits_k = head_k . x.
std::vector<double> linear_logits(std::span<const double> x, const Matrix& head);

/// -log softmax(logits)[target], max-shifted.
double cross_entropy(std::span<const double> logits, std::size_t target);

/// softmax(logits) - onehot(target).
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t target);

/// Target copies S and lifts present concepts to max S (a constant, no gradient).
/// Loss = (1/N) sum |S_i - t_i|. `target_max` overrides max S when given.
double concept_l1(std::span<const double> raw, std::span<const std::size_t> present,
                  std::optional<double> target_max = std::nullopt);

std::vector<double> concept_l1_target(std::span<const double> raw, std::span<const std::size_t> present);

/// d concept_l1 / dS with the target treated as a constant (sign at 0 is 0).
std::vector<double> concept_l1_grad(std::span<const double> raw, std::span<const std::size_t> present,
                                    std::optional<double> target_max = std::nullopt);

/// w_cls * cross_entropy + w_concept * concept_l1.
double combined_supervised_loss(std::span<const double> logits, std::size_t target, std::span<const double> raw,
                                std::span<const std::size_t> present, const LossConfig& cfg);

}  // namespace cbe
