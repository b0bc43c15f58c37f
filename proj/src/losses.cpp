#include "cbe/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cbe/error.hpp"

namespace cbe {

namespace {

struct TargetAngle {
  double logit;  // unscaled target logit
  double slope;  // d logit / d cos(theta_y), unscaled
};

// Target logit as a function of c = cos(theta_y), before scaling by s.
TargetAngle target_logit(double c, const LossConfig& cfg, double quality) {
  double angular = 0.0;
  double additive = 0.0;
  switch (cfg.variant) {
    case MarginVariant::plain:
      break;
    case MarginVariant::cosface:
      additive = cfg.margin;
      break;
    case MarginVariant::arcface:
      angular = cfg.margin;
      break;
    case MarginVariant::adaface:
      angular = -cfg.margin * quality;
      additive = cfg.margin * quality + cfg.margin;
      break;
  }
  // cos(theta + 0) is c itself; skipping the arccos round trip keeps the
  // zero-offset cases bitwise equal to their closed forms.
  if (angular == 0.0) return {c - additive, 1.0};

  const double clamped = std::clamp(c, -kCosineClamp, kCosineClamp);
  const double theta = std::acos(clamped);
  const double shifted = theta + angular;
  const double angle = std::clamp(shifted, 0.0, std::numbers::pi);
  double slope = 0.0;
  if (clamped == c && angle == shifted) slope = std::sin(angle) / std::sqrt(1.0 - c * c);
  return {std::cos(angle) - additive, slope};
}

std::vector<double> prototype_cosines(std::span<const double> x, const Matrix& prototypes) {
  if (prototypes.cols != x.size()) throw ShapeError("prototype width does not match X_emb");
  if (!(squared_norm(x) > 0.0)) throw NumericsError("X_emb has zero norm");
  std::vector<double> cosines(prototypes.rows);
  for (std::size_t j = 0; j < prototypes.rows; ++j) {
    const auto p = prototypes.row(j);
    if (!(squared_norm(p) > 0.0)) throw NumericsError("class prototype " + std::to_string(j) + " has zero norm");
    cosines[j] = cosine(x, p);
  }
  return cosines;
}

void check_target(std::size_t target, std::size_t classes) {
  if (target >= classes) {
    throw DataError("target class " + std::to_string(target) + " out of range for " + std::to_string(classes) +
                    " classes");
  }
}

}  // namespace

std::string to_string(MarginVariant v) {
  switch (v) {
    case MarginVariant::plain:
      return "plain";
    case MarginVariant::cosface:
      return "cosface";
    case MarginVariant::arcface:
      return "arcface";
    case MarginVariant::adaface:
      return "adaface";
  }
  return "plain";
}

MarginVariant parse_margin_variant(const std::string& s) {
  if (s == "plain") return MarginVariant::plain;
  if (s == "cosface") return MarginVariant::cosface;
  if (s == "arcface") return MarginVariant::arcface;
  if (s == "adaface") return MarginVariant::adaface;
  throw ConfigError("unknown margin variant '" + s + "'");
}

void LossConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  if (!(h > 0.0)) throw ConfigError("concentration h must be > 0");
  if (!(scale > 0.0)) throw ConfigError("scale s must be > 0");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ConfigError("EMA momentum must lie in [0, 1]");
  if (!(w_cls >= 0.0) || !(w_concept >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

double quality_indicator(double x_norm, const NormStats& stats, double h) {
  if (stats.updates == 0) throw StateError("norm EMA has not been updated yet");
  return std::clamp((x_norm - stats.mean) / (stats.std / h), -1.0, 1.0);
}

void update_norm_ema(NormStats& stats, std::span<const double> batch_norms, double momentum) {
  if (batch_norms.empty()) return;
  const auto n = static_cast<double>(batch_norms.size());
  double mean = 0.0;
  for (double v : batch_norms) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : batch_norms) var += (v - mean) * (v - mean);
  const double std = batch_norms.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  stats.mean = (1.0 - momentum) * stats.mean + momentum * mean;
  stats.std = std::max(1e-3, (1.0 - momentum) * stats.std + momentum * std);
  ++stats.updates;
}

std::vector<double> margin_logits(std::span<const double> x_emb, std::size_t target, const Matrix& prototypes,
                                  const LossConfig& cfg, double quality) {
  check_target(target, prototypes.rows);
  std::vector<double> logits = prototype_cosines(x_emb, prototypes);
  logits[target] = target_logit(logits[target], cfg, quality).logit;
  for (double& l : logits) l *= cfg.scale;
  return logits;
}

std::vector<double> margin_logits(std::span<const double> x_emb, std::size_t target, const BottleneckParams& params,
                                  const LossConfig& cfg) {
  const double quality =
      cfg.variant == MarginVariant::adaface ? quality_indicator(l2_norm(x_emb), params.norm_ema, cfg.h) : 0.0;
  return margin_logits(x_emb, target, params.head(), cfg, quality);
}

void margin_logits_backward(std::span<const double> x_emb, std::size_t target, const Matrix& prototypes,
                            const LossConfig& cfg, double quality, std::span<const double> grad_logits,
                            std::span<double> grad_x, Matrix* grad_prototypes) {
  check_target(target, prototypes.rows);
  const std::vector<double> cosines = prototype_cosines(x_emb, prototypes);
  const double x_norm = l2_norm(x_emb);
  const std::size_t width = x_emb.size();
  for (std::size_t j = 0; j < prototypes.rows; ++j) {
    double slope = 1.0;
    if (j == target) slope = target_logit(cosines[j], cfg, quality).slope;
    const double g = grad_logits[j] * cfg.scale * slope;
    if (g == 0.0) continue;
    const auto p = prototypes.row(j);
    const double p_norm = l2_norm(p);
    const double c = cosines[j];
    for (std::size_t k = 0; k < width; ++k) {
      const double x_hat = x_emb[k] / x_norm;
      const double p_hat = p[k] / p_norm;
      grad_x[k] += g * (p_hat - c * x_hat) / x_norm;
      if (grad_prototypes != nullptr) (*grad_prototypes)(j, k) += g * (x_hat - c * p_hat) / p_norm;
    }
  }
}

std::vector<double> linear_logits(std::span<const double> x, const Matrix& head) {
  if (head.cols != x.size()) throw ShapeError("head width does not match X_emb");
  std::vector<double> logits(head.rows);
  for (std::size_t k = 0; k < head.rows; ++k) logits[k] = dot(head.row(k), x);
  return logits;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  check_target(target, logits.size());
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - top);
  return top + std::log(total) - logits[target];
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t target) {
  check_target(target, logits.size());
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - top);
    total += p[k];
  }
  for (double& v : p) v /= total;
  p[target] -= 1.0;
  return p;
}

namespace {

double max_score(std::span<const double> raw, std::span<const std::size_t> present) {
  for (std::size_t i : present) {
    if (i >= raw.size()) throw DataError("present concept index " + std::to_string(i) + " out of range");
  }
  return raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
}

}  // namespace

std::vector<double> concept_l1_target(std::span<const double> raw, std::span<const std::size_t> present) {
  const double top = max_score(raw, present);
  std::vector<double> t(raw.begin(), raw.end());
  for (std::size_t i : present) t[i] = top;
  return t;
}

double concept_l1(std::span<const double> raw, std::span<const std::size_t> present,
                  std::optional<double> target_max) {
  if (present.empty() || raw.empty()) return 0.0;
  const double computed = max_score(raw, present);
  const double top = target_max.value_or(computed);
  double total = 0.0;
  for (std::size_t i : present) total += std::abs(raw[i] - top);
  return total / static_cast<double>(raw.size());
}

std::vector<double> concept_l1_grad(std::span<const double> raw, std::span<const std::size_t> present,
                                    std::optional<double> target_max) {
  std::vector<double> g(raw.size(), 0.0);
  if (present.empty() || raw.empty()) return g;
  const double computed = max_score(raw, present);
  const double top = target_max.value_or(computed);
  const double inv_n = 1.0 / static_cast<double>(raw.size());
  for (std::size_t i : present) {
    const double diff = raw[i] - top;
    g[i] = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
  }
  return g;
}

double combined_supervised_loss(std::span<const double> logits, std::size_t target, std::span<const double> raw,
                                std::span<const std::size_t> present, const LossConfig& cfg) {
  return cfg.w_cls * cross_entropy(logits, target) + cfg.w_concept * concept_l1(raw, present);
}

}  // namespace cbe
