#include "cbe/bottleneck.hpp"

#include <algorithm>
#include <cmath>

#include "cbe/error.hpp"
#include "cbe/rng.hpp"

namespace cbe {

namespace {

constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
    "alpha", "adapter_w1", "adapter_b1", "adapter_w2", "adapter_b2", "w_agg", "head"};

void require_size(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
}

void fill_uniform(Matrix& m, std::size_t fan_in, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : m.data) x = rng.uniform(-bound, bound);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Fills hidden_pre, hidden, adapter_out and image of the cache.
void adapter_forward(std::span<const double> e, const BottleneckParams& params, const ModelConfig& config,
                     ForwardCache& cache) {
  require_size(e, config.d, "image embedding");
  cache.input.assign(e.begin(), e.end());
  if (!config.use_adapter) {
    cache.hidden_pre.clear();
    cache.hidden.clear();
    cache.adapter_out.clear();
    cache.image = cache.input;
    return;
  }
  const Matrix& w1 = params.w1();
  const Matrix& w2 = params.w2();
  const std::size_t d = config.d;
  const std::size_t h = config.h;
  cache.hidden_pre.assign(params.b1().data.begin(), params.b1().data.end());
  for (std::size_t i = 0; i < d; ++i) {
    const double ei = e[i];
    const auto w_row = w1.row(i);
    for (std::size_t j = 0; j < h; ++j) cache.hidden_pre[j] += w_row[j] * ei;
  }
  cache.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) cache.hidden[j] = std::max(0.0, cache.hidden_pre[j]);
  cache.adapter_out.assign(params.b2().data.begin(), params.b2().data.end());
  for (std::size_t j = 0; j < h; ++j) {
    const double a = cache.hidden[j];
    if (a == 0.0) continue;
    const auto w_row = w2.row(j);
    for (std::size_t k = 0; k < d; ++k) cache.adapter_out[k] += w_row[k] * a;
  }
  const double alpha = params.alpha();
  cache.image.resize(d);
  for (std::size_t k = 0; k < d; ++k) cache.image[k] = alpha * e[k] + (1.0 - alpha) * cache.adapter_out[k];
}

}  // namespace

std::string_view tensor_name(TensorId id) { return kTensorNames[static_cast<std::size_t>(id)]; }

std::optional<TensorId> parse_tensor_name(std::string_view name) {
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (kTensorNames[i] == name) return static_cast<TensorId>(i);
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (d == 0 || h == 0 || n_concepts == 0 || m == 0 || k_classes == 0) {
    throw ConfigError("model dims must all be >= 1 (d, h, N, m, K)");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be finite and > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!use_linear && m != n_concepts) throw ConfigError("disabling the linear layer requires m == N");
}

ModelConfig default_model_config(std::size_t d, std::size_t n_concepts, std::size_t k_classes) {
  ModelConfig c;
  c.d = d;
  c.h = std::max<std::size_t>(1, d / 4);
  c.n_concepts = n_concepts;
  c.k_classes = k_classes;
  return c;
}

TensorSet TensorSet::zeros_like() const {
  TensorSet out;
  for (std::size_t i = 0; i < kTensorCount; ++i) out.tensors[i] = Matrix(tensors[i].rows, tensors[i].cols);
  return out;
}

void TensorSet::set_zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void TensorSet::add(const TensorSet& other) {
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    auto& dst = tensors[i].data;
    const auto& src = other.tensors[i].data;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

void TensorSet::scale(double factor) {
  for (auto& t : tensors) {
    for (double& x : t.data) x *= factor;
  }
}

BottleneckParams init_params(std::uint64_t seed, const ModelConfig& config) {
  config.validate();
  BottleneckParams p;
  auto& t = p.tensors;
  t[TensorId::alpha] = Matrix(1, 1, config.alpha);
  t[TensorId::adapter_w1] = Matrix(config.d, config.h);
  t[TensorId::adapter_b1] = Matrix(1, config.h);
  t[TensorId::adapter_w2] = Matrix(config.h, config.d);
  t[TensorId::adapter_b2] = Matrix(1, config.d);
  t[TensorId::w_agg] = Matrix(config.n_concepts, config.m);
  t[TensorId::head] = Matrix(config.k_classes, config.m);

  SplitMix64 rng(seed);
  fill_uniform(t[TensorId::adapter_w1], config.d, rng);
  fill_uniform(t[TensorId::adapter_w2], config.h, rng);
  fill_uniform(t[TensorId::w_agg], config.n_concepts, rng);
  Matrix& head = t[TensorId::head];
  fill_uniform(head, config.m, rng);
  for (std::size_t r = 0; r < head.rows; ++r) {
    auto row = head.row(r);
    const double norm = l2_norm(row);
    for (double& x : row) x /= norm;
  }
  for (auto& m : t.tensors) round_to_float(m.data);
  return p;
}

void check_shapes(const BottleneckParams& params, const ModelConfig& c) {
  const std::array<std::pair<std::size_t, std::size_t>, kTensorCount> expected = {{
      {1, 1}, {c.d, c.h}, {1, c.h}, {c.h, c.d}, {1, c.d}, {c.n_concepts, c.m}, {c.k_classes, c.m}}};
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    const Matrix& m = params.tensors.tensors[i];
    if (m.rows != expected[i].first || m.cols != expected[i].second || m.data.size() != m.rows * m.cols) {
      throw ShapeError("tensor " + std::string(kTensorNames[i]) + " has shape " + std::to_string(m.rows) + "x" +
                       std::to_string(m.cols) + ", expected " + std::to_string(expected[i].first) + "x" +
                       std::to_string(expected[i].second));
    }
  }
}

std::vector<double> adapt_embedding(std::span<const double> e, const BottleneckParams& params,
                                    const ModelConfig& config) {
  ForwardCache cache;
  adapter_forward(e, params, config, cache);
  return cache.image;
}

std::vector<double> concept_scores(std::span<const double> image, const ConceptTextEmbeddings& text) {
  require_size(image, text.dim(), "image encoding");
  const double norm = l2_norm(image);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericsError("image encoding has zero or non-finite norm");
  std::vector<double> s(text.size());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = dot(image, text.row(j)) / norm;
  return s;
}

std::vector<double> group_softmax(std::span<const double> raw, const ConceptSet& set, double tau) {
  require_size(raw, set.size(), "concept scores");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  std::vector<double> out(raw.size());
  for (std::size_t g = 0; g < set.group_count(); ++g) {
    const std::size_t lo = set.group_begin(g);
    const std::size_t hi = set.group_end(g);
    double shift = tau * raw[lo];
    for (std::size_t i = lo + 1; i < hi; ++i) shift = std::max(shift, tau * raw[i]);
    double total = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      out[i] = std::exp(tau * raw[i] - shift);
      total += out[i];
    }
    for (std::size_t i = lo; i < hi; ++i) out[i] /= total;
  }
  return out;
}

std::vector<double> aggregate(std::span<const double> s, const BottleneckParams& params, const ModelConfig& config) {
  require_size(s, config.n_concepts, "softmaxed concept scores");
  if (!config.use_linear) return {s.begin(), s.end()};
  const Matrix& w = params.w_agg();
  if (w.rows != s.size()) throw ShapeError("aggregation matrix rows do not match concept count");
  std::vector<double> x(w.cols, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double si = s[i];
    const auto w_row = w.row(i);
    for (std::size_t k = 0; k < w.cols; ++k) x[k] += w_row[k] * si;
  }
  return x;
}

ForwardCache forward(std::span<const double> e, const ConceptTextEmbeddings& text, const ConceptSet& set,
                     const BottleneckParams& params, const ModelConfig& config) {
  if (text.size() != set.size() || set.size() != config.n_concepts) {
    throw ShapeError("concept set, text embeddings and model config disagree on N");
  }
  ForwardCache cache;
  adapter_forward(e, params, config, cache);
  cache.scores.raw = concept_scores(cache.image, text);
  cache.scores.softmaxed = group_softmax(cache.scores.raw, set, config.tau);
  cache.x_emb = aggregate(config.use_group_softmax ? cache.scores.softmaxed : cache.scores.raw, params, config);
  return cache;
}

BackwardTrace backward(const ForwardCache& cache, std::span<const double> grad_x_emb,
                       std::span<const double> grad_raw_direct, const ConceptTextEmbeddings& text,
                       const ConceptSet& set, const BottleneckParams& params, const ModelConfig& config,
                       const TensorFlags& trainable, TensorSet& grads) {
  const std::size_t n = config.n_concepts;
  require_size(grad_x_emb, cache.x_emb.size(), "dL/dX_emb");
  if (!grad_raw_direct.empty()) require_size(grad_raw_direct, n, "dL/dS");

  BackwardTrace trace;
  const auto& s_used = config.use_group_softmax ? cache.scores.softmaxed : cache.scores.raw;

  // Linear aggregation.
  if (config.use_linear) {
    const Matrix& w = params.w_agg();
    trace.grad_softmaxed.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) trace.grad_softmaxed[i] = dot(w.row(i), grad_x_emb);
    if (flag(trainable, TensorId::w_agg)) {
      Matrix& gw = grads[TensorId::w_agg];
      for (std::size_t i = 0; i < n; ++i) {
        auto g_row = gw.row(i);
        for (std::size_t k = 0; k < g_row.size(); ++k) g_row[k] += s_used[i] * grad_x_emb[k];
      }
    }
  } else {
    trace.grad_softmaxed.assign(grad_x_emb.begin(), grad_x_emb.end());
  }

  // Group softmax Jacobian: block diagonal, tau * y_i * (g_i - <g, y>_G).
  if (config.use_group_softmax) {
    const auto& y = cache.scores.softmaxed;
    trace.grad_raw.assign(n, 0.0);
    for (std::size_t g = 0; g < set.group_count(); ++g) {
      double inner = 0.0;
      for (std::size_t i = set.group_begin(g); i < set.group_end(g); ++i) inner += trace.grad_softmaxed[i] * y[i];
      for (std::size_t i = set.group_begin(g); i < set.group_end(g); ++i) {
        trace.grad_raw[i] = config.tau * y[i] * (trace.grad_softmaxed[i] - inner);
      }
    }
  } else {
    trace.grad_raw = trace.grad_softmaxed;
  }
  for (std::size_t i = 0; i < grad_raw_direct.size(); ++i) trace.grad_raw[i] += grad_raw_direct[i];

  // Cosine scores: dS_j/dI = (T_j - S_j * I_hat) / |I|.
  const std::size_t d = config.d;
  const double norm = l2_norm(cache.image);
  trace.grad_image.assign(d, 0.0);
  double radial = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double gs = trace.grad_raw[j];
    if (gs == 0.0) continue;
    radial += gs * cache.scores.raw[j];
    const auto t_row = text.row(j);
    for (std::size_t k = 0; k < d; ++k) trace.grad_image[k] += gs * t_row[k];
  }
  for (std::size_t k = 0; k < d; ++k) {
    trace.grad_image[k] = (trace.grad_image[k] - radial * cache.image[k] / norm) / norm;
  }
  if (!all_finite(trace.grad_raw) || !all_finite(trace.grad_image)) {
    throw NumericsError("non-finite gradient in the concept bottleneck");
  }

  if (!config.use_adapter) return trace;

  // Residual blend.
  const double alpha = params.alpha();
  const auto& e = cache.input;
  const auto& gi = trace.grad_image;
  if (flag(trainable, TensorId::alpha)) {
    double ga = 0.0;
    for (std::size_t k = 0; k < d; ++k) ga += gi[k] * (e[k] - cache.adapter_out[k]);
    if (!std::isfinite(ga)) throw NumericsError("non-finite gradient for alpha");
    grads[TensorId::alpha].data[0] += ga;
  }
  const bool any_adapter = flag(trainable, TensorId::adapter_w1) || flag(trainable, TensorId::adapter_b1) ||
                           flag(trainable, TensorId::adapter_w2) || flag(trainable, TensorId::adapter_b2);
  if (!any_adapter) return trace;

  const std::size_t h = config.h;
  std::vector<double> g_out(d);
  for (std::size_t k = 0; k < d; ++k) g_out[k] = (1.0 - alpha) * gi[k];
  if (flag(trainable, TensorId::adapter_b2)) {
    auto& gb2 = grads[TensorId::adapter_b2].data;
    for (std::size_t k = 0; k < d; ++k) gb2[k] += g_out[k];
  }
  std::vector<double> g_pre(h, 0.0);
  const Matrix& w2 = params.w2();
  for (std::size_t j = 0; j < h; ++j) {
    const double a = cache.hidden[j];
    if (flag(trainable, TensorId::adapter_w2) && a != 0.0) {
      auto g_row = grads[TensorId::adapter_w2].row(j);
      for (std::size_t k = 0; k < d; ++k) g_row[k] += a * g_out[k];
    }
    if (cache.hidden_pre[j] > 0.0) g_pre[j] = dot(w2.row(j), g_out);
  }
  if (flag(trainable, TensorId::adapter_b1)) {
    auto& gb1 = grads[TensorId::adapter_b1].data;
    for (std::size_t j = 0; j < h; ++j) gb1[j] += g_pre[j];
  }
  if (flag(trainable, TensorId::adapter_w1)) {
    Matrix& gw1 = grads[TensorId::adapter_w1];
    for (std::size_t i = 0; i < d; ++i) {
      const double ei = e[i];
      if (ei == 0.0) continue;
      auto g_row = gw1.row(i);
      for (std::size_t j = 0; j < h; ++j) g_row[j] += ei * g_pre[j];
    }
  }
  return trace;
}

}  // namespace cbe
