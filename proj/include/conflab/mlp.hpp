#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "conflab/error.hpp"
#include "conflab/matrix.hpp"
#include "conflab/rng.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Feed-forward classifier: dense layers, rectifier hidden activations,
// softmax output. Gradients are hand-written reverse mode; a central
// finite-difference oracle lives alongside for verification.
// ---------------------------------------------------------------------------

struct LayerParams {
  Matrix weights;             // out x in
  std::vector<double> bias;   // out
};

struct MlpParams {
  std::vector<LayerParams> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().weights.cols(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().weights.rows(); }
  std::size_t hidden_layer_count() const { return layers.empty() ? 0 : layers.size() - 1; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw ConfigError("MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.weights.rows() <= 0 || l.weights.cols() <= 0) {
        throw ConfigError("MlpParams: layer " + std::to_string(i) + " has empty weights");
      }
      if (static_cast<int>(l.bias.size()) != l.weights.rows()) {
        throw ConfigError("MlpParams: layer " + std::to_string(i) + " bias/weight mismatch");
      }
      if (i > 0 && layers[i - 1].weights.rows() != l.weights.cols()) {
        throw ConfigError("MlpParams: layer dimensions do not chain at layer " + std::to_string(i));
      }
    }
  }
};

/// Gradients share the parameter layout.
using MlpGrads = MlpParams;

inline MlpGrads zeros_like(const MlpParams& params) {
  MlpGrads g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix(l.weights.rows(), l.weights.cols()),
                        std::vector<double>(l.bias.size(), 0.0)});
  }
  return g;
}

/// He-normal weights, zero biases. `hidden` may be empty (linear classifier).
inline MlpParams init_mlp(int input_dim, const std::vector<int>& hidden, int class_count,
                          std::uint64_t seed) {
  if (input_dim <= 0 || class_count <= 0) throw ConfigError("init_mlp: dimensions must be positive");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("init_mlp: hidden sizes must be positive");
  }
  Rng rng = make_rng(seed, "mlp-init");
  MlpParams params;
  int in_dim = input_dim;
  std::vector<int> out_dims(hidden);
  out_dims.push_back(class_count);
  for (int out_dim : out_dims) {
    LayerParams layer{Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)};
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in_dim));
    for (double& w : layer.weights.values()) w = dist(rng);
    params.layers.push_back(std::move(layer));
    in_dim = out_dim;
  }
  return params;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

/// Max-stabilized softmax; total on finite input.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), probs.row(r).begin());
  }
  return probs;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[i] feeds layer i; inputs[0] is the batch
  Matrix logits;
  Matrix probs;
};

inline const Matrix& forward(const MlpParams& params, const Matrix& batch, ForwardCache& cache) {
  params.validate();
  if (batch.cols() != params.input_dim()) {
    throw ConfigError("forward: batch has " + std::to_string(batch.cols()) +
                      " features, network expects " + std::to_string(params.input_dim()));
  }
  cache.inputs.clear();
  cache.inputs.push_back(batch);
  const int batch_size = batch.rows();
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    const Matrix& in = cache.inputs.back();
    const int out_dim = layer.weights.rows();
    const int in_dim = layer.weights.cols();
    Matrix out(batch_size, out_dim);
    for (int b = 0; b < batch_size; ++b) {
      const double* x = in.row(b).data();
      for (int o = 0; o < out_dim; ++o) {
        const double* w = layer.weights.row(o).data();
        double acc = layer.bias[o];
        for (int i = 0; i < in_dim; ++i) acc += w[i] * x[i];
        out(b, o) = acc;
      }
    }
    const bool is_last = li + 1 == params.layers.size();
    if (is_last) {
      cache.logits = std::move(out);
    } else {
      for (double& v : out.values()) v = std::max(v, 0.0);
      cache.inputs.push_back(std::move(out));
    }
  }
  if (!cache.logits.all_finite()) {
    throw InternalError("forward: non-finite logits (diverged parameters?)");
  }
  cache.probs = softmax_rows(cache.logits);
  return cache.logits;
}

inline Matrix forward_logits(const MlpParams& params, const Matrix& batch) {
  ForwardCache cache;
  forward(params, batch, cache);
  return std::move(cache.logits);
}

/// Reverse mode from per-sample gradients w.r.t. the softmax output
/// (batch x classes). The softmax Jacobian is folded in here, so callers hand
/// over exactly what the loss functions emit.
inline MlpGrads backward(const MlpParams& params, const ForwardCache& cache,
                         const Matrix& dloss_dprobs) {
  if (cache.inputs.size() != params.layers.size() || cache.probs.rows() == 0) {
    throw InternalError("backward: cache does not match params (stale forward?)");
  }
  const int batch_size = cache.inputs[0].rows();
  const int class_count = params.output_dim();
  if (dloss_dprobs.rows() != batch_size || dloss_dprobs.cols() != class_count) {
    throw InternalError("backward: dloss_dprobs shape mismatch");
  }

  // Through softmax: dz_j = p_j * (g_j - <g, p>)
  Matrix delta(batch_size, class_count);
  for (int b = 0; b < batch_size; ++b) {
    auto g = dloss_dprobs.row(b);
    auto p = cache.probs.row(b);
    double gp = 0.0;
    for (int j = 0; j < class_count; ++j) gp += g[j] * p[j];
    for (int j = 0; j < class_count; ++j) delta(b, j) = p[j] * (g[j] - gp);
  }

  MlpGrads grads = zeros_like(params);
  for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
    const auto& layer = params.layers[li];
    const Matrix& in = cache.inputs[li];
    const int out_dim = layer.weights.rows();
    const int in_dim = layer.weights.cols();
    auto& gl = grads.layers[li];
    for (int b = 0; b < batch_size; ++b) {
      const double* x = in.row(b).data();
      const double* d = delta.row(b).data();
      for (int o = 0; o < out_dim; ++o) {
        if (d[o] == 0.0) continue;
        double* gw = gl.weights.row(o).data();
        for (int i = 0; i < in_dim; ++i) gw[i] += d[o] * x[i];
        gl.bias[o] += d[o];
      }
    }
    if (li > 0) {
      Matrix prev(batch_size, in_dim);
      for (int b = 0; b < batch_size; ++b) {
        const double* d = delta.row(b).data();
        double* pd = prev.row(b).data();
        for (int o = 0; o < out_dim; ++o) {
          if (d[o] == 0.0) continue;
          const double* w = layer.weights.row(o).data();
          for (int i = 0; i < in_dim; ++i) pd[i] += d[o] * w[i];
        }
        // rectifier mask: cached post-activation is positive iff preact was
        const double* act = in.row(b).data();
        for (int i = 0; i < in_dim; ++i) {
          if (act[i] <= 0.0) pd[i] = 0.0;
        }
      }
      delta = std::move(prev);
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// SGD with decoupled-from-bias weight decay
// ---------------------------------------------------------------------------

inline void sgd_step(MlpParams& params, const MlpGrads& grads, double lr, double weight_decay) {
  if (!(lr > 0.0)) throw ValidationError("sgd_step: learning rate must be positive");
  if (weight_decay < 0.0) throw ValidationError("sgd_step: weight decay must be non-negative");
  if (grads.layers.size() != params.layers.size()) {
    throw InternalError("sgd_step: gradient shape mismatch");
  }
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& p = params.layers[li];
    const auto& g = grads.layers[li];
    if (!g.weights.all_finite()) {
      throw InternalError("sgd_step: non-finite gradient in layer " + std::to_string(li));
    }
    for (double b : g.bias) {
      if (!std::isfinite(b)) {
        throw InternalError("sgd_step: non-finite bias gradient in layer " + std::to_string(li));
      }
    }
    auto& w = p.weights.values();
    const auto& gw = g.weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr * (gw[i] + weight_decay * w[i]);
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      p.bias[i] -= lr * g.bias[i];  // biases exempt from decay
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Central differences over every parameter. Deterministic for a fixed
/// evaluator; intended for verification, not training.
inline MlpGrads finite_diff_gradient(const std::function<double(const MlpParams&)>& loss,
                                     const MlpParams& params, double step) {
  if (step < 1e-7 || step > 1e-3) {
    throw ValidationError("finite_diff_gradient: step must lie in [1e-7, 1e-3]");
  }
  MlpParams probe = params;
  MlpGrads grads = zeros_like(params);
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + step;
    const double up = loss(probe);
    slot = saved - step;
    const double down = loss(probe);
    slot = saved;
    return (up - down) / (2.0 * step);
  };
  for (std::size_t li = 0; li < probe.layers.size(); ++li) {
    auto& w = probe.layers[li].weights.values();
    auto& gw = grads.layers[li].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) gw[i] = central(w[i]);
    auto& b = probe.layers[li].bias;
    auto& gb = grads.layers[li].bias;
    for (std::size_t i = 0; i < b.size(); ++i) gb[i] = central(b[i]);
  }
  return grads;
}

inline int argmax_index(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace conflab
