#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "conflab/error.hpp"
#include "conflab/labels.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Per-sample losses on softmax outputs. The projective family scores a
// prediction by how far it falls short of the target along the target's own
// direction; the usual baselines live alongside under one dispatch.
//
// All gradients are with respect to the probability vector P (the softmax
// output), so they compose with the network's softmax-backward step.
// ---------------------------------------------------------------------------

inline constexpr double kLossEpsilon = 1e-8;

enum class LossKind { Projection, LogProjection, Pce, Ce, L1, Mse };
enum class RelaxationKind { NoisyL2, TrustedIdentity };

inline const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Projection: return "projection";
    case LossKind::LogProjection: return "log_projection";
    case LossKind::Pce: return "pce";
    case LossKind::Ce: return "ce";
    case LossKind::L1: return "l1";
    case LossKind::Mse: return "mse";
  }
  throw InternalError("loss_kind_name: unreachable");
}

inline LossKind parse_loss_kind(const std::string& name) {
  if (name == "projection") return LossKind::Projection;
  if (name == "log_projection") return LossKind::LogProjection;
  if (name == "pce") return LossKind::Pce;
  if (name == "ce") return LossKind::Ce;
  if (name == "l1") return LossKind::L1;
  if (name == "mse") return LossKind::Mse;
  throw ConfigError("unknown loss '" + name +
                    "' (expected projection|log_projection|pce|ce|l1|mse)");
}

inline const char* relaxation_kind_name(RelaxationKind kind) {
  return kind == RelaxationKind::NoisyL2 ? "noisy_l2" : "trusted_identity";
}

inline RelaxationKind parse_relaxation_kind(const std::string& name) {
  if (name == "noisy_l2") return RelaxationKind::NoisyL2;
  if (name == "trusted_identity") return RelaxationKind::TrustedIdentity;
  throw ConfigError("unknown relaxation '" + name + "' (expected noisy_l2|trusted_identity)");
}

/// Scales a label toward the origin in proportion to its own concentration:
/// soft (low-norm) labels shrink, one-hot labels are exactly unchanged.
inline std::vector<double> relax(std::span<const double> scores, RelaxationKind kind) {
  std::vector<double> out(scores.begin(), scores.end());
  if (kind == RelaxationKind::TrustedIdentity) return out;
  double norm_sq = 0.0;
  for (double s : scores) norm_sq += s * s;
  const double norm = std::sqrt(norm_sq);
  for (double& s : out) s *= norm;
  return out;
}

inline RelaxationKind relaxation_for(const ConfidenceLabel& label) {
  return label.trusted ? RelaxationKind::TrustedIdentity : RelaxationKind::NoisyL2;
}

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // dL/dP
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void check_same_size(std::span<const double> target, std::span<const double> probs,
                            const char* what) {
  if (target.size() != probs.size() || target.empty()) {
    throw ValidationError(std::string(what) + ": target/probs size mismatch");
  }
}

}  // namespace detail

/// max(0, <T,T> - <T,P>): zero once the prediction's overlap with the target
/// reaches the target's own self-overlap.
inline LossResult projection_loss(std::span<const double> target, std::span<const double> probs) {
  detail::check_same_size(target, probs, "projection_loss");
  const double tt = detail::dot(target, target);
  const double tp = detail::dot(target, probs);
  LossResult r;
  r.grad.assign(probs.size(), 0.0);
  if (tt - tp > 0.0) {
    r.value = tt - tp;
    for (std::size_t i = 0; i < target.size(); ++i) r.grad[i] = -target[i];
  }
  return r;
}

/// max(0, log(<T,T> / (<T,P> + eps))): the projection deficit on a log scale,
/// which keeps the pull strong while the overlap is still small.
inline LossResult log_projection_loss(std::span<const double> target,
                                      std::span<const double> probs) {
  detail::check_same_size(target, probs, "log_projection_loss");
  const double tt = detail::dot(target, target);
  const double tp = detail::dot(target, probs);
  LossResult r;
  r.grad.assign(probs.size(), 0.0);
  const double raw = std::log(tt / (tp + kLossEpsilon));
  if (raw > 0.0) {
    r.value = raw;
    const double scale = -1.0 / (tp + kLossEpsilon);
    for (std::size_t i = 0; i < target.size(); ++i) r.grad[i] = scale * target[i];
  }
  return r;
}

/// -sum_j T_j log(P_j + eps), shared by the plain and projective
/// cross-entropies (they differ only in which target vector they are handed).
inline LossResult cross_entropy_core(std::span<const double> target,
                                     std::span<const double> probs) {
  detail::check_same_size(target, probs, "cross_entropy");
  LossResult r;
  r.grad.assign(probs.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    acc -= target[i] * std::log(probs[i] + kLossEpsilon);
    r.grad[i] = -target[i] / (probs[i] + kLossEpsilon);
  }
  r.value = std::max(acc, 0.0);
  return r;
}

inline LossResult l1_loss(std::span<const double> target, std::span<const double> probs) {
  detail::check_same_size(target, probs, "l1_loss");
  LossResult r;
  r.grad.assign(probs.size(), 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = probs[i] - target[i];
    r.value += std::abs(diff);
    r.grad[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  }
  return r;
}

inline LossResult mse_loss(std::span<const double> target, std::span<const double> probs) {
  detail::check_same_size(target, probs, "mse_loss");
  LossResult r;
  r.grad.assign(probs.size(), 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = probs[i] - target[i];
    r.value += diff * diff;
    r.grad[i] = 2.0 * diff;
  }
  return r;
}

/// Single entry point: the projective losses see the relaxed target (which
/// variant depends on the label's trusted flag); the baselines see the raw
/// label scores.
inline LossResult evaluate_loss(LossKind kind, const ConfidenceLabel& label,
                                std::span<const double> probs) {
  switch (kind) {
    case LossKind::Projection:
    case LossKind::LogProjection:
    case LossKind::Pce: {
      const auto relaxed = relax(label.scores, relaxation_for(label));
      if (kind == LossKind::Projection) return projection_loss(relaxed, probs);
      if (kind == LossKind::LogProjection) return log_projection_loss(relaxed, probs);
      return cross_entropy_core(relaxed, probs);
    }
    case LossKind::Ce: return cross_entropy_core(label.scores, probs);
    case LossKind::L1: return l1_loss(label.scores, probs);
    case LossKind::Mse: return mse_loss(label.scores, probs);
  }
  throw InternalError("evaluate_loss: unreachable");
}

/// Distance from the nearest non-differentiable point, used to filter
/// gradient-check probes. Losses without kinks report +inf.
inline double boundary_distance(LossKind kind, const ConfidenceLabel& label,
                                std::span<const double> probs) {
  switch (kind) {
    case LossKind::Projection:
    case LossKind::LogProjection: {
      const auto relaxed = relax(label.scores, relaxation_for(label));
      const double tt = detail::dot(relaxed, relaxed);
      const double tp = detail::dot(relaxed, probs);
      return std::abs(tp - tt);
    }
    case LossKind::L1: {
      double closest = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < label.scores.size(); ++i) {
        closest = std::min(closest, std::abs(label.scores[i] - probs[i]));
      }
      return closest;
    }
    case LossKind::Pce:
    case LossKind::Ce:
    case LossKind::Mse: return std::numeric_limits<double>::infinity();
  }
  throw InternalError("boundary_distance: unreachable");
}

}  // namespace conflab
