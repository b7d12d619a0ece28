#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conflab/error.hpp"
#include "conflab/labels.hpp"
#include "conflab/losses.hpp"
#include "conflab/mlp.hpp"
#include "conflab/rng.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Loss-gradient verification: random (label, prediction) probes, central
// finite differences on the prediction vector, and a per-loss maximum
// relative error. Probes too close to a clamp boundary (where the loss has a
// kink and finite differences are meaningless) are skipped and counted.
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  int probes = 200;          // probes that must actually be evaluated
  int class_count = 10;
  double step = 1e-5;        // central-difference half-width
  double tolerance = 1e-4;   // max acceptable relative error
  double boundary_margin = 1e-3;  // skip probes nearer than this to a kink
  std::uint64_t seed = 0;
  bool corrupt = false;      // fault injection: perturb the analytic gradient
};

struct GradCheckReport {
  LossKind kind = LossKind::Projection;
  int probes_run = 0;
  int probes_skipped = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradProbe {
  ConfidenceLabel label;
  std::vector<double> probs;
};

/// Label: softmax over a random support (1..C classes, gaussian raw scores),
/// with a coin-flip trusted flag. Prediction: gaussian-logit softmax mixed
/// with a uniform floor so every entry stays safely positive.
inline GradProbe make_probe(Rng& rng, int class_count) {
  std::uniform_int_distribution<int> support_size_dist(1, class_count);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  const int support_size = support_size_dist(rng);
  std::vector<int> order(class_count);
  for (int i = 0; i < class_count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> raw(support_size);
  for (double& v : raw) v = gauss(rng);
  auto weights = softmax(std::span<const double>(raw));
  GradProbe probe;
  probe.label.scores.assign(class_count, 0.0);
  for (int i = 0; i < support_size; ++i) probe.label.scores[order[i]] = weights[i];
  probe.label.trusted = coin(rng);

  std::vector<double> logits(class_count);
  for (double& v : logits) v = gauss(rng);
  probe.probs = softmax(std::span<const double>(logits));
  for (double& p : probe.probs) p = 0.9 * p + 0.1 / class_count;
  return probe;
}

/// Max relative error over coordinates, or nullopt when the probe must be
/// skipped (kink nearby, or a log denominator too small to difference
/// accurately). Relative error uses max(1, |a|, |fd|) in the denominator so
/// near-zero coordinates compare absolutely.
inline std::optional<double> check_loss_gradient(LossKind kind, const GradProbe& probe,
                                                 double step, double boundary_margin,
                                                 bool corrupt = false) {
  if (boundary_distance(kind, probe.label, probe.probs) < boundary_margin) return std::nullopt;
  if (kind == LossKind::LogProjection) {
    const auto relaxed = relax(probe.label.scores, relaxation_for(probe.label));
    double tp = 0.0;
    for (std::size_t i = 0; i < relaxed.size(); ++i) tp += relaxed[i] * probe.probs[i];
    if (tp < 1e-2) return std::nullopt;
  }

  auto analytic = evaluate_loss(kind, probe.label, probe.probs).grad;
  if (corrupt) {
    for (double& g : analytic) g = g * 1.01 + 1e-3;
  }
  std::vector<double> shifted = probe.probs;
  double max_rel = 0.0;
  for (std::size_t j = 0; j < shifted.size(); ++j) {
    const double saved = shifted[j];
    shifted[j] = saved + step;
    const double up = evaluate_loss(kind, probe.label, shifted).value;
    shifted[j] = saved - step;
    const double down = evaluate_loss(kind, probe.label, shifted).value;
    shifted[j] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic[j] - fd) /
                       std::max({1.0, std::abs(analytic[j]), std::abs(fd)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

inline GradCheckReport run_gradcheck(LossKind kind, const GradCheckOptions& opt) {
  if (opt.probes <= 0 || opt.class_count < 2) {
    throw ConfigError("run_gradcheck: need probes > 0 and at least two classes");
  }
  Rng rng = make_rng(opt.seed, std::string("gradcheck-") + loss_kind_name(kind));
  GradCheckReport report;
  report.kind = kind;
  const int max_attempts = opt.probes * 50;
  for (int attempt = 0; attempt < max_attempts && report.probes_run < opt.probes; ++attempt) {
    const GradProbe probe = make_probe(rng, opt.class_count);
    auto rel = check_loss_gradient(kind, probe, opt.step, opt.boundary_margin, opt.corrupt);
    if (!rel) {
      ++report.probes_skipped;
      continue;
    }
    ++report.probes_run;
    report.max_rel_err = std::max(report.max_rel_err, *rel);
  }
  if (report.probes_run < opt.probes) {
    throw InternalError("run_gradcheck: could not gather enough usable probes for " +
                        std::string(loss_kind_name(kind)));
  }
  report.pass = report.max_rel_err < opt.tolerance;
  return report;
}

inline std::vector<GradCheckReport> run_gradcheck_all(const GradCheckOptions& opt) {
  std::vector<GradCheckReport> reports;
  for (LossKind kind : {LossKind::Projection, LossKind::LogProjection, LossKind::Pce,
                        LossKind::Ce, LossKind::L1, LossKind::Mse}) {
    reports.push_back(run_gradcheck(kind, opt));
  }
  return reports;
}

}  // namespace conflab
