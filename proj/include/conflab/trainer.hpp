#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflab/data.hpp"
#include "conflab/error.hpp"
#include "conflab/io.hpp"
#include "conflab/labels.hpp"
#include "conflab/losses.hpp"
#include "conflab/matrix.hpp"
#include "conflab/mlp.hpp"
#include "conflab/noising.hpp"
#include "conflab/rng.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Mini-batch SGD with reduce-on-plateau learning rate, best-model selection
// on test accuracy, and a fully deterministic per-epoch trace.
// ---------------------------------------------------------------------------

struct SchedulerConfig {
  double factor = 0.5;
  int patience = 5;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.2;
  double weight_decay = 5e-4;
  SchedulerConfig scheduler;
  LossKind loss = LossKind::Ce;
  std::vector<int> hidden_layers = {128, 128};
  std::vector<std::uint64_t> seeds = {1};
  bool augment = false;  // crop/flip on 3x32x32 train batches only

  void validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch size must be >= 1");
    // lr = 0 is allowed: the update is an exact no-op, useful for smoke runs.
    if (!(learning_rate >= 0.0)) throw ConfigError("TrainConfig: learning rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("TrainConfig: weight decay must be >= 0");
    if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0)) {
      throw ConfigError("TrainConfig: scheduler factor must lie in (0,1)");
    }
    if (scheduler.patience < 0) throw ConfigError("TrainConfig: patience must be >= 0");
    if (seeds.empty()) throw ConfigError("TrainConfig: at least one seed required");
    for (int h : hidden_layers) {
      if (h < 1) throw ConfigError("TrainConfig: hidden sizes must be >= 1");
    }
  }
};

struct EpochRecord {
  int epoch = 0;               // 1-based
  double train_loss = 0.0;     // mean per-sample loss over the epoch
  double train_acc_observed = 0.0;
  double train_acc_true = 0.0;  // diagnostic only, never fed back
  double test_acc = 0.0;
  double lr = 0.0;  // after this epoch's scheduler step
};

struct SingleRunResult {
  std::vector<EpochRecord> trace;
  MlpParams best_params;
  double best_test_acc = 0.0;
  int best_epoch = 0;
  bool diverged = false;
  std::string diagnostic;
};

struct RunSummary {
  std::vector<double> per_seed_best;
  double mean = 0.0;
  double stddev = 0.0;       // sample standard deviation (n-1)
  bool degenerate = false;   // fewer than 2 seeds
};

struct MultiRunResult {
  std::vector<SingleRunResult> runs;  // one per seed, config order
  RunSummary summary;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Argmax-of-softmax accuracy in percent. Ties resolve to the lowest index.
inline double evaluate(const MlpParams& params, const Matrix& features,
                       const std::vector<int>& ids) {
  if (features.rows() == 0 || features.rows() != static_cast<int>(ids.size())) {
    throw ValidationError("evaluate: empty dataset or feature/id mismatch");
  }
  int correct = 0;
  constexpr int kChunk = 256;
  for (int start = 0; start < features.rows(); start += kChunk) {
    const int n = std::min(kChunk, features.rows() - start);
    Matrix batch(n, features.cols());
    for (int r = 0; r < n; ++r) {
      std::copy_n(features.row(start + r).data(), features.cols(), batch.row(r).data());
    }
    const Matrix logits = forward_logits(params, batch);
    for (int r = 0; r < n; ++r) {
      if (argmax_index(logits.row(r)) == ids[start + r]) ++correct;
    }
  }
  return 100.0 * correct / features.rows();
}

// ---------------------------------------------------------------------------
// Batch loss plumbing (shared with the gradient-check tests)
// ---------------------------------------------------------------------------

struct BatchLossResult {
  double mean_loss = 0.0;
  MlpGrads grads;
};

/// Mean per-sample loss over the batch and its parameter gradients. Each
/// sample contributes through its own attached label (and therefore its own
/// relaxation regime).
inline BatchLossResult batch_loss_and_grads(const MlpParams& params, const Matrix& batch,
                                            const std::vector<const ConfidenceLabel*>& labels,
                                            LossKind kind) {
  if (static_cast<int>(labels.size()) != batch.rows()) {
    throw ValidationError("batch_loss_and_grads: one label per batch row required");
  }
  ForwardCache cache;
  forward(params, batch, cache);
  const int n = batch.rows();
  Matrix dprobs(n, params.output_dim());
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const LossResult res = evaluate_loss(kind, *labels[r], cache.probs.row(r));
    if (!std::isfinite(res.value)) {
      throw InternalError("batch loss diverged (non-finite sample loss)");
    }
    total += res.value;
    for (int j = 0; j < params.output_dim(); ++j) dprobs(r, j) = res.grad[j] / n;
  }
  BatchLossResult out;
  out.mean_loss = total / n;
  out.grads = backward(params, cache, dprobs);
  return out;
}

inline double batch_loss_value(const MlpParams& params, const Matrix& batch,
                               const std::vector<const ConfidenceLabel*>& labels, LossKind kind) {
  ForwardCache cache;
  forward(params, batch, cache);
  double total = 0.0;
  for (int r = 0; r < batch.rows(); ++r) {
    total += evaluate_loss(kind, *labels[r], cache.probs.row(r)).value;
  }
  return total / batch.rows();
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One seeded run on an already-noised training set. The loop is strictly
/// sequential, so a fixed (config, data, seed) triple reproduces the trace
/// bit-for-bit. On divergence the run stops and reports the parameters from
/// the last completed epoch.
inline SingleRunResult train_single(const TrainConfig& config, const DatasetBundle& bundle,
                                    const NoisedDataset& noised, std::uint64_t run_seed) {
  config.validate();
  bundle.validate();
  const int n = bundle.train_features.rows();
  if (n == 0) throw ValidationError("train_single: empty training set");
  if (static_cast<int>(noised.samples.size()) != n ||
      static_cast<int>(noised.labels.size()) != n) {
    throw ValidationError("train_single: noised dataset does not match training features");
  }

  std::vector<int> observed_ids(n), true_ids(n);
  for (int i = 0; i < n; ++i) {
    observed_ids[i] = noised.samples[i].observed_class;
    true_ids[i] = noised.samples[i].true_class;
  }

  MlpParams params = init_mlp(bundle.feature_dim(), config.hidden_layers, bundle.class_count(),
                              derive_seed(run_seed, "train-init"));
  Rng shuffle_rng = make_rng(run_seed, "train-shuffle");
  Rng augment_rng = make_rng(run_seed, "train-augment");

  SingleRunResult result;
  MlpParams last_good = params;
  double lr = config.learning_rate;
  double plateau_best = -1.0;
  int bad_epochs = 0;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    try {
      for (int start = 0; start < n; start += config.batch_size) {
        const int b = std::min(config.batch_size, n - start);
        Matrix batch(b, bundle.feature_dim());
        std::vector<const ConfidenceLabel*> labels(b);
        for (int r = 0; r < b; ++r) {
          const int src = order[start + r];
          std::copy_n(bundle.train_features.row(src).data(), bundle.feature_dim(),
                      batch.row(r).data());
          if (config.augment) augment_crop_flip(batch.row(r), bundle.norm, augment_rng);
          labels[r] = &noised.labels[src];
        }
        const BatchLossResult step = batch_loss_and_grads(params, batch, labels, config.loss);
        loss_sum += step.mean_loss * b;
        if (lr > 0.0) sgd_step(params, step.grads, lr, config.weight_decay);
      }
    } catch (const InternalError& e) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
      params = last_good;
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / n;
    rec.train_acc_observed = evaluate(params, bundle.train_features, observed_ids);
    rec.train_acc_true = evaluate(params, bundle.train_features, true_ids);
    rec.test_acc = evaluate(params, bundle.test_features, bundle.test_ids);

    // Plateau scheduler: strictly higher test accuracy resets patience; one
    // epoch beyond patience triggers a cut.
    if (rec.test_acc > plateau_best) {
      plateau_best = rec.test_acc;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs > config.scheduler.patience) {
        lr *= config.scheduler.factor;
        bad_epochs = 0;
      }
    }
    rec.lr = lr;
    result.trace.push_back(rec);

    if (result.trace.size() == 1 || rec.test_acc > result.best_test_acc) {
      result.best_test_acc = rec.test_acc;
      result.best_epoch = epoch;
      result.best_params = params;
    }
    last_good = params;
  }

  if (result.trace.empty() && !result.diverged) {
    throw InternalError("train_single: produced no epochs");
  }
  if (result.diverged && result.best_params.layers.empty()) {
    result.best_params = params;  // never completed an epoch: report the init
  }
  return result;
}

inline RunSummary aggregate_runs(const std::vector<double>& per_seed_best) {
  if (per_seed_best.empty()) throw ValidationError("aggregate_runs: no runs");
  RunSummary s;
  s.per_seed_best = per_seed_best;
  for (double v : per_seed_best) s.mean += v;
  s.mean /= per_seed_best.size();
  if (per_seed_best.size() < 2) {
    s.degenerate = true;
  } else {
    double acc = 0.0;
    for (double v : per_seed_best) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / (per_seed_best.size() - 1));
  }
  return s;
}

inline MultiRunResult train(const TrainConfig& config, const DatasetBundle& bundle,
                            const NoisedDataset& noised) {
  config.validate();
  MultiRunResult out;
  std::vector<double> best_accs;
  for (std::uint64_t seed : config.seeds) {
    out.runs.push_back(train_single(config, bundle, noised, seed));
    best_accs.push_back(out.runs.back().best_test_acc);
  }
  out.summary = aggregate_runs(best_accs);
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline std::string trace_to_csv(const std::vector<EpochRecord>& trace) {
  std::string out = "epoch,train_loss,train_acc_observed,train_acc_true,test_acc,lr\n";
  for (const auto& r : trace) {
    out += std::to_string(r.epoch) + "," + format_double_sci(r.train_loss) + "," +
           format_double_sci(r.train_acc_observed) + "," + format_double_sci(r.train_acc_true) +
           "," + format_double_sci(r.test_acc) + "," + format_double_sci(r.lr) + "\n";
  }
  return out;
}

inline void write_trace_csv(const std::vector<EpochRecord>& trace,
                            const std::filesystem::path& path) {
  write_file_atomic(path, trace_to_csv(trace));
}

/// Penultimate-layer activations, one TSV row per sample. Requires at least
/// one hidden layer (otherwise there is no embedding to export).
inline std::string export_embeddings(const MlpParams& params, const Matrix& features,
                                     const std::vector<int>& true_ids) {
  params.validate();
  if (params.layers.size() < 2) {
    throw ValidationError("export_embeddings: network has no hidden layer");
  }
  if (features.rows() != static_cast<int>(true_ids.size())) {
    throw ValidationError("export_embeddings: feature/id mismatch");
  }
  const int embed_dim = params.layers.back().weights.cols();
  std::string out = "index\ttrue_class";
  for (int i = 0; i < embed_dim; ++i) out += "\tact_" + std::to_string(i);
  out += "\n";
  ForwardCache cache;
  for (int r = 0; r < features.rows(); ++r) {
    Matrix row(1, features.cols());
    std::copy_n(features.row(r).data(), features.cols(), row.row(0).data());
    forward(params, row, cache);
    const auto act = cache.inputs.back().row(0);
    out += std::to_string(r) + "\t" + std::to_string(true_ids[r]);
    for (int i = 0; i < embed_dim; ++i) out += "\t" + format_double_sci(act[i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints (lossless JSON round-trip of all parameters)
// ---------------------------------------------------------------------------

inline std::string checkpoint_to_json(const MlpParams& params) {
  params.validate();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    layers.push_back({{"rows", l.weights.rows()},
                      {"cols", l.weights.cols()},
                      {"weights", l.weights.values()},
                      {"bias", l.bias}});
  }
  nlohmann::json j{{"format", "conflab-mlp"}, {"version", 1}, {"layers", std::move(layers)}};
  return j.dump() + "\n";
}

inline void write_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_json(params));
}

inline MlpParams checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != "conflab-mlp") {
    throw FormatError("checkpoint: unrecognized format");
  }
  MlpParams params;
  try {
    for (const auto& l : j.at("layers")) {
      const int rows = l.at("rows").get<int>();
      const int cols = l.at("cols").get<int>();
      LayerParams layer{Matrix(rows, cols), l.at("bias").get<std::vector<double>>()};
      const auto weights = l.at("weights").get<std::vector<double>>();
      if (static_cast<int>(weights.size()) != rows * cols) {
        throw FormatError("checkpoint: weight count does not match declared shape");
      }
      std::copy(weights.begin(), weights.end(), layer.weights.values().begin());
      params.layers.push_back(std::move(layer));
    }
    params.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return params;
}

inline MlpParams read_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_file_to_string(path));
}

}  // namespace conflab
