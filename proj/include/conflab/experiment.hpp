#pragma once

#include <cstdint>
#include <cstdio>
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
#include "conflab/noising.hpp"
#include "conflab/trainer.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Experiment configuration: one JSON file describing dataset, label source,
// noise sweep, and training, expanded into independent loss x ratio x
// trusted-count cells.
// ---------------------------------------------------------------------------

struct DatasetSection {
  std::string kind = "synthetic";  // synthetic | saved | cifar10
  SyntheticSpec synthetic;
  std::filesystem::path saved_dir;
  std::vector<std::filesystem::path> cifar_train_files;
  std::vector<std::filesystem::path> cifar_test_files;
};

struct LabelsSection {
  std::string source = "pairs";  // pairs | hard | soft | book
  std::filesystem::path book_path;
  double noisy_self = 0.6;
  double trusted_self = 0.95;
  double soft_eps = 0.1;
};

struct NoiseSection {
  NoiseKind kind = NoiseKind::Asymmetric;
  std::vector<double> ratios = {0.0};
  std::vector<int> trusted_counts = {0};
  std::uint64_t seed = 0;
};

/// One trained configuration: a loss plus which label regime feeds it.
struct LossCell {
  LossKind kind = LossKind::Ce;
  bool confidence_labels = false;  // false: one-hot book; true: configured book
};

struct ExperimentConfig {
  DatasetSection dataset;
  LabelsSection labels;
  NoiseSection noise;
  TrainConfig training;
  std::vector<LossCell> losses;
  std::filesystem::path output_dir = "out";

  void validate() const {
    if (dataset.kind != "synthetic" && dataset.kind != "saved" && dataset.kind != "cifar10") {
      throw ConfigError("dataset.kind must be synthetic|saved|cifar10");
    }
    if (dataset.kind == "synthetic") {
      try {
        dataset.synthetic.validate();
      } catch (const ValidationError& e) {
        throw ConfigError(std::string("dataset.synthetic: ") + e.what());
      }
    }
    if (dataset.kind == "saved" && !std::filesystem::exists(dataset.saved_dir / "dataset.json")) {
      throw ConfigError("dataset.saved.dir has no dataset.json: " + dataset.saved_dir.string());
    }
    if (dataset.kind == "cifar10") {
      if (dataset.cifar_train_files.empty()) throw ConfigError("dataset.cifar10: no train files");
      for (const auto& p : dataset.cifar_train_files) {
        if (!std::filesystem::exists(p)) throw ConfigError("missing file: " + p.string());
      }
      for (const auto& p : dataset.cifar_test_files) {
        if (!std::filesystem::exists(p)) throw ConfigError("missing file: " + p.string());
      }
    }
    if (labels.source != "pairs" && labels.source != "hard" && labels.source != "soft" &&
        labels.source != "book") {
      throw ConfigError("labels.source must be pairs|hard|soft|book");
    }
    if (labels.source == "book" && !std::filesystem::exists(labels.book_path)) {
      throw ConfigError("labels.book_path does not exist: " + labels.book_path.string());
    }
    if (labels.noisy_self <= 0.0 || labels.noisy_self > 1.0 || labels.trusted_self <= 0.0 ||
        labels.trusted_self > 1.0) {
      throw ConfigError("labels self-probabilities must lie in (0,1]");
    }
    if (labels.soft_eps < 0.0 || labels.soft_eps >= 1.0) {
      throw ConfigError("labels.soft_eps must lie in [0,1)");
    }
    if (noise.ratios.empty() || noise.trusted_counts.empty()) {
      throw ConfigError("noise.ratios and noise.trusted_counts must be non-empty");
    }
    for (double r : noise.ratios) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("noise ratio must lie in [0,1]");
    }
    for (int m : noise.trusted_counts) {
      if (m < 0) throw ConfigError("trusted count must be >= 0");
    }
    if (losses.empty()) throw ConfigError("training.losses must be non-empty");
    training.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON parsing (missing keys fall back to defaults; unknown enum values are
// hard errors)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline SyntheticSpec parse_synthetic(const nlohmann::json& j, const SyntheticSpec& defaults) {
  SyntheticSpec s = defaults;
  s.class_count = get_or(j, "class_count", s.class_count);
  if (j.contains("pairs")) {
    s.pairs.clear();
    for (const auto& p : j.at("pairs")) {
      if (!p.is_array() || p.size() != 2) throw ConfigError("synthetic.pairs entries must be [a,b]");
      s.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
  }
  s.dim = get_or(j, "dim", s.dim);
  s.delta_sim = get_or(j, "delta_sim", s.delta_sim);
  s.delta_dis = get_or(j, "delta_dis", s.delta_dis);
  s.train_per_class = get_or(j, "train_per_class", s.train_per_class);
  s.test_per_class = get_or(j, "test_per_class", s.test_per_class);
  s.noise_std = get_or(j, "noise_std", s.noise_std);
  s.seed = get_or(j, "seed", s.seed);
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset.kind = detail::get_or<std::string>(d, "kind", cfg.dataset.kind);
    if (d.contains("synthetic")) {
      cfg.dataset.synthetic = detail::parse_synthetic(d.at("synthetic"), cfg.dataset.synthetic);
    }
    if (d.contains("saved")) {
      cfg.dataset.saved_dir = detail::get_or<std::string>(d.at("saved"), "dir", "");
    }
    if (d.contains("cifar10")) {
      for (const auto& p : d.at("cifar10").value("train_files", std::vector<std::string>{})) {
        cfg.dataset.cifar_train_files.emplace_back(p);
      }
      for (const auto& p : d.at("cifar10").value("test_files", std::vector<std::string>{})) {
        cfg.dataset.cifar_test_files.emplace_back(p);
      }
    }
  }
  if (j.contains("labels")) {
    const auto& l = j.at("labels");
    cfg.labels.source = detail::get_or<std::string>(l, "source", cfg.labels.source);
    cfg.labels.book_path = detail::get_or<std::string>(l, "book_path", "");
    cfg.labels.noisy_self = detail::get_or(l, "noisy_self", cfg.labels.noisy_self);
    cfg.labels.trusted_self = detail::get_or(l, "trusted_self", cfg.labels.trusted_self);
    cfg.labels.soft_eps = detail::get_or(l, "soft_eps", cfg.labels.soft_eps);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    cfg.noise.kind = parse_noise_kind(detail::get_or<std::string>(n, "kind", "asymmetric"));
    cfg.noise.ratios = detail::get_or(n, "ratios", cfg.noise.ratios);
    cfg.noise.trusted_counts = detail::get_or(n, "trusted_counts", cfg.noise.trusted_counts);
    cfg.noise.seed = detail::get_or(n, "seed", cfg.noise.seed);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    cfg.training.epochs = detail::get_or(t, "epochs", cfg.training.epochs);
    cfg.training.batch_size = detail::get_or(t, "batch_size", cfg.training.batch_size);
    cfg.training.learning_rate = detail::get_or(t, "learning_rate", cfg.training.learning_rate);
    cfg.training.weight_decay = detail::get_or(t, "weight_decay", cfg.training.weight_decay);
    if (t.contains("scheduler")) {
      cfg.training.scheduler.factor =
          detail::get_or(t.at("scheduler"), "factor", cfg.training.scheduler.factor);
      cfg.training.scheduler.patience =
          detail::get_or(t.at("scheduler"), "patience", cfg.training.scheduler.patience);
    }
    cfg.training.hidden_layers = detail::get_or(t, "hidden_layers", cfg.training.hidden_layers);
    cfg.training.seeds = detail::get_or(t, "seeds", cfg.training.seeds);
    cfg.training.augment = detail::get_or(t, "augment", cfg.training.augment);
    if (t.contains("losses")) {
      for (const auto& cell : t.at("losses")) {
        LossCell c;
        c.kind = parse_loss_kind(cell.at("kind").get<std::string>());
        const std::string regime = cell.value("labels", "confidence");
        if (regime == "confidence") {
          c.confidence_labels = true;
        } else if (regime == "hard") {
          c.confidence_labels = false;
        } else {
          throw ConfigError("losses[].labels must be confidence|hard");
        }
        cfg.losses.push_back(c);
      }
    }
  }
  if (cfg.losses.empty()) cfg.losses.push_back({cfg.training.loss, true});
  cfg.output_dir = detail::get_or<std::string>(j, "output_dir", cfg.output_dir.string());
  cfg.validate();
  return cfg;
}

inline ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file_to_string(path));
}

/// Canonical re-serialization: every key materialized (defaults included),
/// keys in stable sorted order. Parsing the canonical form reproduces it.
inline std::string canonical_config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["dataset"]["kind"] = cfg.dataset.kind;
  {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : cfg.dataset.synthetic.effective_pairs()) pairs.push_back({a, b});
    j["dataset"]["synthetic"] = {{"class_count", cfg.dataset.synthetic.class_count},
                                 {"pairs", std::move(pairs)},
                                 {"dim", cfg.dataset.synthetic.dim},
                                 {"delta_sim", cfg.dataset.synthetic.delta_sim},
                                 {"delta_dis", cfg.dataset.synthetic.delta_dis},
                                 {"train_per_class", cfg.dataset.synthetic.train_per_class},
                                 {"test_per_class", cfg.dataset.synthetic.test_per_class},
                                 {"noise_std", cfg.dataset.synthetic.noise_std},
                                 {"seed", cfg.dataset.synthetic.seed}};
  }
  j["dataset"]["saved"]["dir"] = cfg.dataset.saved_dir.string();
  {
    std::vector<std::string> train_files, test_files;
    for (const auto& p : cfg.dataset.cifar_train_files) train_files.push_back(p.string());
    for (const auto& p : cfg.dataset.cifar_test_files) test_files.push_back(p.string());
    j["dataset"]["cifar10"] = {{"train_files", train_files}, {"test_files", test_files}};
  }
  j["labels"] = {{"source", cfg.labels.source},
                 {"book_path", cfg.labels.book_path.string()},
                 {"noisy_self", cfg.labels.noisy_self},
                 {"trusted_self", cfg.labels.trusted_self},
                 {"soft_eps", cfg.labels.soft_eps}};
  j["noise"] = {{"kind", noise_kind_name(cfg.noise.kind)},
                {"ratios", cfg.noise.ratios},
                {"trusted_counts", cfg.noise.trusted_counts},
                {"seed", cfg.noise.seed}};
  j["training"] = {{"epochs", cfg.training.epochs},
                   {"batch_size", cfg.training.batch_size},
                   {"learning_rate", cfg.training.learning_rate},
                   {"weight_decay", cfg.training.weight_decay},
                   {"scheduler",
                    {{"factor", cfg.training.scheduler.factor},
                     {"patience", cfg.training.scheduler.patience}}},
                   {"hidden_layers", cfg.training.hidden_layers},
                   {"seeds", cfg.training.seeds},
                   {"augment", cfg.training.augment}};
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& cell : cfg.losses) {
    losses.push_back({{"kind", loss_kind_name(cell.kind)},
                      {"labels", cell.confidence_labels ? "confidence" : "hard"}});
  }
  j["training"]["losses"] = std::move(losses);
  j["output_dir"] = cfg.output_dir.string();
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Dataset / label-book assembly
// ---------------------------------------------------------------------------

struct LoadedDataset {
  DatasetBundle bundle;
  std::vector<std::pair<int, int>> similarity_pairs;  // semantic pairs of the data
  std::vector<int> unpaired_classes;
};

inline LoadedDataset load_dataset(const DatasetSection& section) {
  LoadedDataset out;
  if (section.kind == "synthetic") {
    out.bundle = generate_synthetic(section.synthetic);
    out.similarity_pairs = section.synthetic.effective_pairs();
  } else if (section.kind == "saved") {
    SavedSynthetic saved = load_synthetic(section.saved_dir);
    out.bundle = std::move(saved.bundle);
    out.similarity_pairs = saved.spec.effective_pairs();
  } else if (section.kind == "cifar10") {
    out.bundle = read_cifar10_binary(section.cifar_train_files, section.cifar_test_files);
    out.similarity_pairs = cifar10_similarity_pairs();
    out.unpaired_classes = cifar10_unpaired_classes();
  } else {
    throw ConfigError("load_dataset: unknown kind " + section.kind);
  }
  return out;
}

/// Similarity groups induced by explicit pairs; unpaired classes get
/// singleton groups (and must be exempted from asymmetric flipping).
inline std::vector<std::vector<int>> groups_from_pairs(
    int class_count, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<std::vector<int>> groups(class_count);
  for (int a = 0; a < class_count; ++a) groups[a] = {a};
  for (const auto& [a, b] : pairs) {
    groups[a] = {std::min(a, b), std::max(a, b)};
    groups[b] = groups[a];
  }
  return groups;
}

/// The confidence-label book selected by the config.
inline LabelBook make_label_book(const ExperimentConfig& cfg, const LoadedDataset& data) {
  const auto& names = data.bundle.class_names;
  if (cfg.labels.source == "hard") return hard_book(names);
  if (cfg.labels.source == "pairs") {
    return book_from_pairs(names, data.similarity_pairs, cfg.labels.noisy_self,
                           cfg.labels.trusted_self);
  }
  if (cfg.labels.source == "soft") {
    LabelBook book;
    book.classes = names;
    const int c = static_cast<int>(names.size());
    for (int i = 0; i < c; ++i) {
      book.noisy.push_back(soft_label(c, i, cfg.labels.soft_eps, false));
      book.trusted.push_back(hard_label(c, i, true));
    }
    book.validate();
    return book;
  }
  LabelBook book = read_label_book(cfg.labels.book_path);
  if (book.classes != names) {
    throw ConfigError("label book classes do not match the dataset's class table");
  }
  return book;
}

// ---------------------------------------------------------------------------
// Sweep cells
// ---------------------------------------------------------------------------

struct ExperimentCell {
  LossCell loss;
  double ratio = 0.0;
  int trusted_count = 0;
};

inline std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

inline std::string cell_id(const ExperimentCell& cell) {
  return std::string(loss_kind_name(cell.loss.kind)) +
         (cell.loss.confidence_labels ? "-conf" : "-hard") + "_r" + format_ratio(cell.ratio) +
         "_m" + std::to_string(cell.trusted_count);
}

inline std::string noise_manifest_name(NoiseKind kind, double ratio, int trusted_count) {
  return std::string(noise_kind_name(kind)) + "_r" + format_ratio(ratio) + "_m" +
         std::to_string(trusted_count) + ".json";
}

inline std::vector<ExperimentCell> expand_cells(const ExperimentConfig& cfg) {
  std::vector<ExperimentCell> cells;
  for (const auto& loss : cfg.losses) {
    for (double r : cfg.noise.ratios) {
      for (int m : cfg.noise.trusted_counts) cells.push_back({loss, r, m});
    }
  }
  return cells;
}

/// NoiseSpec for one (ratio, M) point: groups always come from the data's
/// semantic pairs, never from the training label book, so every loss cell
/// sees the identical corruption pattern.
inline NoiseSpec make_noise_spec(const ExperimentConfig& cfg, const LoadedDataset& data,
                                 double ratio) {
  if (cfg.noise.kind == NoiseKind::Symmetric) {
    return NoiseSpec::symmetric(ratio, cfg.noise.seed);
  }
  return NoiseSpec::asymmetric(
      ratio, groups_from_pairs(data.bundle.class_count(), data.similarity_pairs), cfg.noise.seed,
      data.unpaired_classes);
}

}  // namespace conflab
