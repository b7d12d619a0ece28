#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflab/error.hpp"
#include "conflab/experiment.hpp"
#include "conflab/gradcheck.hpp"
#include "conflab/io.hpp"
#include "conflab/labels.hpp"
#include "conflab/noising.hpp"
#include "conflab/trainer.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Command implementations behind the CLI verbs. Each returns a process exit
// code; expected failures surface as exceptions the binary turns into
// messages + exit 1.
// ---------------------------------------------------------------------------

struct CliOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;  // overrides the config's noise seed
  std::filesystem::path out_dir;      // overrides the config's output_dir
};

namespace detail {

inline ExperimentConfig load_cli_config(const CliOptions& opts) {
  if (opts.config_path.empty()) throw ConfigError("this command requires --config PATH");
  ExperimentConfig cfg = read_experiment_config(opts.config_path);
  if (opts.seed) cfg.noise.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  return cfg;
}

inline std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", mean, stddev);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen-labels
// ---------------------------------------------------------------------------

inline int cmd_gen_labels(const CliOptions& opts, bool hard, const std::filesystem::path& from_model,
                          std::ostream& out) {
  ExperimentConfig cfg = detail::load_cli_config(opts);
  const LoadedDataset data = load_dataset(cfg.dataset);
  LabelBook book;
  if (hard) {
    book = hard_book(data.bundle.class_names);
  } else if (!from_model.empty()) {
    const MlpParams params = read_checkpoint(from_model);
    const Matrix logits = forward_logits(params, data.bundle.test_features);
    book = labels_from_predictions(softmax_rows(logits), data.bundle.test_ids,
                                   data.bundle.class_names);
  } else {
    book = make_label_book(cfg, data);
  }
  const std::filesystem::path path = cfg.output_dir / "labelbook.json";
  write_label_book(book, path);
  out << "wrote " << path.string() << "\n";
  for (int i = 0; i < book.class_count(); ++i) {
    out << "  " << book.classes[i] << ": support " << LabelBook::support(book.noisy[i]).size()
        << ", self " << format_double_sci(book.noisy[i].scores[i]) << " (noisy) / "
        << format_double_sci(book.trusted[i].scores[i]) << " (trusted)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// make-noise
// ---------------------------------------------------------------------------

inline int cmd_make_noise(const CliOptions& opts, std::ostream& out) {
  ExperimentConfig cfg = detail::load_cli_config(opts);
  const LoadedDataset data = load_dataset(cfg.dataset);
  const LabelBook book = make_label_book(cfg, data);
  for (double ratio : cfg.noise.ratios) {
    const NoiseSpec spec = make_noise_spec(cfg, data, ratio);
    for (int m : cfg.noise.trusted_counts) {
      const auto mask =
          select_trusted(data.bundle.train_ids, data.bundle.class_count(), m, cfg.noise.seed);
      const NoisedDataset noised = inject_noise(data.bundle.train_ids, spec, mask, book);
      const std::filesystem::path path =
          cfg.output_dir / "noise" / noise_manifest_name(cfg.noise.kind, ratio, m);
      write_noise_manifest(noised, path);
      const NoiseStats stats = noise_statistics(noised, data.bundle.class_count());
      out << "wrote " << path.string() << ": " << stats.total << " samples, " << stats.trusted
          << " trusted, flip rate " << format_double_sci(stats.flip_rate) << "\n";
      for (int c = 0; c < data.bundle.class_count(); ++c) {
        out << "  " << data.bundle.class_names[c] << ": flip rate "
            << format_double_sci(stats.per_class_flip_rate[c]) << "\n";
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline int cmd_train(const CliOptions& opts, std::ostream& out) {
  ExperimentConfig cfg = detail::load_cli_config(opts);
  const LoadedDataset data = load_dataset(cfg.dataset);
  const LabelBook confidence_book = make_label_book(cfg, data);
  const LabelBook onehot_book = hard_book(data.bundle.class_names);

  write_file_atomic(cfg.output_dir / "config.canonical.json", canonical_config_json(cfg));

  bool any_diverged = false;
  for (const ExperimentCell& cell : expand_cells(cfg)) {
    const NoiseSpec spec = make_noise_spec(cfg, data, cell.ratio);
    const auto mask = select_trusted(data.bundle.train_ids, data.bundle.class_count(),
                                     cell.trusted_count, cfg.noise.seed);
    const LabelBook& book = cell.loss.confidence_labels ? confidence_book : onehot_book;
    const NoisedDataset noised = inject_noise(data.bundle.train_ids, spec, mask, book);

    // The manifest is label-free, so it is identical for every loss at this
    // (ratio, M) point; writing it per cell is idempotent.
    write_noise_manifest(noised, cfg.output_dir / "noise" /
                                     noise_manifest_name(cfg.noise.kind, cell.ratio,
                                                         cell.trusted_count));

    TrainConfig tc = cfg.training;
    tc.loss = cell.loss.kind;
    const std::filesystem::path cell_dir = cfg.output_dir / "cells" / cell_id(cell);
    MultiRunResult result = train(tc, data.bundle, noised);

    nlohmann::json best_epochs = nlohmann::json::array();
    nlohmann::json diverged = nlohmann::json::array();
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
      const SingleRunResult& run = result.runs[i];
      const std::string tag = "seed" + std::to_string(tc.seeds[i]);
      write_trace_csv(run.trace, cell_dir / ("trace_" + tag + ".csv"));
      write_checkpoint(run.best_params, cell_dir / ("checkpoint_" + tag + ".json"));
      best_epochs.push_back(run.best_epoch);
      diverged.push_back(run.diverged);
      out << cell_id(cell) << " " << tag << ": best " << format_double_sci(run.best_test_acc)
          << " @ epoch " << run.best_epoch << (run.diverged ? " [DIVERGED: " + run.diagnostic + "]" : "")
          << "\n";
      if (run.diverged) any_diverged = true;
    }
    nlohmann::json summary{{"cell",
                            {{"loss", loss_kind_name(cell.loss.kind)},
                             {"labels", cell.loss.confidence_labels ? "confidence" : "hard"},
                             {"ratio", cell.ratio},
                             {"trusted_count", cell.trusted_count},
                             {"noise_kind", noise_kind_name(cfg.noise.kind)}}},
                           {"seeds", tc.seeds},
                           {"per_seed_best", result.summary.per_seed_best},
                           {"mean", result.summary.mean},
                           {"stddev", result.summary.stddev},
                           {"degenerate", result.summary.degenerate},
                           {"best_epochs", std::move(best_epochs)},
                           {"diverged", std::move(diverged)}};
    write_file_atomic(cell_dir / "summary.json", summary.dump(2) + "\n");
    out << cell_id(cell) << ": "
        << detail::format_mean_std(result.summary.mean, result.summary.stddev) << "\n";
  }
  return any_diverged ? 1 : 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const CliOptions& opts, int probes, bool corrupt, std::ostream& out) {
  GradCheckOptions gopt;
  gopt.probes = probes;
  gopt.seed = opts.seed.value_or(0);
  gopt.corrupt = corrupt;
  const auto reports = run_gradcheck_all(gopt);
  bool all_pass = true;
  out << "loss            probes  skipped  max_rel_err    verdict\n";
  for (const auto& r : reports) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-15s %6d  %7d  %.6e  %s\n", loss_kind_name(r.kind),
                  r.probes_run, r.probes_skipped, r.max_rel_err, r.pass ? "PASS" : "FAIL");
    out << line;
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline int cmd_report(const CliOptions& opts, std::ostream& out) {
  std::filesystem::path dir = opts.out_dir;
  if (dir.empty() && !opts.config_path.empty()) {
    dir = read_experiment_config(opts.config_path).output_dir;
  }
  if (dir.empty()) throw ConfigError("report needs --out DIR (or --config with output_dir)");
  const std::filesystem::path cells_dir = dir / "cells";
  if (!std::filesystem::is_directory(cells_dir)) {
    throw ConfigError("no cell summaries under " + cells_dir.string());
  }

  struct Key {
    double ratio;
    int trusted;
    bool operator<(const Key& o) const {
      return ratio != o.ratio ? ratio < o.ratio : trusted < o.trusted;
    }
  };
  std::map<std::string, std::map<std::string, std::string>> grid;  // row -> col -> cell text
  std::map<Key, std::string> columns;
  for (const auto& entry : std::filesystem::directory_iterator(cells_dir)) {
    const auto summary_path = entry.path() / "summary.json";
    if (!std::filesystem::exists(summary_path)) continue;
    nlohmann::json s;
    try {
      s = nlohmann::json::parse(read_file_to_string(summary_path));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad summary " + summary_path.string() + ": " + e.what());
    }
    const auto& cell = s.at("cell");
    const Key key{cell.at("ratio").get<double>(), cell.at("trusted_count").get<int>()};
    const std::string col =
        "r=" + format_ratio(key.ratio) + " M=" + std::to_string(key.trusted);
    columns[key] = col;
    const std::string row =
        cell.at("loss").get<std::string>() + " (" + cell.at("labels").get<std::string>() + ")";
    grid[row][col] = detail::format_mean_std(s.at("mean").get<double>(),
                                             s.at("stddev").get<double>());
  }
  if (grid.empty()) throw ConfigError("no summary.json files found under " + cells_dir.string());

  std::string md = "| loss |";
  std::string md_rule = "| --- |";
  std::string csv = "loss";
  for (const auto& [key, col] : columns) {
    md += " " + col + " |";
    md_rule += " --- |";
    csv += "," + col;
  }
  md += "\n" + md_rule + "\n";
  csv += "\n";
  for (const auto& [row, cells] : grid) {
    md += "| " + row + " |";
    csv += row;
    for (const auto& [key, col] : columns) {
      auto it = cells.find(col);
      if (it == cells.end()) {
        out << "warning: no summary for '" << row << "' at " << col << "\n";
        md += "  |";
        csv += ",";
      } else {
        md += " " + it->second + " |";
        csv += "," + it->second;
      }
    }
    md += "\n";
    csv += "\n";
  }
  write_file_atomic(dir / "report.md", md);
  write_file_atomic(dir / "report.csv", csv);
  out << md;
  out << "wrote " << (dir / "report.md").string() << " and " << (dir / "report.csv").string()
      << "\n";
  return 0;
}

}  // namespace conflab
