#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflab/error.hpp"
#include "conflab/io.hpp"
#include "conflab/labels.hpp"
#include "conflab/rng.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Label-noise injection. A trusted subset is drawn first (class-balanced,
// never corrupted, carries trusted-variant labels); every remaining sample is
// independently flipped with probability `ratio`. Asymmetric noise confines
// the wrong class to the sample's similarity group; symmetric noise draws it
// from all other classes.
// ---------------------------------------------------------------------------

enum class NoiseKind { Symmetric, Asymmetric };

inline const char* noise_kind_name(NoiseKind kind) {
  return kind == NoiseKind::Symmetric ? "symmetric" : "asymmetric";
}

inline NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "symmetric") return NoiseKind::Symmetric;
  if (name == "asymmetric") return NoiseKind::Asymmetric;
  throw ConfigError("unknown noise kind '" + name + "' (expected symmetric|asymmetric)");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Symmetric;
  double ratio = 0.0;
  std::vector<std::vector<int>> groups;  // per class, ascending, contains the class (asymmetric)
  std::vector<int> exempt_classes;       // never flipped (asymmetric classes with no partner)
  std::uint64_t seed = 0;

  static NoiseSpec symmetric(double ratio, std::uint64_t seed) {
    NoiseSpec spec;
    spec.kind = NoiseKind::Symmetric;
    spec.ratio = ratio;
    spec.seed = seed;
    spec.validate(0);
    return spec;
  }

  static NoiseSpec asymmetric(double ratio, std::vector<std::vector<int>> groups,
                              std::uint64_t seed, std::vector<int> exempt = {}) {
    NoiseSpec spec;
    spec.kind = NoiseKind::Asymmetric;
    spec.ratio = ratio;
    spec.groups = std::move(groups);
    spec.exempt_classes = std::move(exempt);
    spec.seed = seed;
    spec.validate(static_cast<int>(spec.groups.size()));
    return spec;
  }

  bool is_exempt(int cls) const {
    return std::find(exempt_classes.begin(), exempt_classes.end(), cls) != exempt_classes.end();
  }

  void validate(int class_count) const {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
      throw ValidationError("NoiseSpec: ratio must lie in [0,1]");
    }
    if (kind == NoiseKind::Symmetric) return;
    if (static_cast<int>(groups.size()) != class_count || class_count == 0) {
      throw ValidationError("NoiseSpec: asymmetric noise needs one similarity group per class");
    }
    for (int a = 0; a < class_count; ++a) {
      const auto& g = groups[a];
      if (std::find(g.begin(), g.end(), a) == g.end()) {
        throw ValidationError("NoiseSpec: group of class " + std::to_string(a) +
                              " must contain the class itself");
      }
      for (int b : g) {
        if (b < 0 || b >= class_count) {
          throw ValidationError("NoiseSpec: group member out of range");
        }
      }
      if (g.size() < 2 && !is_exempt(a)) {
        throw ValidationError("NoiseSpec: class " + std::to_string(a) +
                              " has a singleton group and is not exempt from flipping");
      }
    }
  }
};

/// Similarity groups read off a label book: each class's group is the support
/// of its ordinary-variant label.
inline std::vector<std::vector<int>> groups_from_book(const LabelBook& book) {
  std::vector<std::vector<int>> groups;
  groups.reserve(book.noisy.size());
  for (const auto& label : book.noisy) groups.push_back(LabelBook::support(label));
  return groups;
}

struct NoisedSample {
  int index = 0;
  int true_class = 0;
  int observed_class = 0;
  bool trusted = false;
};

struct NoisedDataset {
  std::vector<NoisedSample> samples;     // dataset order; features stay with the source
  std::vector<ConfidenceLabel> labels;   // attached label per sample
};

// ---------------------------------------------------------------------------
// Trusted-subset selection
// ---------------------------------------------------------------------------

/// Per-class quotas for a balanced subset of size `total`: the first
/// (total mod C) classes take one extra.
inline std::vector<int> balanced_counts(int total, int class_count) {
  if (total < 0 || class_count <= 0) throw ValidationError("balanced_counts: bad arguments");
  std::vector<int> counts(class_count, total / class_count);
  for (int i = 0; i < total % class_count; ++i) counts[i] += 1;
  return counts;
}

/// Class-balanced uniform selection of `trusted_count` sample indices.
/// Deterministic for a fixed seed.
inline std::vector<int> select_trusted(const std::vector<int>& class_ids, int class_count,
                                       int trusted_count, std::uint64_t seed) {
  if (trusted_count > static_cast<int>(class_ids.size())) {
    throw ValidationError("select_trusted: trusted count exceeds dataset size");
  }
  const auto quotas = balanced_counts(trusted_count, class_count);
  std::vector<std::vector<int>> by_class(class_count);
  for (int i = 0; i < static_cast<int>(class_ids.size()); ++i) {
    const int c = class_ids[i];
    if (c < 0 || c >= class_count) throw ValidationError("select_trusted: class id out of range");
    by_class[c].push_back(i);
  }
  Rng rng = make_rng(seed, "select-trusted");
  std::vector<int> mask;
  for (int c = 0; c < class_count; ++c) {
    if (quotas[c] > static_cast<int>(by_class[c].size())) {
      throw ValidationError("select_trusted: class " + std::to_string(c) +
                            " has too few samples for its balanced quota");
    }
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    mask.insert(mask.end(), by_class[c].begin(), by_class[c].begin() + quotas[c]);
  }
  std::sort(mask.begin(), mask.end());
  return mask;
}

// ---------------------------------------------------------------------------
// Injection
// ---------------------------------------------------------------------------

inline NoisedDataset inject_noise(const std::vector<int>& class_ids, const NoiseSpec& spec,
                                  const std::vector<int>& trusted_mask, const LabelBook& book) {
  book.validate();
  const int class_count = book.class_count();
  spec.validate(spec.kind == NoiseKind::Asymmetric ? class_count : 0);

  std::vector<bool> is_trusted(class_ids.size(), false);
  for (int idx : trusted_mask) {
    if (idx < 0 || idx >= static_cast<int>(class_ids.size())) {
      throw ValidationError("inject_noise: trusted index out of range");
    }
    is_trusted[idx] = true;
  }

  // Per-class wrong-class pools. Symmetric: everyone else. Asymmetric: the
  // similarity group minus the class itself.
  std::vector<std::vector<int>> wrong_pool(class_count);
  for (int a = 0; a < class_count; ++a) {
    if (spec.kind == NoiseKind::Symmetric) {
      for (int b = 0; b < class_count; ++b) {
        if (b != a) wrong_pool[a].push_back(b);
      }
    } else {
      for (int b : spec.groups[a]) {
        if (b != a) wrong_pool[a].push_back(b);
      }
    }
  }

  Rng rng = make_rng(spec.seed, "inject-noise");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  NoisedDataset out;
  out.samples.reserve(class_ids.size());
  out.labels.reserve(class_ids.size());
  for (int i = 0; i < static_cast<int>(class_ids.size()); ++i) {
    const int a = class_ids[i];
    if (a < 0 || a >= class_count) throw ValidationError("inject_noise: class id out of range");
    NoisedSample sample{i, a, a, is_trusted[i]};
    if (sample.trusted) {
      out.labels.push_back(book.trusted[a]);
    } else {
      const bool exempt = spec.kind == NoiseKind::Asymmetric && spec.is_exempt(a);
      const bool flip = !exempt && unit(rng) < spec.ratio;
      if (flip) {
        const auto& pool = wrong_pool[a];
        std::uniform_int_distribution<int> pick(0, static_cast<int>(pool.size()) - 1);
        sample.observed_class = pool[pick(rng)];
      }
      out.labels.push_back(book.noisy[sample.observed_class]);
    }
    out.samples.push_back(sample);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct NoiseStats {
  int total = 0;
  int trusted = 0;
  int flipped = 0;
  double flip_rate = 0.0;                      // flipped / non-trusted
  std::vector<double> per_class_flip_rate;     // over non-trusted samples of each true class
  std::vector<std::vector<int>> confusion;     // [true][observed] counts, non-trusted only
};

inline NoiseStats noise_statistics(const NoisedDataset& noised, int class_count) {
  NoiseStats stats;
  stats.total = static_cast<int>(noised.samples.size());
  stats.confusion.assign(class_count, std::vector<int>(class_count, 0));
  std::vector<int> per_class_total(class_count, 0);
  std::vector<int> per_class_flipped(class_count, 0);
  for (const auto& s : noised.samples) {
    if (s.trusted) {
      ++stats.trusted;
      continue;
    }
    stats.confusion[s.true_class][s.observed_class] += 1;
    per_class_total[s.true_class] += 1;
    if (s.observed_class != s.true_class) {
      ++stats.flipped;
      per_class_flipped[s.true_class] += 1;
    }
  }
  const int non_trusted = stats.total - stats.trusted;
  stats.flip_rate = non_trusted > 0 ? static_cast<double>(stats.flipped) / non_trusted : 0.0;
  stats.per_class_flip_rate.assign(class_count, 0.0);
  for (int c = 0; c < class_count; ++c) {
    if (per_class_total[c] > 0) {
      stats.per_class_flip_rate[c] =
          static_cast<double>(per_class_flipped[c]) / per_class_total[c];
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Manifest persistence: per-sample records; features stay in the source data
// files and are referenced by index.
// ---------------------------------------------------------------------------

inline std::string noise_manifest_to_json(const NoisedDataset& noised) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : noised.samples) {
    samples.push_back({{"index", s.index},
                       {"true_class", s.true_class},
                       {"observed_class", s.observed_class},
                       {"trusted", s.trusted}});
  }
  nlohmann::json j{{"samples", std::move(samples)}};
  return j.dump(2) + "\n";
}

inline void write_noise_manifest(const NoisedDataset& noised, const std::filesystem::path& path) {
  write_file_atomic(path, noise_manifest_to_json(noised));
}

inline std::vector<NoisedSample> read_noise_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_to_string(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("noise manifest: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("samples") || !j.at("samples").is_array()) {
    throw FormatError("noise manifest: expected object with a samples array");
  }
  std::vector<NoisedSample> samples;
  for (const auto& rec : j.at("samples")) {
    if (!rec.contains("index") || !rec.contains("true_class") ||
        !rec.contains("observed_class") || !rec.contains("trusted")) {
      throw FormatError("noise manifest: sample record missing fields");
    }
    samples.push_back({rec.at("index").get<int>(), rec.at("true_class").get<int>(),
                       rec.at("observed_class").get<int>(), rec.at("trusted").get<bool>()});
  }
  return samples;
}

}  // namespace conflab
