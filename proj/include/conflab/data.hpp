#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflab/error.hpp"
#include "conflab/io.hpp"
#include "conflab/matrix.hpp"
#include "conflab/rng.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Datasets: a synthetic cluster generator whose classes come in confusable
// pairs, and a CIFAR-10 binary reader. Both produce the same immutable bundle.
// ---------------------------------------------------------------------------

/// Per-feature affine normalization: stored = (raw - mean) / std.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  static Normalization identity(int dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  }

  double denormalize(double value, int feature) const {
    return value * std[feature] + mean[feature];
  }
};

struct DatasetBundle {
  Matrix train_features;
  std::vector<int> train_ids;
  Matrix test_features;
  std::vector<int> test_ids;
  std::vector<std::string> class_names;
  Normalization norm;

  int feature_dim() const { return train_features.cols(); }
  int class_count() const { return static_cast<int>(class_names.size()); }

  void validate() const {
    if (class_names.empty()) throw ValidationError("DatasetBundle: no classes");
    if (train_features.rows() != static_cast<int>(train_ids.size()) ||
        test_features.rows() != static_cast<int>(test_ids.size())) {
      throw ValidationError("DatasetBundle: feature/id count mismatch");
    }
    if (test_features.rows() > 0 && test_features.cols() != train_features.cols()) {
      throw ValidationError("DatasetBundle: train/test feature width mismatch");
    }
    if (static_cast<int>(norm.mean.size()) != feature_dim() ||
        static_cast<int>(norm.std.size()) != feature_dim()) {
      throw ValidationError("DatasetBundle: normalization width mismatch");
    }
    for (int id : train_ids) {
      if (id < 0 || id >= class_count()) throw ValidationError("DatasetBundle: train id range");
    }
    for (int id : test_ids) {
      if (id < 0 || id >= class_count()) throw ValidationError("DatasetBundle: test id range");
    }
  }
};

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int class_count = 4;                     // even
  std::vector<std::pair<int, int>> pairs;  // disjoint, covering; default (0,1),(2,3),...
  int dim = 8;
  double delta_sim = 1.0;   // distance between paired class means
  double delta_dis = 6.0;   // distance between pair centroids
  int train_per_class = 500;
  int test_per_class = 500;
  double noise_std = 0.5;
  std::uint64_t seed = 0;

  std::vector<std::pair<int, int>> effective_pairs() const {
    if (!pairs.empty()) return pairs;
    std::vector<std::pair<int, int>> out;
    for (int c = 0; c + 1 < class_count; c += 2) out.emplace_back(c, c + 1);
    return out;
  }

  void validate() const {
    if (class_count < 2 || class_count % 2 != 0) {
      throw ValidationError("SyntheticSpec: class count must be even and >= 2");
    }
    const auto ps = effective_pairs();
    std::vector<bool> seen(class_count, false);
    for (const auto& [a, b] : ps) {
      if (a < 0 || a >= class_count || b < 0 || b >= class_count || a == b) {
        throw ValidationError("SyntheticSpec: bad pair");
      }
      if (seen[a] || seen[b]) throw ValidationError("SyntheticSpec: pairs must be disjoint");
      seen[a] = seen[b] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw ValidationError("SyntheticSpec: pairs must cover every class");
    }
    if (!(delta_sim >= 0.0) || !(delta_dis > 0.0) || delta_sim >= delta_dis) {
      throw ValidationError("SyntheticSpec: need 0 <= delta_sim < delta_dis");
    }
    const int pair_count = class_count / 2;
    if (dim < 2 * pair_count) {
      throw ValidationError("SyntheticSpec: dim must be >= class_count for this construction");
    }
    if (train_per_class < 1 || test_per_class < 1) {
      throw ValidationError("SyntheticSpec: per-class counts must be >= 1");
    }
    if (noise_std < 0.0) throw ValidationError("SyntheticSpec: noise std must be >= 0");
  }
};

namespace detail {

/// Pair centroids sit at scaled, centered basis vertices (pairwise distance
/// exactly delta_dis); each pair's two means are offset +-delta_sim/2 along a
/// random unit direction orthogonal to the centroid coordinates and to the
/// other pairs' directions.
inline std::vector<std::vector<double>> synthetic_means(const SyntheticSpec& spec) {
  const auto pairs = spec.effective_pairs();
  const int pair_count = static_cast<int>(pairs.size());
  const int d = spec.dim;
  const double s = spec.delta_dis / std::sqrt(2.0);

  std::vector<std::vector<double>> centroids(pair_count, std::vector<double>(d, 0.0));
  for (int p = 0; p < pair_count; ++p) {
    for (int q = 0; q < pair_count; ++q) {
      centroids[p][q] = (p == q ? s : 0.0) - s / pair_count;
    }
  }

  Rng rng = make_rng(spec.seed, "synthetic-dirs");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> dirs;
  for (int p = 0; p < pair_count; ++p) {
    std::vector<double> u(d, 0.0);
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 100) throw InternalError("synthetic_means: failed to draw offset direction");
      for (int i = 0; i < d; ++i) u[i] = i < pair_count ? 0.0 : gauss(rng);
      for (const auto& prev : dirs) {
        double proj = 0.0;
        for (int i = 0; i < d; ++i) proj += u[i] * prev[i];
        for (int i = 0; i < d; ++i) u[i] -= proj * prev[i];
      }
      double norm = 0.0;
      for (double v : u) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (double& v : u) v /= norm;
        break;
      }
    }
    dirs.push_back(u);
  }

  std::vector<std::vector<double>> means(spec.class_count, std::vector<double>(d, 0.0));
  for (int p = 0; p < pair_count; ++p) {
    const auto& [a, b] = pairs[p];
    for (int i = 0; i < d; ++i) {
      means[a][i] = centroids[p][i] + 0.5 * spec.delta_sim * dirs[p][i];
      means[b][i] = centroids[p][i] - 0.5 * spec.delta_sim * dirs[p][i];
    }
  }
  return means;
}

inline void fill_gaussian_samples(Matrix& features, std::vector<int>& ids,
                                  const std::vector<std::vector<double>>& means, int per_class,
                                  double noise_std, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = static_cast<int>(means[0].size());
  int row = 0;
  for (int c = 0; c < static_cast<int>(means.size()); ++c) {
    for (int n = 0; n < per_class; ++n, ++row) {
      auto out = features.row(row);
      for (int i = 0; i < d; ++i) out[i] = means[c][i] + noise_std * gauss(rng);
      ids[row] = c;
    }
  }
}

}  // namespace detail

inline DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto means = detail::synthetic_means(spec);
  DatasetBundle bundle;
  bundle.train_features = Matrix(spec.class_count * spec.train_per_class, spec.dim);
  bundle.train_ids.resize(bundle.train_features.rows());
  bundle.test_features = Matrix(spec.class_count * spec.test_per_class, spec.dim);
  bundle.test_ids.resize(bundle.test_features.rows());
  Rng train_rng = make_rng(spec.seed, "synthetic-train");
  Rng test_rng = make_rng(spec.seed, "synthetic-test");
  detail::fill_gaussian_samples(bundle.train_features, bundle.train_ids, means,
                                spec.train_per_class, spec.noise_std, train_rng);
  detail::fill_gaussian_samples(bundle.test_features, bundle.test_ids, means, spec.test_per_class,
                                spec.noise_std, test_rng);
  for (int c = 0; c < spec.class_count; ++c) {
    bundle.class_names.push_back("class_" + std::to_string(c));
  }
  bundle.norm = Normalization::identity(spec.dim);
  bundle.validate();
  return bundle;
}

/// The exact class means the generator used — handy for nearest-mean oracles.
inline std::vector<std::vector<double>> synthetic_class_means(const SyntheticSpec& spec) {
  spec.validate();
  return detail::synthetic_means(spec);
}

// ---------------------------------------------------------------------------
// Stratified re-split
// ---------------------------------------------------------------------------

/// Pools the bundle's train and test sets and re-splits them stratified by
/// class (largest-remainder rounding, so per-class proportions hold within
/// one sample). Deterministic for a fixed seed.
inline DatasetBundle split(const DatasetBundle& bundle, double test_fraction, std::uint64_t seed) {
  bundle.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("split: test fraction must lie in (0,1)");
  }
  const int d = bundle.feature_dim();
  const int total = bundle.train_features.rows() + bundle.test_features.rows();
  Matrix pool(total, d);
  std::vector<int> pool_ids(total);
  for (int r = 0; r < bundle.train_features.rows(); ++r) {
    std::copy_n(bundle.train_features.row(r).data(), d, pool.row(r).data());
    pool_ids[r] = bundle.train_ids[r];
  }
  for (int r = 0; r < bundle.test_features.rows(); ++r) {
    const int dst = bundle.train_features.rows() + r;
    std::copy_n(bundle.test_features.row(r).data(), d, pool.row(dst).data());
    pool_ids[dst] = bundle.test_ids[r];
  }

  const int c = bundle.class_count();
  std::vector<std::vector<int>> by_class(c);
  for (int i = 0; i < total; ++i) by_class[pool_ids[i]].push_back(i);

  // Largest-remainder apportionment of the test side.
  const int test_total = static_cast<int>(std::lround(total * test_fraction));
  std::vector<int> test_counts(c);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int k = 0; k < c; ++k) {
    if (by_class[k].size() < 2) {
      throw ValidationError("split: class " + bundle.class_names[k] + " has fewer than 2 samples");
    }
    const double ideal = by_class[k].size() * test_fraction;
    test_counts[k] = static_cast<int>(ideal);
    assigned += test_counts[k];
    remainders.push_back({ideal - test_counts[k], k});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (int i = 0; i < test_total - assigned && i < c; ++i) {
    test_counts[remainders[i].second] += 1;
  }
  for (int k = 0; k < c; ++k) {
    const int n = static_cast<int>(by_class[k].size());
    if (test_counts[k] < 1 || test_counts[k] > n - 1) {
      throw ValidationError("split: fraction leaves class " + bundle.class_names[k] +
                            " empty on one side");
    }
  }

  Rng rng = make_rng(seed, "split");
  std::vector<int> test_rows, train_rows;
  for (int k = 0; k < c; ++k) {
    std::shuffle(by_class[k].begin(), by_class[k].end(), rng);
    test_rows.insert(test_rows.end(), by_class[k].begin(), by_class[k].begin() + test_counts[k]);
    train_rows.insert(train_rows.end(), by_class[k].begin() + test_counts[k], by_class[k].end());
  }
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  DatasetBundle out;
  out.class_names = bundle.class_names;
  out.norm = bundle.norm;
  out.train_features = Matrix(static_cast<int>(train_rows.size()), d);
  out.test_features = Matrix(static_cast<int>(test_rows.size()), d);
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    std::copy_n(pool.row(train_rows[i]).data(), d, out.train_features.row(static_cast<int>(i)).data());
    out.train_ids.push_back(pool_ids[train_rows[i]]);
  }
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    std::copy_n(pool.row(test_rows[i]).data(), d, out.test_features.row(static_cast<int>(i)).data());
    out.test_ids.push_back(pool_ids[test_rows[i]]);
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: 3073-byte records, 1 label byte then three
// 1024-byte row-major 32x32 planes (R,G,B).
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& cifar10_class_names() {
  static const std::vector<std::string> names = {"airplane", "automobile", "bird", "cat", "deer",
                                                 "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

/// The look-alike pairings used for asymmetric label noise: cat/dog,
/// bird/airplane, deer/horse, truck/automobile. Frog and ship have no
/// partner.
inline std::vector<std::pair<int, int>> cifar10_similarity_pairs() {
  return {{3, 5}, {2, 0}, {4, 7}, {9, 1}};
}

inline std::vector<int> cifar10_unpaired_classes() { return {6, 8}; }

namespace detail {

constexpr int kCifarRecordBytes = 3073;
constexpr int kCifarPixels = 3072;
constexpr int kCifarPlane = 1024;

inline void read_cifar_file(const std::filesystem::path& path, std::vector<double>& features,
                            std::vector<int>& ids) {
  const std::string bytes = read_file_to_string(path);
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar10: " + path.string() + " length " + std::to_string(bytes.size()) +
                      " is not a positive multiple of 3073");
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  for (std::size_t r = 0; r < records; ++r) {
    const unsigned char* rec =
        reinterpret_cast<const unsigned char*>(bytes.data()) + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("cifar10: " + path.string() + " record " + std::to_string(r) +
                        " has label byte " + std::to_string(int(rec[0])));
    }
    ids.push_back(rec[0]);
    for (int i = 0; i < kCifarPixels; ++i) features.push_back(rec[1 + i] / 255.0);
  }
}

}  // namespace detail

/// Reads train/test batch files, scales pixels to [0,1], and standardizes per
/// channel with statistics computed on the train set only. De-normalizing
/// reproduces the original bytes exactly.
inline DatasetBundle read_cifar10_binary(const std::vector<std::filesystem::path>& train_files,
                                         const std::vector<std::filesystem::path>& test_files) {
  if (train_files.empty()) throw ValidationError("cifar10: no train files given");
  std::vector<double> train_raw, test_raw;
  DatasetBundle bundle;
  for (const auto& p : train_files) detail::read_cifar_file(p, train_raw, bundle.train_ids);
  for (const auto& p : test_files) detail::read_cifar_file(p, test_raw, bundle.test_ids);

  const int n_train = static_cast<int>(bundle.train_ids.size());
  const int n_test = static_cast<int>(bundle.test_ids.size());

  // Per-channel train statistics over the [0,1]-scaled pixels.
  double ch_mean[3] = {0, 0, 0}, ch_var[3] = {0, 0, 0};
  for (int r = 0; r < n_train; ++r) {
    for (int ch = 0; ch < 3; ++ch) {
      const double* plane = train_raw.data() + r * detail::kCifarPixels + ch * detail::kCifarPlane;
      for (int k = 0; k < detail::kCifarPlane; ++k) ch_mean[ch] += plane[k];
    }
  }
  const double denom = static_cast<double>(n_train) * detail::kCifarPlane;
  for (int ch = 0; ch < 3; ++ch) ch_mean[ch] /= denom;
  for (int r = 0; r < n_train; ++r) {
    for (int ch = 0; ch < 3; ++ch) {
      const double* plane = train_raw.data() + r * detail::kCifarPixels + ch * detail::kCifarPlane;
      for (int k = 0; k < detail::kCifarPlane; ++k) {
        const double diff = plane[k] - ch_mean[ch];
        ch_var[ch] += diff * diff;
      }
    }
  }
  bundle.norm.mean.resize(detail::kCifarPixels);
  bundle.norm.std.resize(detail::kCifarPixels);
  for (int ch = 0; ch < 3; ++ch) {
    double sd = std::sqrt(ch_var[ch] / denom);
    if (sd == 0.0) sd = 1.0;
    for (int k = 0; k < detail::kCifarPlane; ++k) {
      bundle.norm.mean[ch * detail::kCifarPlane + k] = ch_mean[ch];
      bundle.norm.std[ch * detail::kCifarPlane + k] = sd;
    }
  }

  auto standardize = [&](const std::vector<double>& raw, int rows) {
    Matrix m(rows, detail::kCifarPixels);
    for (int r = 0; r < rows; ++r) {
      auto out = m.row(r);
      const double* in = raw.data() + r * detail::kCifarPixels;
      for (int i = 0; i < detail::kCifarPixels; ++i) {
        out[i] = (in[i] - bundle.norm.mean[i]) / bundle.norm.std[i];
      }
    }
    return m;
  };
  bundle.train_features = standardize(train_raw, n_train);
  bundle.test_features = standardize(test_raw, n_test);
  bundle.class_names = cifar10_class_names();
  bundle.validate();
  return bundle;
}

/// Inverts normalization and the /255 scaling back to the original bytes.
inline std::vector<std::uint8_t> denormalize_to_bytes(const Normalization& norm,
                                                      std::span<const double> features) {
  std::vector<std::uint8_t> bytes(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double raw = norm.denormalize(features[i], static_cast<int>(i)) * 255.0;
    bytes[i] = static_cast<std::uint8_t>(std::lround(raw));
  }
  return bytes;
}

/// Random +-4-pixel crop with zero fill (zero as in black pixels, expressed
/// in normalized units) and a fair-coin horizontal flip, in place.
inline void augment_crop_flip(std::span<double> features, const Normalization& norm, Rng& rng) {
  if (features.size() != detail::kCifarPixels) {
    throw ValidationError("augment_crop_flip: expects 3x32x32 features");
  }
  std::uniform_int_distribution<int> shift(-4, 4);
  std::bernoulli_distribution coin(0.5);
  const int dx = shift(rng), dy = shift(rng);
  const bool flip = coin(rng);
  std::vector<double> out(detail::kCifarPixels);
  for (int ch = 0; ch < 3; ++ch) {
    const int base = ch * detail::kCifarPlane;
    const double black = (0.0 - norm.mean[base]) / norm.std[base];
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const int sx0 = flip ? 31 - x : x;
        const int sx = sx0 + dx, sy = y + dy;
        out[base + y * 32 + x] = (sx >= 0 && sx < 32 && sy >= 0 && sy < 32)
                                     ? features[base + sy * 32 + sx]
                                     : black;
      }
    }
  }
  std::copy(out.begin(), out.end(), features.begin());
}

// ---------------------------------------------------------------------------
// Synthetic persistence: header JSON + flat little-endian float64 features
// (train rows then test rows, row-major).
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts are unsupported");

inline void save_synthetic(const DatasetBundle& bundle, const SyntheticSpec& spec,
                           const std::filesystem::path& dir) {
  bundle.validate();
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : spec.effective_pairs()) pairs.push_back({a, b});
  nlohmann::json header{
      {"format", "conflab-synthetic"},
      {"version", 1},
      {"spec",
       {{"class_count", spec.class_count},
        {"pairs", std::move(pairs)},
        {"dim", spec.dim},
        {"delta_sim", spec.delta_sim},
        {"delta_dis", spec.delta_dis},
        {"train_per_class", spec.train_per_class},
        {"test_per_class", spec.test_per_class},
        {"noise_std", spec.noise_std},
        {"seed", spec.seed}}},
      {"dim", bundle.feature_dim()},
      {"class_names", bundle.class_names},
      {"train_ids", bundle.train_ids},
      {"test_ids", bundle.test_ids},
  };
  write_file_atomic(dir / "dataset.json", header.dump(2) + "\n");

  std::string blob;
  auto append_rows = [&](const Matrix& m) {
    const char* p = reinterpret_cast<const char*>(m.values().data());
    blob.append(p, m.size() * sizeof(double));
  };
  append_rows(bundle.train_features);
  append_rows(bundle.test_features);
  write_file_atomic(dir / "features.f64", blob);
}

struct SavedSynthetic {
  DatasetBundle bundle;
  SyntheticSpec spec;
};

inline SavedSynthetic load_synthetic(const std::filesystem::path& dir) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_file_to_string(dir / "dataset.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("synthetic dataset: invalid header JSON: ") + e.what());
  }
  if (header.value("format", "") != "conflab-synthetic") {
    throw FormatError("synthetic dataset: unrecognized header format");
  }
  SavedSynthetic out;
  try {
    const auto& s = header.at("spec");
    out.spec.class_count = s.at("class_count").get<int>();
    for (const auto& p : s.at("pairs")) {
      out.spec.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
    out.spec.dim = s.at("dim").get<int>();
    out.spec.delta_sim = s.at("delta_sim").get<double>();
    out.spec.delta_dis = s.at("delta_dis").get<double>();
    out.spec.train_per_class = s.at("train_per_class").get<int>();
    out.spec.test_per_class = s.at("test_per_class").get<int>();
    out.spec.noise_std = s.at("noise_std").get<double>();
    out.spec.seed = s.at("seed").get<std::uint64_t>();
    out.bundle.class_names = header.at("class_names").get<std::vector<std::string>>();
    out.bundle.train_ids = header.at("train_ids").get<std::vector<int>>();
    out.bundle.test_ids = header.at("test_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("synthetic dataset: malformed header: ") + e.what());
  }
  const int d = header.at("dim").get<int>();
  const int n_train = static_cast<int>(out.bundle.train_ids.size());
  const int n_test = static_cast<int>(out.bundle.test_ids.size());
  const std::string blob = read_file_to_string(dir / "features.f64");
  const std::size_t expected = static_cast<std::size_t>(n_train + n_test) * d * sizeof(double);
  if (blob.size() != expected) {
    throw FormatError("synthetic dataset: feature file has " + std::to_string(blob.size()) +
                      " bytes, expected " + std::to_string(expected));
  }
  out.bundle.train_features = Matrix(n_train, d);
  out.bundle.test_features = Matrix(n_test, d);
  std::memcpy(out.bundle.train_features.values().data(), blob.data(),
              static_cast<std::size_t>(n_train) * d * sizeof(double));
  std::memcpy(out.bundle.test_features.values().data(),
              blob.data() + static_cast<std::size_t>(n_train) * d * sizeof(double),
              static_cast<std::size_t>(n_test) * d * sizeof(double));
  out.bundle.norm = Normalization::identity(d);
  out.bundle.validate();
  return out;
}

}  // namespace conflab
