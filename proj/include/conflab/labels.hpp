#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflab/error.hpp"
#include "conflab/io.hpp"
#include "conflab/matrix.hpp"
#include "conflab/mlp.hpp"

namespace conflab {

// ---------------------------------------------------------------------------
// Confidence labels: per-class probability vectors that spread mass over a
// group of similar classes instead of a single one-hot spike. Every class
// carries two variants — one used for ordinary (possibly mislabeled) samples
// and a sharper one reserved for samples whose annotation is known-good.
// ---------------------------------------------------------------------------

struct ConfidenceLabel {
  std::vector<double> scores;  // length = class count, entries in [0,1], sum 1
  bool trusted = false;
};

struct SimilarityGroup {
  int anchor = -1;
  std::vector<int> members;        // ascending, always contains anchor
  std::vector<double> raw_scores;  // aligned with members
  double threshold = 0.0;
  int class_count = 0;
};

inline void validate_scores(const std::vector<double>& scores, const std::string& what) {
  if (scores.empty()) throw ValidationError(what + ": empty score vector");
  double sum = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ValidationError(what + ": scores must be finite and lie in [0,1]");
    }
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ValidationError(what + ": scores must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

/// Classes scoring strictly above `threshold` join the group; the anchor is
/// always included regardless of its own score.
inline SimilarityGroup build_group(std::span<const double> similarity, int anchor,
                                   double threshold) {
  const int class_count = static_cast<int>(similarity.size());
  if (anchor < 0 || anchor >= class_count) {
    throw ValidationError("build_group: anchor out of range");
  }
  SimilarityGroup group;
  group.anchor = anchor;
  group.threshold = threshold;
  group.class_count = class_count;
  for (int b = 0; b < class_count; ++b) {
    if (b == anchor || similarity[b] > threshold) {
      group.members.push_back(b);
      group.raw_scores.push_back(similarity[b]);
    }
  }
  return group;
}

/// Softmax over the group's raw scores, zeros everywhere else.
inline std::vector<double> group_to_label(const SimilarityGroup& group) {
  std::vector<double> label(group.class_count, 0.0);
  auto weights = softmax(std::span<const double>(group.raw_scores));
  for (std::size_t i = 0; i < group.members.size(); ++i) {
    label[group.members[i]] = weights[i];
  }
  return label;
}

inline ConfidenceLabel manual_label(int class_count,
                                    const std::vector<std::pair<int, double>>& entries,
                                    bool trusted) {
  if (class_count <= 0) throw ValidationError("manual_label: class_count must be positive");
  std::vector<double> scores(class_count, 0.0);
  for (const auto& [cls, prob] : entries) {
    if (cls < 0 || cls >= class_count) throw ValidationError("manual_label: class out of range");
    if (scores[cls] != 0.0) throw ValidationError("manual_label: duplicate class entry");
    scores[cls] = prob;
  }
  validate_scores(scores, "manual_label");
  return {std::move(scores), trusted};
}

/// 1-eps on the target, eps/(C-1) spread over the rest.
inline ConfidenceLabel soft_label(int class_count, int target, double eps, bool trusted) {
  if (class_count < 2) throw ValidationError("soft_label: need at least two classes");
  if (target < 0 || target >= class_count) throw ValidationError("soft_label: target out of range");
  if (!(eps >= 0.0) || eps >= 1.0) throw ValidationError("soft_label: eps must lie in [0,1)");
  std::vector<double> scores(class_count, eps / (class_count - 1));
  scores[target] = 1.0 - eps;
  return {std::move(scores), trusted};
}

inline ConfidenceLabel hard_label(int class_count, int target, bool trusted) {
  if (class_count <= 0) throw ValidationError("hard_label: class_count must be positive");
  if (target < 0 || target >= class_count) throw ValidationError("hard_label: target out of range");
  std::vector<double> scores(class_count, 0.0);
  scores[target] = 1.0;
  return {std::move(scores), trusted};
}

// ---------------------------------------------------------------------------
// LabelBook: the full label table for a dataset — one ordinary and one
// trusted variant per class.
// ---------------------------------------------------------------------------

struct LabelBook {
  std::vector<std::string> classes;
  std::vector<ConfidenceLabel> noisy;    // per class, trusted=false
  std::vector<ConfidenceLabel> trusted;  // per class, trusted=true

  int class_count() const { return static_cast<int>(classes.size()); }

  void validate() const {
    if (classes.empty()) throw ValidationError("LabelBook: no classes");
    if (noisy.size() != classes.size() || trusted.size() != classes.size()) {
      throw ValidationError("LabelBook: label count does not match class count");
    }
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i].empty()) throw ValidationError("LabelBook: empty class name");
      for (std::size_t j = i + 1; j < classes.size(); ++j) {
        if (classes[i] == classes[j]) throw ValidationError("LabelBook: duplicate class name");
      }
      if (static_cast<int>(noisy[i].scores.size()) != class_count() ||
          static_cast<int>(trusted[i].scores.size()) != class_count()) {
        throw ValidationError("LabelBook: label width does not match class count");
      }
      validate_scores(noisy[i].scores, "LabelBook noisy[" + classes[i] + "]");
      validate_scores(trusted[i].scores, "LabelBook trusted[" + classes[i] + "]");
      if (noisy[i].trusted || !trusted[i].trusted) {
        throw ValidationError("LabelBook: trusted flags inconsistent");
      }
    }
  }

  /// Support of a label: classes carrying nonzero mass.
  static std::vector<int> support(const ConfidenceLabel& label) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(label.scores.size()); ++i) {
      if (label.scores[i] != 0.0) out.push_back(i);
    }
    return out;
  }
};

/// One-hot labels in both variants: the plain-label baseline.
inline LabelBook hard_book(const std::vector<std::string>& class_names) {
  LabelBook book;
  book.classes = class_names;
  const int c = static_cast<int>(class_names.size());
  for (int i = 0; i < c; ++i) {
    book.noisy.push_back(hard_label(c, i, false));
    book.trusted.push_back(hard_label(c, i, true));
  }
  book.validate();
  return book;
}

/// Manual book for classes that come in look-alike pairs: each class shares
/// mass with its partner, heavily in the ordinary variant and lightly in the
/// trusted one.
inline LabelBook book_from_pairs(const std::vector<std::string>& class_names,
                                 const std::vector<std::pair<int, int>>& pairs,
                                 double noisy_self = 0.6, double trusted_self = 0.95) {
  const int c = static_cast<int>(class_names.size());
  std::vector<int> partner(c, -1);
  for (const auto& [a, b] : pairs) {
    if (a < 0 || a >= c || b < 0 || b >= c || a == b) {
      throw ValidationError("book_from_pairs: bad pair");
    }
    if (partner[a] != -1 || partner[b] != -1) {
      throw ValidationError("book_from_pairs: class appears in more than one pair");
    }
    partner[a] = b;
    partner[b] = a;
  }
  LabelBook book;
  book.classes = class_names;
  for (int i = 0; i < c; ++i) {
    if (partner[i] == -1) {
      book.noisy.push_back(hard_label(c, i, false));
      book.trusted.push_back(hard_label(c, i, true));
    } else {
      book.noisy.push_back(
          manual_label(c, {{i, noisy_self}, {partner[i], 1.0 - noisy_self}}, false));
      book.trusted.push_back(
          manual_label(c, {{i, trusted_self}, {partner[i], 1.0 - trusted_self}}, true));
    }
  }
  book.validate();
  return book;
}

// ---------------------------------------------------------------------------
// Labels derived from a model's own predictions.
// ---------------------------------------------------------------------------

/// Builds a label book from per-sample softmax predictions on held-out data.
/// For each class a: the similarity row is the elementwise mean of the
/// predictions of samples whose true class is a, and the group threshold is
/// mean + population-std of that row's entries. Both variants share the
/// resulting scores; only the trusted flag differs.
inline LabelBook labels_from_predictions(const Matrix& predictions,
                                         const std::vector<int>& class_ids,
                                         const std::vector<std::string>& class_names) {
  const int c = static_cast<int>(class_names.size());
  if (predictions.cols() != c) {
    throw ValidationError("labels_from_predictions: prediction width != class count");
  }
  if (static_cast<int>(class_ids.size()) != predictions.rows()) {
    throw ValidationError("labels_from_predictions: one class id per prediction row required");
  }
  LabelBook book;
  book.classes = class_names;
  for (int a = 0; a < c; ++a) {
    std::vector<double> similarity(c, 0.0);
    int count = 0;
    for (int r = 0; r < predictions.rows(); ++r) {
      if (class_ids[r] < 0 || class_ids[r] >= c) {
        throw ValidationError("labels_from_predictions: class id out of range");
      }
      if (class_ids[r] != a) continue;
      for (int j = 0; j < c; ++j) similarity[j] += predictions(r, j);
      ++count;
    }
    if (count < 2) {
      throw ValidationError("labels_from_predictions: class " + class_names[a] +
                            " has fewer than 2 predictions");
    }
    for (double& s : similarity) s /= count;
    double mean = 0.0;
    for (double s : similarity) mean += s;
    mean /= c;
    double var = 0.0;
    for (double s : similarity) var += (s - mean) * (s - mean);
    var /= c;  // population variance over the C row entries
    const double tau = mean + std::sqrt(var);
    auto scores = group_to_label(build_group(similarity, a, tau));
    book.noisy.push_back({scores, false});
    book.trusted.push_back({std::move(scores), true});
  }
  book.validate();
  return book;
}

// ---------------------------------------------------------------------------
// JSON persistence
// ---------------------------------------------------------------------------

namespace detail {

inline void append_label_map(std::string& out, const LabelBook& book,
                             const std::vector<ConfidenceLabel>& labels) {
  out += "{";
  for (std::size_t i = 0; i < book.classes.size(); ++i) {
    if (i > 0) out += ",";
    out += "\n    \"" + book.classes[i] + "\": {";
    bool first = true;
    for (int j = 0; j < book.class_count(); ++j) {
      if (labels[i].scores[j] == 0.0) continue;
      if (!first) out += ", ";
      first = false;
      out += "\"" + book.classes[j] + "\": " + format_double_sci(labels[i].scores[j]);
    }
    out += "}";
  }
  out += "\n  }";
}

}  // namespace detail

/// Hand-rolled writer so probabilities are emitted with a fixed 18
/// significant digits (exact double round-trip), independent of any
/// library's shortest-representation policy.
inline std::string label_book_to_json(const LabelBook& book) {
  book.validate();
  std::string out = "{\n  \"classes\": [";
  for (std::size_t i = 0; i < book.classes.size(); ++i) {
    if (i > 0) out += ", ";
    out += "\"" + book.classes[i] + "\"";
  }
  out += "],\n  \"noisy\": ";
  detail::append_label_map(out, book, book.noisy);
  out += ",\n  \"trusted\": ";
  detail::append_label_map(out, book, book.trusted);
  out += "\n}\n";
  return out;
}

inline void write_label_book(const LabelBook& book, const std::filesystem::path& path) {
  write_file_atomic(path, label_book_to_json(book));
}

inline LabelBook label_book_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("label book: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("classes") || !j.contains("noisy") || !j.contains("trusted")) {
    throw FormatError("label book: expected object with classes/noisy/trusted");
  }
  LabelBook book;
  for (const auto& name : j.at("classes")) {
    if (!name.is_string()) throw FormatError("label book: class names must be strings");
    book.classes.push_back(name.get<std::string>());
  }
  const int c = book.class_count();
  auto index_of = [&](const std::string& name) {
    for (int i = 0; i < c; ++i) {
      if (book.classes[i] == name) return i;
    }
    throw FormatError("label book: unknown class '" + name + "'");
  };
  auto parse_map = [&](const nlohmann::json& map, bool trusted_flag) {
    if (!map.is_object()) throw FormatError("label book: label map must be an object");
    std::vector<ConfidenceLabel> labels(c);
    std::vector<bool> seen(c, false);
    for (const auto& [name, entries] : map.items()) {
      const int a = index_of(name);
      if (seen[a]) throw FormatError("label book: duplicate entry for '" + name + "'");
      seen[a] = true;
      std::vector<double> scores(c, 0.0);
      if (!entries.is_object()) throw FormatError("label book: entries must be objects");
      for (const auto& [other, prob] : entries.items()) {
        if (!prob.is_number()) throw FormatError("label book: probabilities must be numbers");
        scores[index_of(other)] = prob.get<double>();
      }
      labels[a] = {std::move(scores), trusted_flag};
    }
    for (int i = 0; i < c; ++i) {
      if (!seen[i]) throw FormatError("label book: missing entry for '" + book.classes[i] + "'");
    }
    return labels;
  };
  try {
    book.noisy = parse_map(j.at("noisy"), false);
    book.trusted = parse_map(j.at("trusted"), true);
    book.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("label book: ") + e.what());
  }
  return book;
}

inline LabelBook read_label_book(const std::filesystem::path& path) {
  return label_book_from_json(read_file_to_string(path));
}

}  // namespace conflab
