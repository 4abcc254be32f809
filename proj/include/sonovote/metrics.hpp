#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sonovote/label.hpp"
#include "sonovote/model.hpp"

namespace sonovote {

struct ConfusionMatrix {
  // rows = true class, columns = predicted class
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(ClassLabel truth, ClassLabel predicted) {
    ++counts[label_index(truth)][label_index(predicted)];
  }
  std::uint64_t row_sum(int r) const {
    std::uint64_t s = 0;
    for (int c = 0; c < kNumClasses; ++c) s += counts[r][c];
    return s;
  }
  std::uint64_t col_sum(int c) const {
    std::uint64_t s = 0;
    for (int r = 0; r < kNumClasses; ++r) s += counts[r][c];
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (int i = 0; i < kNumClasses; ++i) s += counts[i][i];
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (int r = 0; r < kNumClasses; ++r) s += row_sum(r);
    return s;
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    for (int r = 0; r < kNumClasses; ++r) {
      for (int c = 0; c < kNumClasses; ++c) counts[r][c] += other.counts[r][c];
    }
    return *this;
  }
  bool operator==(const ConfusionMatrix& other) const {
    return counts == other.counts;
  }
};

struct BinaryCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

// Zero denominators leave a metric unset rather than producing NaN or a
// silent zero; JSON serialization turns unset into null.
struct ScalarMetrics {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> fpr;
  std::optional<double> npv;
  std::optional<double> auc;
};

inline ConfusionMatrix accumulate(
    const std::vector<std::pair<ClassLabel, ClassLabel>>& pairs) {
  ConfusionMatrix cm;
  for (const auto& [truth, predicted] : pairs) cm.add(truth, predicted);
  return cm;
}

inline BinaryCounts one_vs_rest(const ConfusionMatrix& cm, ClassLabel positive) {
  const int p = label_index(positive);
  BinaryCounts b;
  b.tp = cm.counts[p][p];
  b.fn = cm.row_sum(p) - b.tp;
  b.fp = cm.col_sum(p) - b.tp;
  b.tn = cm.total() - b.tp - b.fn - b.fp;
  return b;
}

inline ScalarMetrics scalar_metrics(const BinaryCounts& c) {
  ScalarMetrics m;
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  // Derived from fpr so the two are complementary to the last bit.
  if (m.fpr) m.specificity = 1.0 - *m.fpr;
  m.npv = ratio(c.tn, c.tn + c.fn);
  if (m.precision && m.sensitivity && *m.precision + *m.sensitivity > 0) {
    m.f1 = 2.0 * *m.precision * *m.sensitivity /
           (*m.precision + *m.sensitivity);
  }
  return m;
}

struct RocPoint {
  double threshold = 0;  // positive iff score >= threshold
  double fpr = 0;
  double tpr = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
};

// Threshold sweep over the distinct scores in descending order, starting
// from +infinity; tied scores advance the curve in a single step. AUC is the
// trapezoidal integral of the resulting polyline.
inline RocCurve roc(std::vector<std::pair<double, bool>> scores) {
  std::uint64_t pos = 0, neg = 0;
  for (const auto& [score, is_positive] : scores) {
    (is_positive ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument(
        "ROC undefined: need at least one positive and one negative sample");
  }
  std::sort(scores.begin(), scores.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  // The trapezoid sum is accumulated on the integer counts and divided once
  // at the end, so tied scores and perfect separation come out exact.
  std::uint64_t tp = 0, fp = 0, twice_area = 0;
  std::size_t i = 0;
  while (i < scores.size()) {
    const double threshold = scores[i].first;
    const std::uint64_t prev_tp = tp, prev_fp = fp;
    while (i < scores.size() && scores[i].first == threshold) {
      (scores[i].second ? tp : fp) += 1;
      ++i;
    }
    twice_area += (fp - prev_fp) * (prev_tp + tp);
    curve.points.push_back({threshold,
                            static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
  }
  curve.auc = static_cast<double>(twice_area) /
              (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

struct MetricsReport {
  ConfusionMatrix confusion;
  std::array<ScalarMetrics, kNumClasses> per_class;
  ScalarMetrics macro;
  ScalarMetrics micro;
  std::optional<double> accuracy;  // trace / total
};

namespace detail {

// Mean over the classes where a metric is defined; unset if it never is.
template <class Get>
std::optional<double> macro_mean(
    const std::array<ScalarMetrics, kNumClasses>& per_class, Get get) {
  double sum = 0;
  int n = 0;
  for (const auto& m : per_class) {
    if (const auto v = get(m)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

inline void fill_macro(MetricsReport& report) {
  auto& pc = report.per_class;
  report.macro.accuracy = macro_mean(pc, [](const ScalarMetrics& m) { return m.accuracy; });
  report.macro.sensitivity = macro_mean(pc, [](const ScalarMetrics& m) { return m.sensitivity; });
  report.macro.specificity = macro_mean(pc, [](const ScalarMetrics& m) { return m.specificity; });
  report.macro.precision = macro_mean(pc, [](const ScalarMetrics& m) { return m.precision; });
  report.macro.f1 = macro_mean(pc, [](const ScalarMetrics& m) { return m.f1; });
  report.macro.fpr = macro_mean(pc, [](const ScalarMetrics& m) { return m.fpr; });
  report.macro.npv = macro_mean(pc, [](const ScalarMetrics& m) { return m.npv; });
  report.macro.auc = macro_mean(pc, [](const ScalarMetrics& m) { return m.auc; });
}

}  // namespace detail

struct ScoredSample {
  std::string sample_id;
  std::array<double, kNumClasses> probabilities{};
  ClassLabel truth = ClassLabel::normal;
};

inline MetricsReport report(const ConfusionMatrix& cm,
                            const std::vector<ScoredSample>& samples) {
  std::array<std::uint64_t, kNumClasses> truth_counts{};
  for (const auto& s : samples) ++truth_counts[label_index(s.truth)];
  for (ClassLabel label : all_labels()) {
    const int i = label_index(label);
    if (truth_counts[i] != cm.row_sum(i)) {
      throw std::invalid_argument(
          "probability list disagrees with confusion totals for class '" +
          std::string(class_name(label)) + "'");
    }
  }

  MetricsReport rep;
  rep.confusion = cm;
  BinaryCounts pooled;
  std::vector<std::pair<double, bool>> pooled_scores;
  pooled_scores.reserve(samples.size() * kNumClasses);
  for (ClassLabel label : all_labels()) {
    const int i = label_index(label);
    const BinaryCounts counts = one_vs_rest(cm, label);
    rep.per_class[i] = scalar_metrics(counts);
    pooled.tp += counts.tp;
    pooled.fp += counts.fp;
    pooled.tn += counts.tn;
    pooled.fn += counts.fn;

    std::vector<std::pair<double, bool>> class_scores;
    class_scores.reserve(samples.size());
    for (const auto& s : samples) {
      class_scores.emplace_back(s.probabilities[i], s.truth == label);
      pooled_scores.emplace_back(s.probabilities[i], s.truth == label);
    }
    try {
      rep.per_class[i].auc = roc(std::move(class_scores)).auc;
    } catch (const std::invalid_argument&) {
      // one-class fold: AUC stays unset for this class
    }
  }
  detail::fill_macro(rep);
  rep.micro = scalar_metrics(pooled);
  if (!pooled_scores.empty()) {
    try {
      rep.micro.auc = roc(std::move(pooled_scores)).auc;
    } catch (const std::invalid_argument&) {
    }
  }
  if (cm.total() > 0) {
    rep.accuracy =
        static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  }
  return rep;
}

// Cross-validated summary: scalar fields are averaged over the folds where
// they are defined; the confusion matrix is the element-wise sum.
inline MetricsReport mean_report(const std::vector<MetricsReport>& folds) {
  if (folds.empty()) throw std::invalid_argument("no fold reports to average");
  MetricsReport mean;
  for (const auto& rep : folds) mean.confusion += rep.confusion;

  auto avg = [&](auto get) -> std::optional<double> {
    double sum = 0;
    int n = 0;
    for (const auto& rep : folds) {
      if (const auto v = get(rep)) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  auto avg_scalars = [&](auto select) {
    ScalarMetrics out;
    out.accuracy = avg([&](const MetricsReport& r) { return select(r).accuracy; });
    out.sensitivity = avg([&](const MetricsReport& r) { return select(r).sensitivity; });
    out.specificity = avg([&](const MetricsReport& r) { return select(r).specificity; });
    out.precision = avg([&](const MetricsReport& r) { return select(r).precision; });
    out.f1 = avg([&](const MetricsReport& r) { return select(r).f1; });
    out.fpr = avg([&](const MetricsReport& r) { return select(r).fpr; });
    out.npv = avg([&](const MetricsReport& r) { return select(r).npv; });
    out.auc = avg([&](const MetricsReport& r) { return select(r).auc; });
    return out;
  };

  for (int i = 0; i < kNumClasses; ++i) {
    mean.per_class[i] = avg_scalars(
        [i](const MetricsReport& r) -> const ScalarMetrics& { return r.per_class[i]; });
  }
  mean.macro = avg_scalars(
      [](const MetricsReport& r) -> const ScalarMetrics& { return r.macro; });
  mean.micro = avg_scalars(
      [](const MetricsReport& r) -> const ScalarMetrics& { return r.micro; });
  mean.accuracy = avg([](const MetricsReport& r) { return r.accuracy; });
  return mean;
}

// -------------------------------------------------------------------------
// Serialization.

inline nlohmann::json opt_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

inline std::optional<double> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json scalar_metrics_to_json(const ScalarMetrics& m) {
  return nlohmann::json{
      {"accuracy", opt_to_json(m.accuracy)},
      {"sensitivity", opt_to_json(m.sensitivity)},
      {"specificity", opt_to_json(m.specificity)},
      {"precision", opt_to_json(m.precision)},
      {"f1", opt_to_json(m.f1)},
      {"fpr", opt_to_json(m.fpr)},
      {"npv", opt_to_json(m.npv)},
      {"auc", opt_to_json(m.auc)}};
}

inline ScalarMetrics scalar_metrics_from_json(const nlohmann::json& j) {
  ScalarMetrics m;
  m.accuracy = opt_from_json(j.at("accuracy"));
  m.sensitivity = opt_from_json(j.at("sensitivity"));
  m.specificity = opt_from_json(j.at("specificity"));
  m.precision = opt_from_json(j.at("precision"));
  m.f1 = opt_from_json(j.at("f1"));
  m.fpr = opt_from_json(j.at("fpr"));
  m.npv = opt_from_json(j.at("npv"));
  m.auc = opt_from_json(j.at("auc"));
  return m;
}

inline nlohmann::json confusion_to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < kNumClasses; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < kNumClasses; ++c) row.push_back(cm.counts[r][c]);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  ConfusionMatrix cm;
  for (int r = 0; r < kNumClasses; ++r) {
    for (int c = 0; c < kNumClasses; ++c) {
      cm.counts[r][c] = j.at(r).at(c).get<std::uint64_t>();
    }
  }
  return cm;
}

inline nlohmann::json report_to_json(const MetricsReport& rep) {
  nlohmann::json j;
  j["accuracy"] = opt_to_json(rep.accuracy);
  j["confusion"] = confusion_to_json(rep.confusion);
  nlohmann::json per_class;
  for (ClassLabel label : all_labels()) {
    per_class[class_name(label)] =
        scalar_metrics_to_json(rep.per_class[label_index(label)]);
  }
  j["per_class"] = std::move(per_class);
  j["macro"] = scalar_metrics_to_json(rep.macro);
  j["micro"] = scalar_metrics_to_json(rep.micro);
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport rep;
  rep.accuracy = opt_from_json(j.at("accuracy"));
  rep.confusion = confusion_from_json(j.at("confusion"));
  for (ClassLabel label : all_labels()) {
    rep.per_class[label_index(label)] =
        scalar_metrics_from_json(j.at("per_class").at(class_name(label)));
  }
  rep.macro = scalar_metrics_from_json(j.at("macro"));
  rep.micro = scalar_metrics_from_json(j.at("micro"));
  return rep;
}

inline void write_confusion_csv(const std::filesystem::path& path,
                                const ConfusionMatrix& cm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "true";
  for (ClassLabel label : all_labels()) out << ',' << class_name(label);
  out << '\n';
  for (ClassLabel truth : all_labels()) {
    out << class_name(truth);
    for (int c = 0; c < kNumClasses; ++c) {
      out << ',' << cm.counts[label_index(truth)][c];
    }
    out << '\n';
  }
}

inline void write_roc_csv(const std::filesystem::path& path,
                          const RocCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "threshold,fpr,tpr\n";
  out.precision(17);
  for (const auto& p : curve.points) {
    if (std::isinf(p.threshold)) {
      out << "inf";
    } else {
      out << p.threshold;
    }
    out << ',' << p.fpr << ',' << p.tpr << '\n';
  }
}

}  // namespace sonovote
