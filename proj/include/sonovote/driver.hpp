#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sonovote/augment.hpp"
#include "sonovote/checkpoint.hpp"
#include "sonovote/dataset.hpp"
#include "sonovote/ensemble.hpp"
#include "sonovote/figures.hpp"
#include "sonovote/folds.hpp"
#include "sonovote/metrics.hpp"
#include "sonovote/model.hpp"
#include "sonovote/run_config.hpp"
#include "sonovote/trainer.hpp"

namespace sonovote {

// Error taxonomy mirrored by the CLI's exit codes: usage 1, data 2,
// training 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace fsys = std::filesystem;

inline nlohmann::json read_json_file(const fsys::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("bad JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const fsys::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Ingest.

struct IngestResult {
  DatasetManifest merged;
  std::vector<std::pair<std::string, DatasetManifest>> per_source;
};

inline IngestResult ingest_sources(const std::vector<DatasetSource>& sources,
                                   const WarnSink& warn) {
  if (sources.empty()) throw UsageError("no dataset roots given");
  IngestResult result;
  for (const auto& src : sources) {
    DatasetManifest manifest;
    try {
      manifest = ingest(src.root, src.origin, warn);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
    result.per_source.emplace_back(src.origin, manifest);
  }
  result.merged = result.per_source.front().second;
  for (std::size_t i = 1; i < result.per_source.size(); ++i) {
    try {
      result.merged = merge(result.merged, result.per_source[i].second);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }
  return result;
}

// Class-by-origin count table, one column per source plus a totals column.
inline std::string format_distribution_table(const IngestResult& ingest) {
  std::ostringstream out;
  out << std::left << std::setw(11) << "class";
  for (const auto& [origin, manifest] : ingest.per_source) {
    out << std::right << std::setw(std::max<std::size_t>(origin.size() + 2, 8))
        << origin;
  }
  out << std::right << std::setw(8) << "total" << '\n';
  for (ClassLabel label : all_labels()) {
    out << std::left << std::setw(11) << class_name(label);
    for (const auto& [origin, manifest] : ingest.per_source) {
      out << std::right
          << std::setw(std::max<std::size_t>(origin.size() + 2, 8))
          << manifest.class_counts[label_index(label)];
    }
    out << std::right << std::setw(8)
        << ingest.merged.class_counts[label_index(label)] << '\n';
  }
  out << std::left << std::setw(11) << "total";
  for (const auto& [origin, manifest] : ingest.per_source) {
    out << std::right << std::setw(std::max<std::size_t>(origin.size() + 2, 8))
        << manifest.size();
  }
  out << std::right << std::setw(8) << ingest.merged.size() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Cross-validation run.

struct FoldModelResult {
  std::string model;
  int fold = 0;
  bool ok = false;
  std::string error;
  MetricsReport report;
  TrainRecord record;
};

struct CvResult {
  fsys::path run_dir;
  std::vector<FoldModelResult> results;
  std::map<std::string, MetricsReport> mean_reports;
  std::vector<std::string> failures;
};

inline void write_predictions_jsonl(const fsys::path& path,
                                    const std::vector<EvalItem>& items) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& item : items) {
    nlohmann::json j;
    j["sample_id"] = item.sample_id;
    j["probabilities"] = item.prediction.probabilities;
    j["predicted"] = class_name(item.prediction.predicted);
    j["true_label"] = class_name(item.truth);
    out << j.dump() << '\n';
  }
}

inline std::vector<EvalItem> read_predictions_jsonl(const fsys::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<EvalItem> items;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    EvalItem item;
    item.sample_id = j.at("sample_id").get<std::string>();
    for (int c = 0; c < kNumClasses; ++c) {
      item.prediction.probabilities[c] = j.at("probabilities").at(c).get<double>();
    }
    item.prediction.predicted = parse_class(j.at("predicted").get<std::string>());
    item.truth = parse_class(j.at("true_label").get<std::string>());
    items.push_back(std::move(item));
  }
  return items;
}

inline MetricsReport report_from_eval(const std::vector<EvalItem>& items) {
  ConfusionMatrix cm;
  std::vector<ScoredSample> scored;
  scored.reserve(items.size());
  for (const auto& item : items) {
    cm.add(item.truth, item.prediction.predicted);
    scored.push_back({item.sample_id, item.prediction.probabilities, item.truth});
  }
  return report(cm, scored);
}

namespace detail {

template <class T>
FoldModelResult run_one_task(const RunConfig& cfg, const ModelEntry& model,
                             int fold, const std::vector<LabeledImage>& images,
                             const FoldPlan& plan, const fsys::path& run_dir) {
  FoldModelResult result;
  result.model = model.name;
  result.fold = fold;
  const fsys::path dir =
      run_dir / ("fold" + std::to_string(fold)) / model.name;
  try {
    fsys::create_directories(dir);
    std::vector<LabeledImage> train_set, test_set;
    for (const auto& img : images) {
      (plan.assignment.at(img.sample_id) == fold ? test_set : train_set)
          .push_back(img);
    }
    if (cfg.bagging == BaggingMode::bootstrap) {
      DetRng boot(mix_seed(cfg.seed, fnv1a(model.name),
                           static_cast<std::uint64_t>(fold), 0xB007ull));
      std::vector<LabeledImage> resampled;
      resampled.reserve(train_set.size());
      for (std::size_t i = 0; i < train_set.size(); ++i) {
        resampled.push_back(train_set[boot.below(train_set.size())]);
      }
      train_set = std::move(resampled);
    }

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.optimizer = model.optimizer;
    tc.augment = cfg.augment;
    tc.augment.seed = mix_seed(cfg.augment.seed, fnv1a(model.name),
                               static_cast<std::uint64_t>(fold));
    tc.seed = mix_seed(cfg.seed, fnv1a(model.name),
                       static_cast<std::uint64_t>(fold));
    tc.spec = model.spec;

    auto [params, record] = train<T>(tc, train_set);
    const fsys::path ckpt = dir / "checkpoint.bin";
    save_checkpoint(ckpt, model.spec, params, cfg.epochs);
    record.checkpoint = ckpt.string();
    write_train_record(dir / "trainrecord.json", record);

    const auto items = evaluate(params, model.spec, test_set);
    write_predictions_jsonl(dir / "predictions.jsonl", items);
    result.report = report_from_eval(items);
    write_json_file(dir / "metrics.json", report_to_json(result.report));
    result.record = std::move(record);
    result.ok = true;
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

template <class T>
CvResult run_cv_impl(const RunConfig& cfg, const fsys::path& run_dir,
                     std::ostream& log) {
  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    std::lock_guard<std::mutex> lock(log_mutex);
    log << line << '\n' << std::flush;
  };

  fsys::create_directories(run_dir);
  {
    std::ofstream cfg_copy(run_dir / "config.ini");
    cfg_copy << cfg.source_text;
  }

  const IngestResult ingested = ingest_sources(
      cfg.datasets, [&](const std::string& w) { say("warning: " + w); });
  write_manifest_csv(run_dir / "manifest.csv", ingested.merged);
  say("ingested " + std::to_string(ingested.merged.size()) + " samples");

  FoldPlan plan;
  try {
    plan = make_folds(ingested.merged, cfg.k, cfg.seed, cfg.stratified);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  write_fold_plan(run_dir / "foldplan.json", plan);

  std::vector<LabeledImage> images;
  images.reserve(ingested.merged.size());
  for (const auto& entry : ingested.merged.entries) {
    LabeledImage img;
    try {
      img = load_labeled_image(entry);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
    if (cfg.working_size > 0 && (img.image.height != cfg.working_size ||
                                 img.image.width != cfg.working_size)) {
      img.image = resize(img.image, cfg.working_size, cfg.working_size,
                         img.image.channels);
    }
    images.push_back(std::move(img));
  }

  struct Task {
    const ModelEntry* model;
    int fold;
  };
  std::vector<Task> tasks;
  for (int fold = 0; fold < cfg.k; ++fold) {
    for (const auto& model : cfg.models) tasks.push_back({&model, fold});
  }

  CvResult cv;
  cv.run_dir = run_dir;
  cv.results.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      const Task& task = tasks[i];
      say("train " + task.model->name + " fold " + std::to_string(task.fold));
      cv.results[i] = run_one_task<T>(cfg, *task.model, task.fold, images,
                                      plan, run_dir);
      const FoldModelResult& r = cv.results[i];
      if (r.ok) {
        std::ostringstream line;
        line << "done  " << r.model << " fold " << r.fold << "  acc "
             << std::fixed << std::setprecision(4)
             << r.report.accuracy.value_or(0.0);
        say(line.str());
      } else {
        say("FAIL  " + r.model + " fold " + std::to_string(r.fold) + ": " +
            r.error);
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(cfg.jobs, tasks.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  fsys::create_directories(run_dir / "mean");
  nlohmann::json summary;
  summary["seed"] = cfg.seed;
  summary["k"] = cfg.k;
  summary["precision"] = cfg.precision;
  nlohmann::json model_summaries;
  for (const auto& model : cfg.models) {
    std::vector<MetricsReport> fold_reports;
    for (const auto& r : cv.results) {
      if (r.model == model.name && r.ok) fold_reports.push_back(r.report);
      if (r.model == model.name && !r.ok) {
        cv.failures.push_back(model.name + "/fold" + std::to_string(r.fold) +
                              ": " + r.error);
      }
    }
    nlohmann::json ms;
    ms["folds_ok"] = fold_reports.size();
    if (!fold_reports.empty()) {
      const MetricsReport mean = mean_report(fold_reports);
      cv.mean_reports.emplace(model.name, mean);
      write_json_file(run_dir / "mean" / (model.name + ".json"),
                      report_to_json(mean));
      ms["mean_accuracy"] = opt_to_json(mean.accuracy);
      ms["mean_macro_auc"] = opt_to_json(mean.macro.auc);
    }
    model_summaries[model.name] = std::move(ms);
  }
  summary["models"] = std::move(model_summaries);
  summary["failures"] = cv.failures;
  write_json_file(run_dir / "summary.json", summary);
  for (const auto& f : cv.failures) say("failure: " + f);
  return cv;
}

}  // namespace detail

inline CvResult run_cv(const RunConfig& cfg, const fsys::path& run_dir,
                       std::ostream& log) {
  if (cfg.models.empty()) throw UsageError("config defines no [model] sections");
  if (cfg.datasets.empty()) throw UsageError("config defines no [dataset] sections");
  if (cfg.precision == "f32") {
    return detail::run_cv_impl<float>(cfg, run_dir, log);
  }
  return detail::run_cv_impl<double>(cfg, run_dir, log);
}

// ---------------------------------------------------------------------------
// Ensemble over a finished cv run.

struct EnsembleRunResult {
  EnsembleSpec spec;
  std::vector<MetricsReport> per_fold;
  MetricsReport mean;
  MetricsReport pooled;
  fsys::path out_dir;
};

inline EnsembleRunResult run_ensemble(const fsys::path& run_dir, int m,
                                      std::optional<TieBreak> tie_break,
                                      std::ostream& log) {
  const RunConfig cfg = [&] {
    std::ifstream in(run_dir / "config.ini");
    if (!in) throw DataError("no config.ini under " + run_dir.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
      return parse_run_config_text(buf.str());
    } catch (const std::exception& e) {
      throw DataError(std::string("bad config in run directory: ") + e.what());
    }
  }();
  if (m <= 0) m = cfg.ensemble_m;

  std::map<std::string, MetricsReport> reports;
  for (const auto& model : cfg.models) {
    const fsys::path mean_path = run_dir / "mean" / (model.name + ".json");
    if (fsys::exists(mean_path)) {
      reports.emplace(model.name, report_from_json(read_json_file(mean_path)));
    }
  }
  if (reports.size() < 2 || static_cast<std::size_t>(m) > reports.size()) {
    throw DataError("run has " + std::to_string(reports.size()) +
                    " models with mean reports; need at least max(2, m=" +
                    std::to_string(m) + ")");
  }

  EnsembleRunResult result;
  result.spec.tie_break = tie_break.value_or(cfg.tie_break);
  try {
    result.spec.member_ids = select_members(reports, m);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  {
    std::string names;
    for (const auto& id : result.spec.member_ids) {
      names += (names.empty() ? "" : ", ") + id;
    }
    log << "ensemble members: " << names << '\n';
  }

  result.out_dir = run_dir / "ensemble";
  if (fsys::exists(result.out_dir)) {
    throw DataError("ensemble output already exists: " +
                    result.out_dir.string() +
                    " (runs are append-only; remove it to recompute)");
  }
  fsys::create_directories(result.out_dir);

  ConfusionMatrix pooled_cm;
  std::vector<ScoredSample> pooled_scored;
  std::ofstream votes(result.out_dir / "votes.jsonl");
  if (!votes) throw DataError("cannot write votes.jsonl");

  for (int fold = 0; fold < cfg.k; ++fold) {
    std::map<std::string, std::vector<EvalItem>> per_member;
    for (const auto& id : result.spec.member_ids) {
      const fsys::path pred = run_dir / ("fold" + std::to_string(fold)) / id /
                              "predictions.jsonl";
      per_member.emplace(id, read_predictions_jsonl(pred));
    }
    auto [outcomes, cm] = [&] {
      try {
        return evaluate_ensemble(result.spec, per_member);
      } catch (const std::exception& e) {
        throw DataError("fold " + std::to_string(fold) + ": " + e.what());
      }
    }();

    // The ensemble's per-sample score is the members' mean probability
    // vector; the decided label still comes from the vote.
    std::map<std::string, ClassLabel> truth_by_id;
    for (const auto& item : per_member.at(result.spec.member_ids.front())) {
      truth_by_id[item.sample_id] = item.truth;
    }
    std::vector<ScoredSample> scored;
    scored.reserve(outcomes.size());
    for (const auto& o : outcomes) {
      ScoredSample s;
      s.sample_id = o.sample_id;
      s.truth = truth_by_id.at(o.sample_id);
      for (const auto& probs : o.member_probabilities) {
        for (int c = 0; c < kNumClasses; ++c) s.probabilities[c] += probs[c];
      }
      for (int c = 0; c < kNumClasses; ++c) {
        s.probabilities[c] /= static_cast<double>(o.member_probabilities.size());
      }
      scored.push_back(std::move(s));
    }
    result.per_fold.push_back(report(cm, scored));
    pooled_cm += cm;
    pooled_scored.insert(pooled_scored.end(), scored.begin(), scored.end());

    for (const auto& o : outcomes) {
      nlohmann::json j;
      j["fold"] = fold;
      j["sample_id"] = o.sample_id;
      nlohmann::json names = nlohmann::json::array();
      for (ClassLabel v : o.member_votes) names.push_back(class_name(v));
      j["votes"] = std::move(names);
      j["probabilities"] = o.member_probabilities;
      j["decided"] = class_name(o.decided);
      j["tie_broken"] = o.tie_broken;
      j["true_label"] = class_name(truth_by_id.at(o.sample_id));
      votes << j.dump() << '\n';
    }
  }

  result.mean = mean_report(result.per_fold);
  result.pooled = report(pooled_cm, pooled_scored);

  nlohmann::json out;
  out["spec"] = ensemble_spec_to_json(result.spec);
  nlohmann::json per_fold = nlohmann::json::array();
  for (const auto& rep : result.per_fold) per_fold.push_back(report_to_json(rep));
  out["per_fold"] = std::move(per_fold);
  out["mean"] = report_to_json(result.mean);
  out["pooled"] = report_to_json(result.pooled);
  write_json_file(result.out_dir / "ensemble.json", out);
  write_confusion_csv(result.out_dir / "confusion.csv", pooled_cm);
  write_confusion_svg(result.out_dir / "confusion.svg", pooled_cm,
                      "ensemble confusion (all folds)");

  std::vector<std::pair<std::string, RocCurve>> curves;
  for (ClassLabel label : all_labels()) {
    std::vector<std::pair<double, bool>> scores;
    scores.reserve(pooled_scored.size());
    for (const auto& s : pooled_scored) {
      scores.emplace_back(s.probabilities[label_index(label)],
                          s.truth == label);
    }
    try {
      RocCurve curve = roc(std::move(scores));
      write_roc_csv(result.out_dir /
                        ("roc_" + std::string(class_name(label)) + ".csv"),
                    curve);
      curves.emplace_back(class_name(label), std::move(curve));
    } catch (const std::invalid_argument&) {
      // class absent from every test fold; no curve
    }
  }
  write_roc_svg(result.out_dir / "roc.svg", curves,
                "ensemble one-vs-rest ROC (all folds)");
  return result;
}

// ---------------------------------------------------------------------------
// Report rendering.

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

// One row per model plus the ensemble: Sensitivity Specificity Accuracy AUC
// (macro-averaged over classes, mean over folds).
inline std::string render_report_table(const fsys::path& run_dir, bool csv) {
  const RunConfig cfg = [&] {
    std::ifstream in(run_dir / "config.ini");
    if (!in) throw DataError("no config.ini under " + run_dir.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config_text(buf.str());
  }();

  struct Row {
    std::string name;
    std::optional<double> sensitivity, specificity, accuracy, auc;
  };
  std::vector<Row> rows;
  for (const auto& model : cfg.models) {
    Row row;
    row.name = model.name;
    const fsys::path mean_path = run_dir / "mean" / (model.name + ".json");
    if (fsys::exists(mean_path)) {
      const MetricsReport rep = report_from_json(read_json_file(mean_path));
      row.sensitivity = rep.macro.sensitivity;
      row.specificity = rep.macro.specificity;
      row.accuracy = rep.accuracy;
      row.auc = rep.macro.auc;
    }
    rows.push_back(std::move(row));
  }
  {
    Row row;
    row.name = "ensemble";
    const fsys::path ens_path = run_dir / "ensemble" / "ensemble.json";
    if (fsys::exists(ens_path)) {
      const nlohmann::json j = read_json_file(ens_path);
      const MetricsReport rep = report_from_json(j.at("mean"));
      std::string members;
      for (const auto& id :
           j.at("spec").at("member_ids").get<std::vector<std::string>>()) {
        members += (members.empty() ? "" : "+") + id;
      }
      row.name = "ensemble(" + members + ")";
      row.sensitivity = rep.macro.sensitivity;
      row.specificity = rep.macro.specificity;
      row.accuracy = rep.accuracy;
      row.auc = rep.macro.auc;
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream out;
  if (csv) {
    out << "model,sensitivity,specificity,accuracy,auc\n";
    for (const auto& r : rows) {
      out << r.name << ',' << format_metric(r.sensitivity) << ','
          << format_metric(r.specificity) << ',' << format_metric(r.accuracy)
          << ',' << format_metric(r.auc) << '\n';
    }
  } else {
    out << "| Model | Sensitivity | Specificity | Accuracy | AUC |\n"
        << "|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      out << "| " << r.name << " | " << format_metric(r.sensitivity) << " | "
          << format_metric(r.specificity) << " | " << format_metric(r.accuracy)
          << " | " << format_metric(r.auc) << " |\n";
    }
  }
  return out.str();
}

}  // namespace sonovote
