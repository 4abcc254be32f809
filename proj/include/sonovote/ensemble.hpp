#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sonovote/label.hpp"
#include "sonovote/metrics.hpp"
#include "sonovote/model.hpp"

namespace sonovote {

enum class TieBreak { summed_probability, best_member };

inline const char* tie_break_name(TieBreak t) {
  return t == TieBreak::summed_probability ? "summed_probability"
                                           : "best_member";
}

inline TieBreak parse_tie_break(const std::string& name) {
  if (name == "summed_probability") return TieBreak::summed_probability;
  if (name == "best_member") return TieBreak::best_member;
  throw std::invalid_argument("unknown tie_break: " + name);
}

struct EnsembleSpec {
  std::vector<std::string> member_ids;  // rank order, best first
  TieBreak tie_break = TieBreak::summed_probability;

  void validate() const {
    if (member_ids.size() < 2) {
      throw std::invalid_argument("ensemble needs at least 2 members");
    }
    std::set<std::string> seen(member_ids.begin(), member_ids.end());
    if (seen.size() != member_ids.size()) {
      throw std::invalid_argument("ensemble member ids must be unique");
    }
  }
};

inline nlohmann::json ensemble_spec_to_json(const EnsembleSpec& spec) {
  return nlohmann::json{{"member_ids", spec.member_ids},
                        {"vote_rule", "majority_mode"},
                        {"tie_break", tie_break_name(spec.tie_break)},
                        {"selection_metric", "accuracy"}};
}

inline EnsembleSpec ensemble_spec_from_json(const nlohmann::json& j) {
  EnsembleSpec spec;
  spec.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  spec.tie_break = parse_tie_break(j.value("tie_break", "summed_probability"));
  spec.validate();
  return spec;
}

struct VoteOutcome {
  std::string sample_id;
  std::vector<ClassLabel> member_votes;
  std::vector<std::array<double, kNumClasses>> member_probabilities;
  ClassLabel decided = ClassLabel::normal;
  bool tie_broken = false;
};

// Ranks models by mean cross-validated accuracy, breaking ties by macro AUC
// and then by id, and returns the top m ids in rank order.
inline std::vector<std::string> select_members(
    const std::map<std::string, MetricsReport>& reports, int m) {
  if (m < 2) throw std::invalid_argument("ensemble size m must be >= 2");
  if (static_cast<std::size_t>(m) > reports.size()) {
    throw std::invalid_argument("asked for " + std::to_string(m) +
                                " members but only " +
                                std::to_string(reports.size()) +
                                " reports given");
  }
  struct Ranked {
    double accuracy;
    double auc;
    std::string id;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(reports.size());
  for (const auto& [id, rep] : reports) {
    ranked.push_back({rep.accuracy.value_or(-1.0), rep.macro.auc.value_or(-1.0), id});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    if (a.auc != b.auc) return a.auc > b.auc;
    return a.id < b.id;
  });
  std::vector<std::string> ids;
  ids.reserve(m);
  for (int i = 0; i < m; ++i) ids.push_back(ranked[i].id);
  return ids;
}

// Majority vote over member argmax labels. When several classes tie for the
// mode, `summed_probability` picks the tied class with the largest total
// probability mass over all members (lowest class index on a further tie);
// `best_member` defers to the earliest-ranked member whose vote is tied.
inline VoteOutcome vote(const EnsembleSpec& spec,
                        const std::vector<Prediction>& member_predictions) {
  spec.validate();
  if (member_predictions.size() != spec.member_ids.size()) {
    throw std::invalid_argument(
        "got " + std::to_string(member_predictions.size()) +
        " predictions for " + std::to_string(spec.member_ids.size()) +
        " members");
  }
  VoteOutcome out;
  std::array<int, kNumClasses> tally{};
  for (const auto& p : member_predictions) {
    out.member_votes.push_back(p.predicted);
    out.member_probabilities.push_back(p.probabilities);
    ++tally[label_index(p.predicted)];
  }
  const int top = *std::max_element(tally.begin(), tally.end());
  std::vector<int> tied;
  for (int c = 0; c < kNumClasses; ++c) {
    if (tally[c] == top) tied.push_back(c);
  }
  if (tied.size() == 1) {
    out.decided = label_from_index(tied[0]);
    out.tie_broken = false;
    return out;
  }
  out.tie_broken = true;
  if (spec.tie_break == TieBreak::summed_probability) {
    int best = tied[0];
    double best_mass = -1.0;
    for (int c : tied) {
      double mass = 0;
      for (const auto& p : member_predictions) mass += p.probabilities[c];
      if (mass > best_mass) {
        best_mass = mass;
        best = c;
      }
    }
    out.decided = label_from_index(best);
  } else {
    for (const auto& p : member_predictions) {
      const int c = label_index(p.predicted);
      if (std::find(tied.begin(), tied.end(), c) != tied.end()) {
        out.decided = p.predicted;
        break;
      }
    }
  }
  return out;
}

// Joins per-member evaluations by sample_id (order taken from the first
// member), votes each sample, and tallies decided-vs-true.
inline std::pair<std::vector<VoteOutcome>, ConfusionMatrix> evaluate_ensemble(
    const EnsembleSpec& spec,
    const std::map<std::string, std::vector<EvalItem>>& per_member_eval) {
  spec.validate();
  for (const auto& id : spec.member_ids) {
    if (!per_member_eval.count(id)) {
      throw std::invalid_argument("no evaluation results for member: " + id);
    }
  }
  const auto& first = per_member_eval.at(spec.member_ids.front());
  std::map<std::string, std::map<std::string, const EvalItem*>> by_sample;
  for (const auto& id : spec.member_ids) {
    const auto& items = per_member_eval.at(id);
    if (items.size() != first.size()) {
      throw std::invalid_argument("member '" + id + "' evaluated " +
                                  std::to_string(items.size()) +
                                  " samples, expected " +
                                  std::to_string(first.size()));
    }
    for (const auto& item : items) by_sample[item.sample_id][id] = &item;
  }
  std::string missing;
  for (const auto& [sample_id, members] : by_sample) {
    if (members.size() != spec.member_ids.size()) {
      missing += (missing.empty() ? "" : ", ") + sample_id;
    }
  }
  if (!missing.empty()) {
    throw std::invalid_argument(
        "members disagree on the evaluated sample set; incomplete ids: " +
        missing);
  }

  std::vector<VoteOutcome> outcomes;
  outcomes.reserve(first.size());
  ConfusionMatrix cm;
  for (const auto& anchor : first) {
    const auto& members = by_sample.at(anchor.sample_id);
    std::vector<Prediction> predictions;
    predictions.reserve(spec.member_ids.size());
    ClassLabel truth = anchor.truth;
    for (const auto& id : spec.member_ids) {
      const EvalItem* item = members.at(id);
      if (item->truth != truth) {
        throw std::invalid_argument("members disagree on the true label of " +
                                    anchor.sample_id);
      }
      predictions.push_back(item->prediction);
    }
    VoteOutcome outcome = vote(spec, predictions);
    outcome.sample_id = anchor.sample_id;
    cm.add(truth, outcome.decided);
    outcomes.push_back(std::move(outcome));
  }
  return {std::move(outcomes), cm};
}

inline void write_votes_jsonl(
    const std::filesystem::path& path, const std::vector<VoteOutcome>& outcomes,
    const std::map<std::string, ClassLabel>& truth_by_id) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& o : outcomes) {
    nlohmann::json j;
    j["sample_id"] = o.sample_id;
    nlohmann::json votes = nlohmann::json::array();
    for (ClassLabel v : o.member_votes) votes.push_back(class_name(v));
    j["votes"] = std::move(votes);
    j["probabilities"] = o.member_probabilities;
    j["decided"] = class_name(o.decided);
    j["tie_broken"] = o.tie_broken;
    const auto it = truth_by_id.find(o.sample_id);
    if (it != truth_by_id.end()) j["true_label"] = class_name(it->second);
    out << j.dump() << '\n';
  }
}

}  // namespace sonovote
