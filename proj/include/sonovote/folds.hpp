#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sonovote/dataset.hpp"
#include "sonovote/image.hpp"
#include "sonovote/image_io.hpp"
#include "sonovote/rng.hpp"

namespace sonovote {

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  bool stratified = true;
  std::map<std::string, int> assignment;  // sample_id -> test fold
};

// Deterministic k-fold assignment. Stratified plans shuffle within each
// class and hand the per-class remainders to folds in a rotating order so
// that both per-class and total fold sizes differ by at most one.
inline FoldPlan make_folds(const DatasetManifest& manifest, int k,
                           std::uint64_t seed, bool stratified) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  if (manifest.empty()) throw std::invalid_argument("empty manifest");

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.stratified = stratified;
  DetRng rng(mix_seed(seed, 0xF01Dull, static_cast<std::uint64_t>(k)));

  if (stratified) {
    int present = 0;
    for (std::size_t c : manifest.class_counts) present += c > 0;
    if (present < 2) {
      throw std::runtime_error(
          "stratified folds need at least two classes with samples");
    }
    for (ClassLabel label : all_labels()) {
      const std::size_t count = manifest.class_counts[label_index(label)];
      if (count > 0 && count < static_cast<std::size_t>(k)) {
        throw std::runtime_error("class '" + std::string(class_name(label)) +
                                 "' has fewer samples (" +
                                 std::to_string(count) + ") than k=" +
                                 std::to_string(k));
      }
    }
    int rotation = 0;
    for (ClassLabel label : all_labels()) {
      std::vector<const ManifestEntry*> members;
      for (const auto& e : manifest.entries) {
        if (e.label == label) members.push_back(&e);
      }
      if (members.empty()) continue;
      rng.shuffle(members);
      const std::size_t q = members.size() / k;
      const int r = static_cast<int>(members.size() % k);
      std::size_t pos = 0;
      for (int f = 0; f < k; ++f) {
        std::size_t take = q + (((f - rotation + k) % k) < r ? 1 : 0);
        for (std::size_t i = 0; i < take; ++i) {
          plan.assignment[members[pos++]->sample_id] = f;
        }
      }
      rotation = (rotation + r) % k;
    }
  } else {
    std::vector<const ManifestEntry*> members;
    members.reserve(manifest.size());
    for (const auto& e : manifest.entries) members.push_back(&e);
    rng.shuffle(members);
    const std::size_t q = members.size() / k;
    const int r = static_cast<int>(members.size() % k);
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
      std::size_t take = q + (f < r ? 1 : 0);
      for (std::size_t i = 0; i < take; ++i) {
        plan.assignment[members[pos++]->sample_id] = f;
      }
    }
  }
  return plan;
}

inline nlohmann::json fold_plan_to_json(const FoldPlan& plan) {
  nlohmann::json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["stratified"] = plan.stratified;
  j["assignment"] = plan.assignment;
  return j;
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  plan.k = j.at("k").get<int>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.stratified = j.at("stratified").get<bool>();
  plan.assignment = j.at("assignment").get<std::map<std::string, int>>();
  if (plan.k < 2) throw std::runtime_error("fold plan has k < 2");
  for (const auto& [id, fold] : plan.assignment) {
    if (fold < 0 || fold >= plan.k) {
      throw std::runtime_error("fold index out of range for " + id);
    }
  }
  return plan;
}

inline void write_fold_plan(const std::filesystem::path& path,
                            const FoldPlan& plan) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << fold_plan_to_json(plan).dump(2) << '\n';
}

inline FoldPlan read_fold_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return fold_plan_from_json(j);
}

inline LabeledImage load_labeled_image(const ManifestEntry& entry) {
  LabeledImage img;
  try {
    img.image = decode_image(entry.path);
  } catch (const std::exception& e) {
    throw std::runtime_error("failed to decode " + entry.path + ": " +
                             e.what());
  }
  img.label = entry.label;
  img.sample_id = entry.sample_id;
  img.origin = entry.origin;
  return img;
}

// Decodes the whole manifest and splits it by the plan: `fold` becomes the
// test set, everything else trains. Order follows the manifest.
inline std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>>
load_split(const DatasetManifest& manifest, const FoldPlan& plan, int fold) {
  if (fold < 0 || fold >= plan.k) {
    throw std::invalid_argument("fold index " + std::to_string(fold) +
                                " out of range [0," + std::to_string(plan.k) +
                                ")");
  }
  std::vector<LabeledImage> train, test;
  for (const auto& entry : manifest.entries) {
    const auto it = plan.assignment.find(entry.sample_id);
    if (it == plan.assignment.end()) {
      throw std::runtime_error("fold plan does not cover sample " +
                               entry.sample_id);
    }
    (it->second == fold ? test : train).push_back(load_labeled_image(entry));
  }
  return {std::move(train), std::move(test)};
}

}  // namespace sonovote
