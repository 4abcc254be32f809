#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sonovote/augment.hpp"
#include "sonovote/ensemble.hpp"
#include "sonovote/model.hpp"
#include "sonovote/optim.hpp"

namespace sonovote {

// Run configuration: a sectioned key-value text file. `[dataset]` and
// `[model]` sections may repeat, one per source / per trained model; every
// other section provides shared settings. Full-line comments start with '#'
// or ';'.

struct DatasetSource {
  std::string root;
  std::string origin;
};

struct ModelEntry {
  std::string name;
  ModelSpec spec;
  OptimizerConfig optimizer;
};

enum class BaggingMode { shared_folds, bootstrap };

inline const char* bagging_mode_name(BaggingMode m) {
  return m == BaggingMode::shared_folds ? "shared_folds" : "bootstrap";
}

inline BaggingMode parse_bagging_mode(const std::string& name) {
  if (name == "shared_folds") return BaggingMode::shared_folds;
  if (name == "bootstrap") return BaggingMode::bootstrap;
  throw std::invalid_argument("unknown bagging mode: " + name);
}

struct RunConfig {
  std::string out_root = "runs";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string precision = "f64";  // f32 | f64
  int working_size = 64;          // pre-resize cache side; 0 keeps native

  std::vector<DatasetSource> datasets;

  int k = 5;
  bool stratified = true;

  int epochs = 15;
  int batch_size = 8;
  OptimizerConfig base_optimizer;
  AugmentPolicy augment = default_policy(0);
  bool augment_seed_set = false;  // else follows the run seed

  std::vector<ModelEntry> models;

  int ensemble_m = 4;
  TieBreak tie_break = TieBreak::summed_probability;
  BaggingMode bagging = BaggingMode::shared_folds;

  std::string source_text;  // verbatim copy persisted into the run directory
};

namespace detail {

struct ConfigSection {
  std::string name;
  int line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
};

inline std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<ConfigSection> parse_sections(const std::string& text) {
  std::vector<ConfigSection> sections;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": unterminated section header");
      }
      sections.push_back({strip(s.substr(1, s.size() - 2)), lineno, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    if (sections.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": key before any [section]");
    }
    sections.back().entries.emplace_back(strip(s.substr(0, eq)),
                                         strip(s.substr(eq + 1)));
  }
  return sections;
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key +
                                "' needs a number, got '" + value + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key +
                                "' needs an integer, got '" + value + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config key '" + key +
                              "' needs true/false, got '" + value + "'");
}

inline std::vector<int> to_int_list(const std::string& key,
                                    const std::string& value) {
  std::vector<int> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(static_cast<int>(to_int(key, strip(item))));
  }
  if (out.empty()) {
    throw std::invalid_argument("config key '" + key + "' needs a list");
  }
  return out;
}

inline std::pair<int, int> to_hw(const std::string& key,
                                 const std::string& value) {
  const auto x = value.find('x');
  if (x == std::string::npos) {
    const int side = static_cast<int>(to_int(key, value));
    return {side, side};
  }
  return {static_cast<int>(to_int(key, strip(value.substr(0, x)))),
          static_cast<int>(to_int(key, strip(value.substr(x + 1))))};
}

[[noreturn]] inline void unknown_key(const ConfigSection& sec,
                                     const std::string& key) {
  throw std::invalid_argument("config section [" + sec.name +
                              "]: unknown key '" + key + "'");
}

}  // namespace detail

inline RunConfig parse_run_config_text(const std::string& text) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_hw;
  using detail::to_int;
  using detail::to_int_list;

  RunConfig cfg;
  cfg.source_text = text;
  bool augment_section_seen = false;
  const auto sections = detail::parse_sections(text);

  // Shared sections first, [model] sections second, so the [train] defaults
  // a model inherits never depend on section order.
  for (const auto& sec : sections) {
    if (sec.name == "run") {
      for (const auto& [key, value] : sec.entries) {
        if (key == "out") cfg.out_root = value;
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
        else if (key == "jobs") cfg.jobs = static_cast<int>(to_int(key, value));
        else if (key == "precision") cfg.precision = value;
        else if (key == "working_size") cfg.working_size = static_cast<int>(to_int(key, value));
        else detail::unknown_key(sec, key);
      }
    } else if (sec.name == "dataset") {
      DatasetSource src;
      for (const auto& [key, value] : sec.entries) {
        if (key == "root") src.root = value;
        else if (key == "origin") src.origin = value;
        else detail::unknown_key(sec, key);
      }
      if (src.root.empty()) {
        throw std::invalid_argument("config [dataset] section needs root =");
      }
      if (src.origin.empty()) src.origin = "d" + std::to_string(cfg.datasets.size() + 1);
      cfg.datasets.push_back(std::move(src));
    } else if (sec.name == "folds") {
      for (const auto& [key, value] : sec.entries) {
        if (key == "k") cfg.k = static_cast<int>(to_int(key, value));
        else if (key == "stratified") cfg.stratified = to_bool(key, value);
        else detail::unknown_key(sec, key);
      }
    } else if (sec.name == "train") {
      for (const auto& [key, value] : sec.entries) {
        if (key == "epochs") cfg.epochs = static_cast<int>(to_int(key, value));
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_int(key, value));
        else if (key == "learning_rate") cfg.base_optimizer.learning_rate = to_double(key, value);
        else if (key == "momentum") cfg.base_optimizer.momentum = to_double(key, value);
        else if (key == "beta1") cfg.base_optimizer.beta1 = to_double(key, value);
        else if (key == "beta2") cfg.base_optimizer.beta2 = to_double(key, value);
        else if (key == "epsilon") cfg.base_optimizer.epsilon = to_double(key, value);
        else detail::unknown_key(sec, key);
      }
    } else if (sec.name == "augment") {
      augment_section_seen = true;
      for (const auto& [key, value] : sec.entries) {
        if (key == "reflect_x_prob") cfg.augment.reflect_x_prob = to_double(key, value);
        else if (key == "reflect_y_prob") cfg.augment.reflect_y_prob = to_double(key, value);
        else if (key == "rotation_min") cfg.augment.rotation_range_deg.lo = to_double(key, value);
        else if (key == "rotation_max") cfg.augment.rotation_range_deg.hi = to_double(key, value);
        else if (key == "translate_min") cfg.augment.translate_range_px.lo = to_double(key, value);
        else if (key == "translate_max") cfg.augment.translate_range_px.hi = to_double(key, value);
        else if (key == "scale_min") cfg.augment.scale_range.lo = to_double(key, value);
        else if (key == "scale_max") cfg.augment.scale_range.hi = to_double(key, value);
        else if (key == "seed") {
          cfg.augment.seed = static_cast<std::uint64_t>(to_int(key, value));
          cfg.augment_seed_set = true;
        } else detail::unknown_key(sec, key);
      }
    } else if (sec.name == "model") {
      continue;  // second pass
    } else if (sec.name == "ensemble") {
      for (const auto& [key, value] : sec.entries) {
        if (key == "m") cfg.ensemble_m = static_cast<int>(to_int(key, value));
        else if (key == "tie_break") cfg.tie_break = parse_tie_break(value);
        else if (key == "mode") cfg.bagging = parse_bagging_mode(value);
        else detail::unknown_key(sec, key);
      }
    } else {
      throw std::invalid_argument("config line " + std::to_string(sec.line) +
                                  ": unknown section [" + sec.name + "]");
    }
  }

  for (const auto& sec : sections) {
    if (sec.name != "model") continue;
    ModelEntry model;
    model.optimizer = cfg.base_optimizer;
    for (const auto& [key, value] : sec.entries) {
      if (key == "name") model.name = value;
      else if (key == "family") model.spec.family = parse_family(value);
      else if (key == "widths") model.spec.stage_widths = to_int_list(key, value);
      else if (key == "input") model.spec.input_hw = to_hw(key, value);
      else if (key == "channels") model.spec.input_channels = static_cast<int>(to_int(key, value));
      else if (key == "hidden") model.spec.head.hidden = static_cast<int>(to_int(key, value));
      else if (key == "optimizer") model.optimizer.kind = parse_optimizer(value);
      else if (key == "learning_rate") model.optimizer.learning_rate = to_double(key, value);
      else detail::unknown_key(sec, key);
    }
    if (model.name.empty()) {
      throw std::invalid_argument("config [model] section needs name =");
    }
    cfg.models.push_back(std::move(model));
  }

  if (!augment_section_seen) cfg.augment = default_policy(cfg.seed);
  if (!cfg.augment_seed_set) cfg.augment.seed = cfg.seed;

  if (cfg.precision != "f32" && cfg.precision != "f64") {
    throw std::invalid_argument("precision must be f32 or f64");
  }
  if (cfg.k < 2) throw std::invalid_argument("folds k must be >= 2");
  if (cfg.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (cfg.working_size < 0) {
    throw std::invalid_argument("working_size must be >= 0");
  }
  std::set<std::string> names;
  for (const auto& model : cfg.models) {
    if (!names.insert(model.name).second) {
      throw std::invalid_argument("duplicate model name: " + model.name);
    }
    validate_spec(model.spec);
    validate(model.optimizer);
  }
  validate(cfg.augment);
  return cfg;
}

inline RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

}  // namespace sonovote
