// sonovote command-line driver: ingest / cv / ensemble / report / synth.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sonovote/driver.hpp"
#include "sonovote/synthetic.hpp"

namespace fsys = std::filesystem;
using namespace sonovote;

namespace {

std::string utc_stamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
  return buf;
}

fsys::path default_run_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("HARNESS_RUN_ROOT")) return env;
  return cfg.out_root;
}

// --out names the run directory exactly; otherwise a fresh timestamped
// directory is created under the run root. Existing non-empty targets are
// refused so reruns never touch a finished run.
fsys::path pick_run_dir(const RunConfig& cfg, const std::string& out_flag) {
  fsys::path dir;
  if (!out_flag.empty()) {
    dir = out_flag;
  } else {
    dir = default_run_root(cfg) /
          ("cv-" + utc_stamp() + "-s" + std::to_string(cfg.seed));
  }
  if (fsys::exists(dir) && !fsys::is_empty(dir)) {
    throw DataError("run directory already exists and is not empty: " +
                    dir.string());
  }
  return dir;
}

std::vector<DatasetSource> make_sources(const std::vector<std::string>& roots,
                                        std::vector<std::string> origins) {
  if (origins.size() > roots.size()) {
    throw UsageError("more --origin tags than --root directories");
  }
  for (std::size_t i = origins.size(); i < roots.size(); ++i) {
    origins.push_back("d" + std::to_string(i + 1));
  }
  std::vector<DatasetSource> sources;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    sources.push_back({roots[i], origins[i]});
  }
  return sources;
}

int run(int argc, char** argv) {
  CLI::App app{"breast-ultrasound CNN training and voting-ensemble harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::string out_flag;
  int jobs_flag = 0;
  bool dry_run = false;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed_flag, "override the config seed");
  app.add_option("--out", out_flag, "output path or run directory");
  app.add_option("--jobs", jobs_flag, "parallel model-by-fold trainings");
  app.add_flag("--dry-run", dry_run, "print what would happen, write nothing");

  std::vector<std::string> roots, origins;
  auto* ingest_cmd =
      app.add_subcommand("ingest", "scan dataset trees into a manifest");
  ingest_cmd->add_option("--root", roots, "dataset root directory")
      ->required();
  ingest_cmd->add_option("--origin", origins, "origin tag per root");

  auto* cv_cmd = app.add_subcommand(
      "cv", "train the configured models with k-fold cross-validation");

  std::string run_dir_arg;
  int m_flag = 0;
  std::string tie_break_flag;
  auto* ens_cmd = app.add_subcommand(
      "ensemble", "fuse the top models of a finished cv run by majority vote");
  ens_cmd->add_option("run_dir", run_dir_arg, "cv run directory")->required();
  ens_cmd->add_option("--m", m_flag, "ensemble size (default from config)");
  ens_cmd->add_option("--tie-break", tie_break_flag,
                      "summed_probability or best_member");

  std::string report_dir_arg, format_flag = "md";
  auto* report_cmd =
      app.add_subcommand("report", "summary table for a finished run");
  report_cmd->add_option("run_dir", report_dir_arg, "cv run directory")
      ->required();
  report_cmd->add_option("--format", format_flag, "md or csv")
      ->check(CLI::IsMember({"md", "csv"}));

  std::string synth_out;
  std::vector<int> per_class{200, 200, 200};
  std::uint64_t synth_seed = 0;
  int synth_size = 64;
  auto* synth_cmd = app.add_subcommand(
      "synth", "write a seeded synthetic three-class image tree");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--per-class", per_class,
                        "images per class: normal benign malignant")
      ->expected(3);
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--size", synth_size, "square image side in pixels");

  // Global flags may be written after the subcommand name too.
  for (auto* sub : {ingest_cmd, cv_cmd, ens_cmd, report_cmd, synth_cmd}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*ingest_cmd) {
    const IngestResult result = ingest_sources(
        make_sources(roots, origins),
        [](const std::string& w) { std::cerr << "warning: " << w << '\n'; });
    std::cout << format_distribution_table(result);
    // The default run setup stratifies five folds; refuse manifests that
    // cannot satisfy it (for example a single-class tree).
    try {
      make_folds(result.merged, 5, 0, true);
    } catch (const std::exception& e) {
      throw DataError(std::string("manifest cannot be stratified: ") +
                      e.what());
    }
    if (!dry_run) {
      const fsys::path out =
          out_flag.empty() ? fsys::path("manifest.csv") : fsys::path(out_flag);
      write_manifest_csv(out, result.merged);
      std::cout << "wrote " << out.string() << '\n';
    }
    return 0;
  }

  if (*cv_cmd) {
    if (config_path.empty()) throw UsageError("cv requires --config");
    RunConfig cfg;
    try {
      cfg = parse_run_config(config_path);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (seed_flag) cfg.seed = *seed_flag;
    if (jobs_flag > 0) cfg.jobs = jobs_flag;
    const fsys::path run_dir = pick_run_dir(cfg, out_flag);
    if (dry_run) {
      std::cout << "would train " << cfg.models.size() << " models across "
                << cfg.k << " folds into " << run_dir.string() << '\n';
      for (const auto& model : cfg.models) {
        std::cout << "  " << model.name << " ("
                  << family_name(model.spec.family) << ", "
                  << optimizer_name(model.optimizer.kind) << ")\n";
      }
      return 0;
    }
    const CvResult cv = run_cv(cfg, run_dir, std::cout);
    std::cout << "run directory: " << cv.run_dir.string() << '\n';
    if (!cv.failures.empty()) {
      throw TrainError(std::to_string(cv.failures.size()) +
                       " model-fold trainings failed; see summary.json");
    }
    return 0;
  }

  if (*ens_cmd) {
    std::optional<TieBreak> tie;
    if (!tie_break_flag.empty()) {
      try {
        tie = parse_tie_break(tie_break_flag);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }
    if (dry_run) {
      // Selection preview only: report which members would be fused.
      const RunConfig cfg = parse_run_config_text([&] {
        std::ifstream in(fsys::path(run_dir_arg) / "config.ini");
        if (!in) throw DataError("no config.ini under " + run_dir_arg);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
      }());
      std::map<std::string, MetricsReport> reports;
      for (const auto& model : cfg.models) {
        const fsys::path p =
            fsys::path(run_dir_arg) / "mean" / (model.name + ".json");
        if (fsys::exists(p)) {
          reports.emplace(model.name, report_from_json(read_json_file(p)));
        }
      }
      const int m = m_flag > 0 ? m_flag : cfg.ensemble_m;
      for (const auto& id : select_members(reports, m)) {
        std::cout << "would fuse: " << id << '\n';
      }
      return 0;
    }
    const EnsembleRunResult result =
        run_ensemble(run_dir_arg, m_flag, tie, std::cout);
    std::cout << "ensemble accuracy (mean over folds): "
              << format_metric(result.mean.accuracy) << '\n'
              << "wrote " << result.out_dir.string() << '\n';
    return 0;
  }

  if (*report_cmd) {
    const std::string table =
        render_report_table(report_dir_arg, format_flag == "csv");
    std::cout << table;
    if (!out_flag.empty() && !dry_run) {
      std::ofstream out(out_flag);
      if (!out) throw DataError("cannot write " + out_flag);
      out << table;
    }
    return 0;
  }

  if (*synth_cmd) {
    for (int n : per_class) {
      if (n < 0) throw UsageError("--per-class counts must be >= 0");
    }
    if (synth_size < 8) throw UsageError("--size must be >= 8");
    SyntheticCounts counts{static_cast<std::size_t>(per_class[0]),
                           static_cast<std::size_t>(per_class[1]),
                           static_cast<std::size_t>(per_class[2])};
    if (dry_run) {
      std::cout << "would write " << counts.total() << " images under "
                << synth_out << '\n';
      return 0;
    }
    write_synthetic_tree(synth_out, counts, synth_seed, synth_size);
    std::cout << "wrote " << counts.total() << " images under " << synth_out
              << '\n';
    return 0;
  }

  throw UsageError("no command given");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const TrainError& e) {
    std::cerr << "training failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
}
