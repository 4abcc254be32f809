#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sonovote/dataset.hpp"
#include "sonovote/synthetic.hpp"

namespace fs = std::filesystem;
using sonovote::ClassLabel;
using sonovote::DatasetManifest;
using sonovote::SyntheticCounts;
using sonovote::ingest;
using sonovote::label_index;
using sonovote::merge;

namespace {

// Fresh tree per test case so cases stay order-independent.
fs::path make_tree(const std::string& name, const SyntheticCounts& counts,
                   std::uint64_t seed) {
  const fs::path root =
      fs::temp_directory_path() / "sonovote_dataset_test" / name;
  fs::remove_all(root);
  sonovote::write_synthetic_tree(root, counts, seed, 16);
  return root;
}

}  // namespace

TEST_CASE("ingest counts images per class", "[dataset]") {
  const auto root = make_tree("counts", {0, 100, 150}, 1);
  const DatasetManifest m = ingest(root, "d1");
  CHECK(m.size() == 250);
  CHECK(m.class_counts[label_index(ClassLabel::normal)] == 0);
  CHECK(m.class_counts[label_index(ClassLabel::benign)] == 100);
  CHECK(m.class_counts[label_index(ClassLabel::malignant)] == 150);
  for (const auto& e : m.entries) {
    CHECK(e.origin == "d1");
    CHECK(e.sample_id.rfind("d1:", 0) == 0);
  }
}

TEST_CASE("merged manifests keep per-origin ids distinct", "[dataset]") {
  const auto root1 = make_tree("m1", {0, 100, 150}, 1);
  const auto root2 = make_tree("m2", {133, 437, 210}, 2);
  const DatasetManifest merged =
      merge(ingest(root1, "d1"), ingest(root2, "d2"));
  CHECK(merged.size() == 1030);
  CHECK(merged.class_counts[label_index(ClassLabel::normal)] == 133);
  CHECK(merged.class_counts[label_index(ClassLabel::benign)] == 537);
  CHECK(merged.class_counts[label_index(ClassLabel::malignant)] == 360);
}

TEST_CASE("merging the same origin twice is a duplicate-id error",
          "[dataset]") {
  const auto root = make_tree("dup", {2, 2, 2}, 3);
  const DatasetManifest m = ingest(root, "d1");
  CHECK_THROWS(merge(m, m));
}

TEST_CASE("unknown class subdirectory is a hard error", "[dataset]") {
  const auto root = make_tree("badclass", {1, 1, 1}, 4);
  fs::create_directories(root / "cysts");
  CHECK_THROWS(ingest(root, "d1"));
}

TEST_CASE("unreadable files are skipped with a warning", "[dataset]") {
  const auto root = make_tree("skips", {2, 2, 2}, 5);
  std::ofstream(root / "benign" / "notes.txt") << "not an image\n";
  std::vector<std::string> warnings;
  const DatasetManifest m =
      ingest(root, "d1", [&](const std::string& w) { warnings.push_back(w); });
  CHECK(m.size() == 6);
  CHECK(m.skipped_files == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("notes.txt") != std::string::npos);
}

TEST_CASE("empty dataset root is an error", "[dataset]") {
  const fs::path root = fs::temp_directory_path() / "sonovote_dataset_test" /
                        "empty";
  fs::remove_all(root);
  fs::create_directories(root);
  CHECK_THROWS(ingest(root, "d1"));
  CHECK_THROWS(ingest(root / "missing", "d1"));
}

TEST_CASE("manifest CSV round trip preserves every field", "[dataset]") {
  const auto root = make_tree("csv", {3, 4, 5}, 6);
  const DatasetManifest m = ingest(root, "d1");
  const fs::path csv =
      fs::temp_directory_path() / "sonovote_dataset_test" / "manifest.csv";
  sonovote::write_manifest_csv(csv, m);
  const DatasetManifest back = sonovote::read_manifest_csv(csv);
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back.entries[i].sample_id == m.entries[i].sample_id);
    CHECK(back.entries[i].path == m.entries[i].path);
    CHECK(back.entries[i].label == m.entries[i].label);
    CHECK(back.entries[i].origin == m.entries[i].origin);
  }
  CHECK(back.class_counts == m.class_counts);
}

TEST_CASE("manifest CSV quoting survives commas in paths", "[dataset]") {
  DatasetManifest m;
  sonovote::ManifestEntry e;
  e.sample_id = "d1:benign/a,b.png";
  e.path = "/data/with, comma/a,b.png";
  e.label = ClassLabel::benign;
  e.origin = "d1";
  m.entries.push_back(e);
  m.recount();
  const fs::path csv =
      fs::temp_directory_path() / "sonovote_dataset_test" / "quoted.csv";
  fs::create_directories(csv.parent_path());
  sonovote::write_manifest_csv(csv, m);
  const DatasetManifest back = sonovote::read_manifest_csv(csv);
  REQUIRE(back.size() == 1);
  CHECK(back.entries[0].path == e.path);
  CHECK(back.entries[0].sample_id == e.sample_id);
}

TEST_CASE("manifest CSV with a bad header is rejected", "[dataset]") {
  const fs::path csv =
      fs::temp_directory_path() / "sonovote_dataset_test" / "bad.csv";
  fs::create_directories(csv.parent_path());
  std::ofstream(csv) << "id,path\nx,y\n";
  CHECK_THROWS(sonovote::read_manifest_csv(csv));
}

TEST_CASE("entries are sorted by sample id", "[dataset]") {
  const auto root = make_tree("sorted", {3, 3, 3}, 7);
  const DatasetManifest m = ingest(root, "d1");
  for (std::size_t i = 1; i < m.size(); ++i) {
    CHECK(m.entries[i - 1].sample_id < m.entries[i].sample_id);
  }
}
