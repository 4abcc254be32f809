#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sonovote/dataset.hpp"
#include "sonovote/image_io.hpp"
#include "sonovote/synthetic.hpp"

using sonovote::ClassLabel;
using sonovote::Image;
using sonovote::SyntheticCounts;
using sonovote::synthetic_image;
using sonovote::synthetic_set;
using sonovote::write_synthetic_tree;

namespace {

double mean_of(const Image& img) {
  double s = 0;
  for (float p : img.pixels) s += p;
  return s / static_cast<double>(img.pixels.size());
}

// Mean squared difference between horizontally adjacent pixels. High-frequency
// textures score high, smooth ones near zero.
double roughness(const Image& img) {
  double s = 0;
  std::size_t n = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x + 1 < img.width; ++x) {
      const double d = img.at(y, x + 1, 0) - img.at(y, x, 0);
      s += d * d;
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("generator is deterministic in the seed", "[synthetic]") {
  for (ClassLabel label : sonovote::all_labels()) {
    const Image a = synthetic_image(label, 42, 32);
    const Image b = synthetic_image(label, 42, 32);
    REQUIRE(a.pixels == b.pixels);
    const Image c = synthetic_image(label, 43, 32);
    REQUIRE(a.pixels != c.pixels);
  }
}

TEST_CASE("generated pixels stay in the unit range", "[synthetic]") {
  for (ClassLabel label : sonovote::all_labels()) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const Image img = synthetic_image(label, seed, 48);
      REQUIRE(img.channels == 1);
      REQUIRE(img.height == 48);
      REQUIRE(img.width == 48);
      for (float p : img.pixels) {
        REQUIRE(p >= 0.0f);
        REQUIRE(p <= 1.0f);
      }
    }
  }
}

TEST_CASE("classes are separated by a cheap texture statistic", "[synthetic]") {
  // Per-pixel noise is far rougher than rings, and rings rougher than blobs.
  // The margins are wide; this guards against the classes collapsing into
  // one indistinguishable texture, not against subtle drift.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double blobs = roughness(synthetic_image(ClassLabel::normal, seed, 64));
    const double rings = roughness(synthetic_image(ClassLabel::benign, seed, 64));
    const double speckle =
        roughness(synthetic_image(ClassLabel::malignant, seed, 64));
    REQUIRE(speckle > 2.0 * rings);
    REQUIRE(rings > 3.0 * blobs);
  }
}

TEST_CASE("set generation honors the requested counts", "[synthetic]") {
  const SyntheticCounts counts{3, 5, 2};
  REQUIRE(counts.of(ClassLabel::normal) == 3);
  REQUIRE(counts.of(ClassLabel::benign) == 5);
  REQUIRE(counts.of(ClassLabel::malignant) == 2);
  REQUIRE(counts.total() == 10);

  const auto set = synthetic_set(counts, 7, 16, "d1");
  REQUIRE(set.size() == 10);
  std::map<ClassLabel, int> seen;
  for (const auto& img : set) {
    ++seen[img.label];
    REQUIRE(img.origin == "d1");
    REQUIRE(img.sample_id.rfind("d1:", 0) == 0);
    REQUIRE(img.image.height == 16);
  }
  REQUIRE(seen[ClassLabel::normal] == 3);
  REQUIRE(seen[ClassLabel::benign] == 5);
  REQUIRE(seen[ClassLabel::malignant] == 2);
}

TEST_CASE("sample ids are unique and class-prefixed", "[synthetic]") {
  const auto set = synthetic_set({2, 2, 2}, 7, 16, "src");
  std::map<std::string, int> ids;
  for (const auto& img : set) ++ids[img.sample_id];
  REQUIRE(ids.size() == set.size());
  REQUIRE(ids.count("src:normal/normal0000.pgm") == 1);
  REQUIRE(ids.count("src:benign/benign0001.pgm") == 1);
  REQUIRE(ids.count("src:malignant/malignant0000.pgm") == 1);
}

TEST_CASE("tree on disk matches the in-memory set", "[synthetic]") {
  const auto root =
      std::filesystem::temp_directory_path() / "sonovote_synthetic_test";
  std::filesystem::remove_all(root);

  const SyntheticCounts counts{4, 3, 5};
  write_synthetic_tree(root, counts, 99, 24);
  const auto set = synthetic_set(counts, 99, 24, "d1");

  const auto manifest = sonovote::ingest(root, "d1");
  REQUIRE(manifest.entries.size() == counts.total());
  REQUIRE(manifest.class_counts[0] == 4);
  REQUIRE(manifest.class_counts[1] == 3);
  REQUIRE(manifest.class_counts[2] == 5);

  std::map<std::string, const sonovote::LabeledImage*> by_id;
  for (const auto& img : set) by_id[img.sample_id] = &img;

  for (const auto& entry : manifest.entries) {
    REQUIRE(by_id.count(entry.sample_id) == 1);
    const auto& mem = *by_id.at(entry.sample_id);
    REQUIRE(entry.label == mem.label);
    const Image disk = sonovote::decode_image(entry.path);
    REQUIRE(disk.height == mem.image.height);
    REQUIRE(disk.width == mem.image.width);
    REQUIRE(disk.channels == 1);
    for (std::size_t i = 0; i < disk.pixels.size(); ++i) {
      // The on-disk copy went through 8-bit quantization.
      REQUIRE(disk.pixels[i] ==
              Catch::Approx(mem.image.pixels[i]).margin(0.5 / 255.0));
    }
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("empty classes produce no directories", "[synthetic]") {
  const auto root =
      std::filesystem::temp_directory_path() / "sonovote_synthetic_empty";
  std::filesystem::remove_all(root);
  write_synthetic_tree(root, {0, 2, 0}, 1, 16);
  REQUIRE_FALSE(std::filesystem::exists(root / "normal"));
  REQUIRE(std::filesystem::exists(root / "benign"));
  REQUIRE_FALSE(std::filesystem::exists(root / "malignant"));
  std::filesystem::remove_all(root);
}

TEST_CASE("images differ across indexes but repeat across runs", "[synthetic]") {
  const auto a = synthetic_set({0, 2, 0}, 5, 16, "d1");
  const auto b = synthetic_set({0, 2, 0}, 5, 16, "d1");
  REQUIRE(a[0].image.pixels == b[0].image.pixels);
  REQUIRE(a[1].image.pixels == b[1].image.pixels);
  REQUIRE(a[0].image.pixels != a[1].image.pixels);
}

TEST_CASE("mean intensity stays away from saturation", "[synthetic]") {
  for (ClassLabel label : sonovote::all_labels()) {
    const double m = mean_of(synthetic_image(label, 11, 64));
    REQUIRE(m > 0.02);
    REQUIRE(m < 0.98);
  }
}
