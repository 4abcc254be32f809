#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "sonovote/image.hpp"
#include "sonovote/image_io.hpp"
#include "sonovote/label.hpp"
#include "sonovote/rng.hpp"

namespace sonovote {

// Seeded three-class image generator used by the desk-scale experiments. The
// classes differ in texture statistics that survive reflection, full-circle
// rotation, mild scaling, and translation, so augmentation cannot erase the
// signal:
//   normal    -> a few broad gaussian blobs (low-frequency structure)
//   benign    -> concentric rings around a jittered center (narrow-band)
//   malignant -> per-pixel speckle (high-frequency noise)
inline Image synthetic_image(ClassLabel label, std::uint64_t seed,
                             std::size_t side) {
  Image img(side, side, 1);
  DetRng rng(seed);
  const double unit = static_cast<double>(side) / 64.0;

  switch (label) {
    case ClassLabel::normal: {
      const int blobs = 2 + static_cast<int>(rng.below(3));
      std::vector<double> cx(blobs), cy(blobs), sigma(blobs), amp(blobs);
      for (int b = 0; b < blobs; ++b) {
        cx[b] = rng.uniform(0.2, 0.8) * side;
        cy[b] = rng.uniform(0.2, 0.8) * side;
        sigma[b] = rng.uniform(8.0, 16.0) * unit;
        amp[b] = rng.uniform(0.4, 0.9);
      }
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          double v = 0.05;
          for (int b = 0; b < blobs; ++b) {
            const double dx = x - cx[b], dy = y - cy[b];
            v += amp[b] * std::exp(-(dx * dx + dy * dy) /
                                   (2.0 * sigma[b] * sigma[b]));
          }
          img.at(y, x, 0) = static_cast<float>(std::min(v, 1.0));
        }
      }
      break;
    }
    case ClassLabel::benign: {
      const double wavelength = rng.uniform(7.0, 11.0) * unit;
      const double cx = side * 0.5 + rng.uniform(-8.0, 8.0) * unit;
      const double cy = side * 0.5 + rng.uniform(-8.0, 8.0) * unit;
      const double phase = rng.uniform(0.0, 6.283185307179586);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double r = std::sqrt(dx * dx + dy * dy);
          const double v =
              0.5 + 0.45 * std::cos(6.283185307179586 * r / wavelength + phase);
          img.at(y, x, 0) = static_cast<float>(v);
        }
      }
      break;
    }
    case ClassLabel::malignant: {
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          img.at(y, x, 0) = static_cast<float>(rng.uniform(0.0, 1.0));
        }
      }
      break;
    }
  }
  return img;
}

struct SyntheticCounts {
  std::size_t normal = 0;
  std::size_t benign = 0;
  std::size_t malignant = 0;

  std::size_t of(ClassLabel label) const {
    switch (label) {
      case ClassLabel::normal: return normal;
      case ClassLabel::benign: return benign;
      case ClassLabel::malignant: return malignant;
    }
    return 0;
  }
  std::size_t total() const { return normal + benign + malignant; }
};

inline std::vector<LabeledImage> synthetic_set(const SyntheticCounts& counts,
                                               std::uint64_t seed,
                                               std::size_t side,
                                               const std::string& origin) {
  std::vector<LabeledImage> out;
  out.reserve(counts.total());
  for (ClassLabel label : all_labels()) {
    for (std::size_t i = 0; i < counts.of(label); ++i) {
      LabeledImage img;
      img.image = synthetic_image(
          label, mix_seed(seed, static_cast<std::uint64_t>(label_index(label)),
                          static_cast<std::uint64_t>(i)),
          side);
      img.label = label;
      char index[8];
      std::snprintf(index, sizeof index, "%04zu", i);
      const std::string cls(class_name(label));
      img.sample_id = origin + ":" + cls + "/" + cls + index + ".pgm";
      img.origin = origin;
      out.push_back(std::move(img));
    }
  }
  return out;
}

// Writes root/<class>/<class>NNNN.pgm so the tree can go through the normal
// ingest path. Same seeding as synthetic_set: the two views are identical.
inline void write_synthetic_tree(const std::filesystem::path& root,
                                 const SyntheticCounts& counts,
                                 std::uint64_t seed, std::size_t side) {
  for (ClassLabel label : all_labels()) {
    if (counts.of(label) == 0) continue;
    const std::filesystem::path dir = root / class_name(label);
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < counts.of(label); ++i) {
      const Image img = synthetic_image(
          label, mix_seed(seed, static_cast<std::uint64_t>(label_index(label)),
                          static_cast<std::uint64_t>(i)),
          side);
      char index[8];
      std::snprintf(index, sizeof index, "%04zu", i);
      write_pgm(dir / (std::string(class_name(label)) + index + ".pgm"), img);
    }
  }
}

}  // namespace sonovote
