#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sonovote/image.hpp"
#include "sonovote/rng.hpp"

namespace sonovote {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentPolicy {
  double reflect_x_prob = 0.0;
  double reflect_y_prob = 0.0;
  Interval rotation_range_deg{0.0, 0.0};
  Interval translate_range_px{0.0, 0.0};
  Interval scale_range{1.0, 1.0};
  std::uint64_t seed = 0;
};

inline void validate(const AugmentPolicy& p) {
  auto check_prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
    }
  };
  auto check_interval = [](const Interval& iv, const char* name) {
    if (!(iv.lo <= iv.hi)) {
      throw std::invalid_argument(std::string(name) + " has lo > hi");
    }
  };
  check_prob(p.reflect_x_prob, "reflect_x_prob");
  check_prob(p.reflect_y_prob, "reflect_y_prob");
  check_interval(p.rotation_range_deg, "rotation_range_deg");
  check_interval(p.translate_range_px, "translate_range_px");
  check_interval(p.scale_range, "scale_range");
  if (!(p.scale_range.lo > 0.0)) {
    throw std::invalid_argument("scale_range bounds must be positive");
  }
}

inline AugmentPolicy default_policy(std::uint64_t seed) {
  AugmentPolicy p;
  p.reflect_x_prob = 0.5;
  p.reflect_y_prob = 0.5;
  p.rotation_range_deg = {0.0, 360.0};
  p.translate_range_px = {-30.0, 30.0};
  p.scale_range = {0.9, 1.1};
  p.seed = seed;
  return p;
}

// Affine map about the image center, composed scale -> rotate -> translate
// -> reflect. Parameters are stored rather than a matrix so the inverse warp
// can unwind each step exactly.
struct AffineTransform {
  double scale_x = 1.0;
  double scale_y = 1.0;
  double rotation_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  bool flip_x = false;
  bool flip_y = false;
};

// One transform per draw index. Every parameter is drawn unconditionally in
// a fixed order so the stream never depends on the values drawn.
inline AffineTransform sample_transform(const AugmentPolicy& p,
                                        std::uint64_t draw_index) {
  validate(p);
  DetRng rng(mix_seed(p.seed, draw_index));
  AffineTransform t;
  t.scale_x = rng.uniform(p.scale_range.lo, p.scale_range.hi);
  t.scale_y = rng.uniform(p.scale_range.lo, p.scale_range.hi);
  t.rotation_deg = rng.uniform(p.rotation_range_deg.lo, p.rotation_range_deg.hi);
  t.translate_x = rng.uniform(p.translate_range_px.lo, p.translate_range_px.hi);
  t.translate_y = rng.uniform(p.translate_range_px.lo, p.translate_range_px.hi);
  t.flip_x = rng.uniform(0.0, 1.0) < p.reflect_x_prob;
  t.flip_y = rng.uniform(0.0, 1.0) < p.reflect_y_prob;
  return t;
}

// Inverse warp with bilinear sampling; samples outside the source read 0.
// Walking the affine steps backwards (instead of inverting a matrix) keeps
// pure flips and integer translations exact index permutations.
inline LabeledImage apply(const LabeledImage& src, const AffineTransform& t) {
  const Image& in = src.image;
  Image out(in.height, in.width, in.channels);
  const double cx = (in.width - 1) * 0.5;
  const double cy = (in.height - 1) * 0.5;
  const double rad = t.rotation_deg * (3.14159265358979323846 / 180.0);
  const double cos_r = std::cos(rad);
  const double sin_r = std::sin(rad);

  auto fetch = [&](int y, int x, int c) -> float {
    if (y < 0 || y >= static_cast<int>(in.height) || x < 0 ||
        x >= static_cast<int>(in.width)) {
      return 0.0f;
    }
    return in.at(y, x, c);
  };

  for (std::size_t oy = 0; oy < in.height; ++oy) {
    for (std::size_t ox = 0; ox < in.width; ++ox) {
      double rx = ox - cx;
      double ry = oy - cy;
      if (t.flip_x) rx = -rx;
      if (t.flip_y) ry = -ry;
      rx -= t.translate_x;
      ry -= t.translate_y;
      const double ux = cos_r * rx + sin_r * ry;
      const double uy = -sin_r * rx + cos_r * ry;
      const double sx = ux / t.scale_x + cx;
      const double sy = uy / t.scale_y + cy;

      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (std::size_t c = 0; c < in.channels; ++c) {
        const double top = (1.0 - fx) * fetch(y0, x0, c) + fx * fetch(y0, x0 + 1, c);
        const double bot = (1.0 - fx) * fetch(y0 + 1, x0, c) + fx * fetch(y0 + 1, x0 + 1, c);
        out.at(oy, ox, c) = static_cast<float>((1.0 - fy) * top + fy * bot);
      }
    }
  }

  LabeledImage result;
  result.image = std::move(out);
  result.label = src.label;
  result.sample_id = src.sample_id;
  result.origin = src.origin;
  return result;
}

inline nlohmann::json interval_to_json(const Interval& iv) {
  return nlohmann::json::array({iv.lo, iv.hi});
}

inline Interval interval_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw std::runtime_error("interval must be a two-element array");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json policy_to_json(const AugmentPolicy& p) {
  nlohmann::json j;
  j["reflect_x_prob"] = p.reflect_x_prob;
  j["reflect_y_prob"] = p.reflect_y_prob;
  j["rotation_range_deg"] = interval_to_json(p.rotation_range_deg);
  j["translate_range_px"] = interval_to_json(p.translate_range_px);
  j["scale_range"] = interval_to_json(p.scale_range);
  j["seed"] = p.seed;
  return j;
}

inline AugmentPolicy policy_from_json(const nlohmann::json& j) {
  AugmentPolicy p;
  p.reflect_x_prob = j.at("reflect_x_prob").get<double>();
  p.reflect_y_prob = j.at("reflect_y_prob").get<double>();
  p.rotation_range_deg = interval_from_json(j.at("rotation_range_deg"));
  p.translate_range_px = interval_from_json(j.at("translate_range_px"));
  p.scale_range = interval_from_json(j.at("scale_range"));
  p.seed = j.at("seed").get<std::uint64_t>();
  validate(p);
  return p;
}

}  // namespace sonovote
