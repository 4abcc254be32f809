#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "sonovote/image_io.hpp"
#include "sonovote/rng.hpp"

using sonovote::DetRng;
using sonovote::Image;
using sonovote::decode_image;
using sonovote::probe_image;

namespace {

std::filesystem::path temp_dir() {
  const auto dir =
      std::filesystem::temp_directory_path() / "sonovote_image_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

Image random_gray(int h, int w, std::uint64_t seed) {
  Image img(h, w, 1);
  DetRng rng(seed);
  for (auto& p : img.pixels) {
    // Quantize to the 8-bit grid so an encode/decode round trip is exact.
    p = static_cast<float>(rng.below(256)) / 255.0f;
  }
  return img;
}

void check_equal(const Image& a, const Image& b) {
  REQUIRE(a.height == b.height);
  REQUIRE(a.width == b.width);
  REQUIRE(a.channels == b.channels);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    REQUIRE(a.pixels[i] == Catch::Approx(b.pixels[i]).margin(0.5 / 255.0));
  }
}

}  // namespace

TEST_CASE("PGM round trip preserves 8-bit pixels", "[image_io]") {
  const auto path = (temp_dir() / "roundtrip.pgm").string();
  const Image img = random_gray(13, 9, 42);
  sonovote::write_pgm(path, img);
  check_equal(decode_image(path), img);
}

TEST_CASE("PNG round trip preserves 8-bit pixels", "[image_io]") {
  const auto path = (temp_dir() / "roundtrip.png").string();
  const Image img = random_gray(16, 11, 43);
  sonovote::write_png(path, img);
  check_equal(decode_image(path), img);
}

TEST_CASE("BMP round trip preserves 8-bit pixels", "[image_io]") {
  // BMP is stored as 24-bit RGB, so a gray input comes back with three
  // identical channels.
  const auto path = (temp_dir() / "roundtrip.bmp").string();
  const Image img = random_gray(10, 17, 44);
  sonovote::write_bmp(path, img);
  const Image out = decode_image(path);
  REQUIRE(out.height == img.height);
  REQUIRE(out.width == img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < out.channels; ++c) {
        REQUIRE(out.at(y, x, c) ==
                Catch::Approx(img.at(y, x, 0)).margin(0.5 / 255.0));
      }
    }
  }
}

TEST_CASE("gray value 128 maps to 128/255", "[image_io]") {
  const auto path = (temp_dir() / "mid.pgm").string();
  Image img(1, 1, 1);
  img.at(0, 0, 0) = 128.0f / 255.0f;
  sonovote::write_pgm(path, img);
  const Image out = decode_image(path);
  CHECK(out.at(0, 0, 0) == 128.0f / 255.0f);
}

TEST_CASE("probe_image reports dimensions without decoding", "[image_io]") {
  const auto path = (temp_dir() / "probe.png").string();
  sonovote::write_png(path, random_gray(21, 34, 45));
  const auto info = probe_image(path);
  REQUIRE(info.has_value());
  CHECK(info->height == 21);
  CHECK(info->width == 34);
}

TEST_CASE("probe_image rejects non-images", "[image_io]") {
  const auto path = (temp_dir() / "notes.txt").string();
  std::ofstream(path) << "not an image\n";
  CHECK_FALSE(probe_image(path).has_value());
}

TEST_CASE("decoding a corrupt file throws with the path", "[image_io]") {
  const auto path = (temp_dir() / "corrupt.png").string();
  {
    std::ofstream out(path, std::ios::binary);
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);
    out << "garbage";
  }
  try {
    decode_image(path);
    FAIL("expected a decode error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("corrupt.png") != std::string::npos);
  }
}

TEST_CASE("decoding a missing file throws", "[image_io]") {
  CHECK_THROWS(decode_image((temp_dir() / "missing.png").string()));
}
