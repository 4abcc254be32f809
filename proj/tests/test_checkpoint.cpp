#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sonovote/checkpoint.hpp"

namespace fs = std::filesystem;
using sonovote::Family;
using sonovote::ModelSpec;
using sonovote::Parameters;
using sonovote::build;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sonovote_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

ModelSpec small_spec() {
  ModelSpec spec;
  spec.family = Family::residual;
  spec.input_hw = {8, 8};
  spec.stage_widths = {2, 2};
  return spec;
}

}  // namespace

TEST_CASE("checkpoint round trip restores every float bit-exactly",
          "[checkpoint]") {
  const ModelSpec spec = small_spec();
  Parameters<float> params = build<float>(spec, 123);
  params.frozen.insert("features.stem.weight");
  const auto path = temp_file("roundtrip.bin");
  sonovote::save_checkpoint(path, spec, params, 7);

  const auto ckpt = sonovote::load_checkpoint<float>(path);
  CHECK(ckpt.epoch == 7);
  CHECK(ckpt.spec.family == spec.family);
  CHECK(ckpt.spec.stage_widths == spec.stage_widths);
  CHECK(ckpt.params.init_seed == params.init_seed);
  CHECK(ckpt.params.frozen == params.frozen);
  REQUIRE(ckpt.params.tensors.size() == params.tensors.size());
  for (const auto& [name, t] : params.tensors) {
    const auto& u = ckpt.params.tensors.at(name);
    REQUIRE(u.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(u[i] == t[i]);
  }
}

TEST_CASE("double parameters survive through the 32-bit container",
          "[checkpoint]") {
  // Weights are stored as f32; reloading into doubles keeps exactly the
  // f32-rounded values.
  const ModelSpec spec = small_spec();
  const Parameters<double> params = build<double>(spec, 9);
  const auto path = temp_file("f64.bin");
  sonovote::save_checkpoint(path, spec, params, 1);
  const auto ckpt = sonovote::load_checkpoint<double>(path);
  for (const auto& [name, t] : params.tensors) {
    const auto& u = ckpt.params.tensors.at(name);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      REQUIRE(u[i] == static_cast<double>(static_cast<float>(t[i])));
    }
  }
}

TEST_CASE("bad magic is rejected", "[checkpoint]") {
  const auto path = temp_file("magic.bin");
  std::ofstream(path, std::ios::binary) << "NOTACKPTxxxxxxxxxxxx";
  CHECK_THROWS(sonovote::load_checkpoint<float>(path));
}

TEST_CASE("unknown version is rejected", "[checkpoint]") {
  const ModelSpec spec = small_spec();
  const auto params = build<float>(spec, 5);
  const auto path = temp_file("version.bin");
  sonovote::save_checkpoint(path, spec, params, 0);
  // Bump the little-endian version word right after the 8-byte magic.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  const std::uint32_t bad = 999;
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  CHECK_THROWS(sonovote::load_checkpoint<float>(path));
}

TEST_CASE("truncated files are rejected", "[checkpoint]") {
  const ModelSpec spec = small_spec();
  const auto params = build<float>(spec, 6);
  const auto path = temp_file("trunc.bin");
  sonovote::save_checkpoint(path, spec, params, 0);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 13);
  CHECK_THROWS(sonovote::load_checkpoint<float>(path));
  fs::resize_file(path, 10);
  CHECK_THROWS(sonovote::load_checkpoint<float>(path));
}

TEST_CASE("missing file is rejected", "[checkpoint]") {
  CHECK_THROWS(sonovote::load_checkpoint<float>(temp_file("missing.bin")));
}
