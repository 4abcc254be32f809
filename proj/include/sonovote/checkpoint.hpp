#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sonovote/model.hpp"

namespace sonovote {

// Checkpoint layout (documented in docs/formats.md):
//   bytes 0..7   magic "SNVTCKP\n"
//   bytes 8..11  format version, little-endian u32 (currently 1)
//   bytes 12..19 header length H, little-endian u64
//   bytes 20..   H bytes of JSON header
//   then one float32 little-endian block per tensor, in the header's order
// The header lists tensors in lexicographic name order, which is also the
// canonical parameter order everywhere else.

namespace detail {

inline constexpr char kCkptMagic[8] = {'S', 'N', 'V', 'T', 'C', 'K', 'P', '\n'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                     static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const Parameters<T>& params, int epoch) {
  nlohmann::json header;
  header["spec"] = model_spec_to_json(spec);
  header["init_seed"] = params.init_seed;
  header["epoch"] = epoch;
  header["frozen"] = std::vector<std::string>(params.frozen.begin(),
                                              params.frozen.end());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, tensor] : params.tensors) {
    tensors.push_back(
        nlohmann::json{{"name", name}, {"shape", tensor.shape()}});
  }
  header["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string hdr = header.dump();
  out.write(detail::kCkptMagic, 8);
  detail::put_u32(out, detail::kCkptVersion);
  detail::put_u64(out, hdr.size());
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const auto& [name, tensor] : params.tensors) {
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      detail::put_f32(out, static_cast<float>(tensor.data()[i]));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <class T>
struct Checkpoint {
  ModelSpec spec;
  Parameters<T> params;
  int epoch = 0;
};

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = detail::get_u32(in);
  if (version != detail::kCkptVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  const std::uint64_t hdr_len = detail::get_u64(in);
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (!in) throw std::runtime_error("truncated checkpoint header");
  const nlohmann::json header = nlohmann::json::parse(hdr);

  Checkpoint<T> ckpt;
  ckpt.spec = model_spec_from_json(header.at("spec"));
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.params.init_seed = header.at("init_seed").get<std::uint64_t>();
  for (const auto& name :
       header.at("frozen").get<std::vector<std::string>>()) {
    ckpt.params.frozen.insert(name);
  }
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor<T> tensor(shape);
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      tensor.data()[i] = static_cast<T>(detail::get_f32(in));
    }
    ckpt.params.tensors.emplace(name, std::move(tensor));
  }
  if (!in) throw std::runtime_error("truncated checkpoint payload");
  return ckpt;
}

}  // namespace sonovote
