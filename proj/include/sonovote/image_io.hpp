#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "sonovote/image.hpp"

namespace sonovote {

// Decoders for the three supported file formats. PGM and BMP are parsed by
// hand; PNG goes through libpng. Pixel values come out in [0,1].

struct ImageInfo {
  int height = 0;
  int width = 0;
  int channels = 0;
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

inline std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (p[1] << 8) | (p[2] << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

// --- PGM (P2 ascii / P5 binary) ---

inline int pgm_next_int(const std::vector<std::uint8_t>& bytes,
                        std::size_t& pos, const std::string& path) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw std::runtime_error("malformed PGM header: " + path);
  }
  long v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > 1 << 30) throw std::runtime_error("PGM value overflow: " + path);
    ++pos;
  }
  return static_cast<int>(v);
}

inline Image decode_pgm(const std::vector<std::uint8_t>& bytes,
                        const std::string& path) {
  if (bytes.size() < 2 || bytes[0] != 'P' ||
      (bytes[1] != '2' && bytes[1] != '5')) {
    throw std::runtime_error("not a PGM file: " + path);
  }
  const bool binary = bytes[1] == '5';
  std::size_t pos = 2;
  const int width = pgm_next_int(bytes, pos, path);
  const int height = pgm_next_int(bytes, pos, path);
  const int maxval = pgm_next_int(bytes, pos, path);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw std::runtime_error("bad PGM geometry: " + path);
  }
  Image img(height, width, 1);
  const float scale = 1.0f / static_cast<float>(maxval);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (binary) {
    ++pos;  // single whitespace after maxval
    const int bpp = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + n * bpp) {
      throw std::runtime_error("truncated PGM data: " + path);
    }
    for (std::size_t i = 0; i < n; ++i) {
      int v = bytes[pos + i * bpp];
      if (bpp == 2) v = (v << 8) | bytes[pos + i * 2 + 1];  // big-endian
      img.pixels[i] = v * scale;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = pgm_next_int(bytes, pos, path) * scale;
    }
  }
  return img;
}

// --- BMP (uncompressed 8/24/32 bpp) ---

inline Image decode_bmp(const std::vector<std::uint8_t>& bytes,
                        const std::string& path) {
  if (bytes.size() < 54 || bytes[0] != 'B' || bytes[1] != 'M') {
    throw std::runtime_error("not a BMP file: " + path);
  }
  const std::uint32_t data_offset = le32(&bytes[10]);
  const std::uint32_t header_size = le32(&bytes[14]);
  if (header_size < 40) {
    throw std::runtime_error("unsupported BMP header: " + path);
  }
  const auto width = static_cast<std::int32_t>(le32(&bytes[18]));
  const auto raw_height = static_cast<std::int32_t>(le32(&bytes[22]));
  const std::uint16_t bpp = le16(&bytes[28]);
  const std::uint32_t compression = le32(&bytes[30]);
  if (compression != 0 || (bpp != 8 && bpp != 24 && bpp != 32)) {
    throw std::runtime_error("unsupported BMP encoding: " + path);
  }
  const bool top_down = raw_height < 0;
  const int height = top_down ? -raw_height : raw_height;
  if (width < 1 || height < 1) {
    throw std::runtime_error("bad BMP geometry: " + path);
  }

  std::vector<std::array<std::uint8_t, 3>> palette;
  bool palette_gray = true;
  if (bpp == 8) {
    std::uint32_t colors = le32(&bytes[46]);
    if (colors == 0) colors = 256;
    const std::size_t pal_offset = 14 + header_size;
    if (bytes.size() < pal_offset + colors * 4) {
      throw std::runtime_error("truncated BMP palette: " + path);
    }
    palette.resize(colors);
    for (std::uint32_t i = 0; i < colors; ++i) {
      const std::uint8_t b = bytes[pal_offset + i * 4];
      const std::uint8_t g = bytes[pal_offset + i * 4 + 1];
      const std::uint8_t r = bytes[pal_offset + i * 4 + 2];
      palette[i] = {r, g, b};
      palette_gray = palette_gray && r == g && g == b;
    }
  }

  const int channels = (bpp == 8 && palette_gray) ? 1 : 3;
  const std::size_t row_bytes = ((static_cast<std::size_t>(width) * bpp + 31) / 32) * 4;
  if (bytes.size() < data_offset + row_bytes * height) {
    throw std::runtime_error("truncated BMP data: " + path);
  }

  Image img(height, width, channels);
  constexpr float k = 1.0f / 255.0f;
  for (int y = 0; y < height; ++y) {
    const int src_y = top_down ? y : height - 1 - y;
    const std::uint8_t* row = bytes.data() + data_offset + row_bytes * src_y;
    for (int x = 0; x < width; ++x) {
      std::uint8_t r, g, b;
      if (bpp == 8) {
        const std::uint8_t idx = row[x];
        if (idx >= palette.size()) {
          throw std::runtime_error("BMP palette index out of range: " + path);
        }
        r = palette[idx][0];
        g = palette[idx][1];
        b = palette[idx][2];
      } else {
        const std::uint8_t* px = row + x * (bpp / 8);
        b = px[0];
        g = px[1];
        r = px[2];
      }
      if (channels == 1) {
        img.at(y, x, 0) = r * k;
      } else {
        img.at(y, x, 0) = r * k;
        img.at(y, x, 1) = g * k;
        img.at(y, x, 2) = b * k;
      }
    }
  }
  return img;
}

// --- PNG via libpng ---

struct PngReadState {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t count) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + count > st->size) {
    png_error(png, "read past end of PNG buffer");
  }
  std::memcpy(out, st->data + st->pos, count);
  st->pos += count;
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes,
                        const std::string& path) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path);
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt PNG file: " + path);
  }
  PngReadState state{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &state, png_mem_read);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported PNG channel layout: " + path);
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raw(row_bytes * height);
  row_ptrs.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) {
    row_ptrs[y] = raw.data() + row_bytes * y;
  }
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(static_cast<int>(height), static_cast<int>(width), channels);
  constexpr float k = 1.0f / 255.0f;
  const std::size_t n = img.pixels.size();
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = raw[i] * k;
  return img;
}

}  // namespace detail

enum class ImageFormat { png, bmp, pgm, unknown };

inline ImageFormat sniff_format(const std::uint8_t* bytes, std::size_t size) {
  if (size >= 8 && png_sig_cmp(bytes, 0, 8) == 0) return ImageFormat::png;
  if (size >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return ImageFormat::bmp;
  if (size >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) {
    return ImageFormat::pgm;
  }
  return ImageFormat::unknown;
}

inline Image decode_image(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  switch (sniff_format(bytes.data(), bytes.size())) {
    case ImageFormat::png: return detail::decode_png(bytes, path);
    case ImageFormat::bmp: return detail::decode_bmp(bytes, path);
    case ImageFormat::pgm: return detail::decode_pgm(bytes, path);
    default:
      throw std::runtime_error("unrecognized image format: " + path);
  }
}

// Header-only probe used during ingest; returns nothing if the file cannot be
// an image we know how to decode.
inline std::optional<ImageInfo> probe_image(const std::string& path) {
  try {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<std::uint8_t> head(64);
    in.read(reinterpret_cast<char*>(head.data()),
            static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    switch (sniff_format(head.data(), head.size())) {
      case ImageFormat::png: {
        // 8-byte signature, IHDR length+type, then width/height big-endian.
        if (head.size() < 26) return std::nullopt;
        const auto be32 = [&](std::size_t o) {
          return (head[o] << 24) | (head[o + 1] << 16) | (head[o + 2] << 8) |
                 head[o + 3];
        };
        if (std::memcmp(&head[12], "IHDR", 4) != 0) return std::nullopt;
        const int w = be32(16), h = be32(20);
        const int color_type = head[25];
        const int c = (color_type == 0 || color_type == 4) ? 1 : 3;
        if (w < 1 || h < 1) return std::nullopt;
        return ImageInfo{h, w, c};
      }
      case ImageFormat::bmp: {
        if (head.size() < 30) return std::nullopt;
        const int w = static_cast<std::int32_t>(detail::le32(&head[18]));
        int h = static_cast<std::int32_t>(detail::le32(&head[22]));
        if (h < 0) h = -h;
        const int bpp = detail::le16(&head[28]);
        if (w < 1 || h < 1) return std::nullopt;
        return ImageInfo{h, w, bpp == 8 ? 1 : 3};
      }
      case ImageFormat::pgm: {
        std::size_t pos = 2;
        const int w = detail::pgm_next_int(head, pos, path);
        const int h = detail::pgm_next_int(head, pos, path);
        if (w < 1 || h < 1) return std::nullopt;
        return ImageInfo{h, w, 1};
      }
      default: return std::nullopt;
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline void write_pgm(const std::string& path, const Image& img) {
  if (img.channels != 1) {
    throw std::invalid_argument("write_pgm expects a 1-channel image");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) row[x] = to_byte(img.at(y, x, 0));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

inline void write_png(const std::string& path, const Image& img) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write file: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("PNG write failed: " + path);
  }
  png_init_io(png, fp);
  const int color =
      img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) *
                                img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        row[static_cast<std::size_t>(x) * img.channels + c] =
            to_byte(img.at(y, x, c));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline void write_bmp(const std::string& path, const Image& img) {
  const Image rgb =
      img.channels == 3 ? img : detail::convert_channels(img, 3);
  const std::size_t row_bytes = ((static_cast<std::size_t>(rgb.width) * 24 + 31) / 32) * 4;
  const std::size_t data_size = row_bytes * rgb.height;
  const std::uint32_t file_size = static_cast<std::uint32_t>(54 + data_size);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  std::uint8_t header[54] = {};
  header[0] = 'B';
  header[1] = 'M';
  auto put32 = [&](int off, std::uint32_t v) {
    header[off] = v & 0xff;
    header[off + 1] = (v >> 8) & 0xff;
    header[off + 2] = (v >> 16) & 0xff;
    header[off + 3] = (v >> 24) & 0xff;
  };
  put32(2, file_size);
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(rgb.width));
  put32(22, static_cast<std::uint32_t>(rgb.height));
  header[26] = 1;
  header[28] = 24;
  out.write(reinterpret_cast<const char*>(header), 54);
  std::vector<std::uint8_t> row(row_bytes, 0);
  for (int y = rgb.height - 1; y >= 0; --y) {
    for (int x = 0; x < rgb.width; ++x) {
      row[x * 3] = to_byte(rgb.at(y, x, 2));
      row[x * 3 + 1] = to_byte(rgb.at(y, x, 1));
      row[x * 3 + 2] = to_byte(rgb.at(y, x, 0));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace sonovote
