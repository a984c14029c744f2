#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace handoff {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// 8-bit RGB raster, row-major, row 0 at the top.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {0, 0, 0})
      : width_(width), height_(height), data_(size_t(width) * height, fill) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("image: nonpositive size");
  }

  int width() const { return width_; }
  int height() const { return height_; }

  Rgb& at(int x, int y) { return data_[size_t(y) * width_ + x]; }
  const Rgb& at(int x, int y) const { return data_[size_t(y) * width_ + x]; }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  const std::vector<Rgb>& pixels() const { return data_; }
  std::vector<Rgb>& pixels() { return data_; }

  bool operator==(const Image&) const = default;

  void write_ppm(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P6\n" << width_ << " " << height_ << "\n255\n";
    out.write(reinterpret_cast<const char*>(data_.data()), std::streamsize(data_.size() * 3));
  }

  /// Minimal PNG writer: 8-bit RGB, one zlib-compressed IDAT, filter 0 rows.
  void write_png(const std::string& path) const {
    std::vector<uint8_t> raw;
    raw.reserve(size_t(height_) * (1 + size_t(width_) * 3));
    for (int y = 0; y < height_; ++y) {
      raw.push_back(0);  // per-row filter byte
      const Rgb* row = &data_[size_t(y) * width_];
      raw.insert(raw.end(), reinterpret_cast<const uint8_t*>(row),
                 reinterpret_cast<const uint8_t*>(row) + size_t(width_) * 3);
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
      throw std::runtime_error("png: deflate failed");
    compressed.resize(bound);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    static const uint8_t magic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(magic), 8);

    const auto write_chunk = [&out](const char type[4], const uint8_t* payload, uint32_t len) {
      uint8_t head[8];
      put_be32(head, len);
      std::memcpy(head + 4, type, 4);
      out.write(reinterpret_cast<const char*>(head), 8);
      if (len) out.write(reinterpret_cast<const char*>(payload), len);
      uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
      if (len) crc = crc32(crc, payload, len);
      uint8_t tail[4];
      put_be32(tail, crc);
      out.write(reinterpret_cast<const char*>(tail), 4);
    };

    uint8_t ihdr[13];
    put_be32(ihdr, uint32_t(width_));
    put_be32(ihdr + 4, uint32_t(height_));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    write_chunk("IHDR", ihdr, 13);
    write_chunk("IDAT", compressed.data(), uint32_t(compressed.size()));
    write_chunk("IEND", nullptr, 0);
  }

 private:
  static void put_be32(uint8_t* p, uint32_t v) {
    p[0] = uint8_t(v >> 24);
    p[1] = uint8_t(v >> 16);
    p[2] = uint8_t(v >> 8);
    p[3] = uint8_t(v);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> data_;
};

}  // namespace handoff
