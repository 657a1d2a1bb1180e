#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "warpsdf/common.hpp"

namespace warpsdf {

// Binary netpbm images: P6 (8-bit RGB), P5 (8- or 16-bit gray, big-endian
// samples per the format). Lossless and dependency-free; these are the
// on-disk frame formats.

struct ImageU8 {  // interleaved RGB or single channel
  int width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> data;
  std::uint8_t& at(int x, int y, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c = 0) const { return data[(std::size_t(y) * width + x) * channels + c]; }
};

struct ImageU16 {
  int width = 0, height = 0;
  std::vector<std::uint16_t> data;
  std::uint16_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  std::uint16_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
};

namespace pnm_detail {
inline void skip_ws_comments(std::istream& is) {
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}
inline int read_int(std::istream& is) {
  skip_ws_comments(is);
  int v = -1;
  is >> v;
  return v;
}
}  // namespace pnm_detail

inline void write_ppm(const std::string& path, const ImageU8& img) {
  require(img.channels == 3, "write_ppm: image must have 3 channels");
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_ppm: cannot open ", path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
  require(f.good(), "write_ppm: write failed for ", path);
}

inline void write_pgm8(const std::string& path, const ImageU8& img) {
  require(img.channels == 1, "write_pgm8: image must have 1 channel");
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_pgm8: cannot open ", path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
  require(f.good(), "write_pgm8: write failed for ", path);
}

inline void write_pgm16(const std::string& path, const ImageU16& img) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_pgm16: cannot open ", path);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<std::uint8_t> be(img.data.size() * 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    be[2 * i] = std::uint8_t(img.data[i] >> 8);
    be[2 * i + 1] = std::uint8_t(img.data[i] & 0xff);
  }
  f.write(reinterpret_cast<const char*>(be.data()), std::streamsize(be.size()));
  require(f.good(), "write_pgm16: write failed for ", path);
}

inline ImageU8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "read_ppm: cannot open ", path);
  std::string magic;
  f >> magic;
  require(magic == "P6", "read_ppm: ", path, " is not a binary PPM");
  ImageU8 img;
  img.channels = 3;
  img.width = pnm_detail::read_int(f);
  img.height = pnm_detail::read_int(f);
  int maxv = pnm_detail::read_int(f);
  require(img.width > 0 && img.height > 0 && maxv == 255, "read_ppm: bad header in ", path);
  f.get();
  img.data.resize(std::size_t(img.width) * img.height * 3);
  f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  require(f.gcount() == std::streamsize(img.data.size()), "read_ppm: truncated file ", path);
  return img;
}

inline ImageU8 read_pgm8(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "read_pgm8: cannot open ", path);
  std::string magic;
  f >> magic;
  require(magic == "P5", "read_pgm8: ", path, " is not a binary PGM");
  ImageU8 img;
  img.channels = 1;
  img.width = pnm_detail::read_int(f);
  img.height = pnm_detail::read_int(f);
  int maxv = pnm_detail::read_int(f);
  require(img.width > 0 && img.height > 0 && maxv == 255, "read_pgm8: bad header in ", path);
  f.get();
  img.data.resize(std::size_t(img.width) * img.height);
  f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  require(f.gcount() == std::streamsize(img.data.size()), "read_pgm8: truncated file ", path);
  return img;
}

inline ImageU16 read_pgm16(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "read_pgm16: cannot open ", path);
  std::string magic;
  f >> magic;
  require(magic == "P5", "read_pgm16: ", path, " is not a binary PGM");
  ImageU16 img;
  img.width = pnm_detail::read_int(f);
  img.height = pnm_detail::read_int(f);
  int maxv = pnm_detail::read_int(f);
  require(img.width > 0 && img.height > 0 && maxv == 65535, "read_pgm16: bad header in ", path);
  f.get();
  std::vector<std::uint8_t> be(std::size_t(img.width) * img.height * 2);
  f.read(reinterpret_cast<char*>(be.data()), std::streamsize(be.size()));
  require(f.gcount() == std::streamsize(be.size()), "read_pgm16: truncated file ", path);
  img.data.resize(std::size_t(img.width) * img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = std::uint16_t((be[2 * i] << 8) | be[2 * i + 1]);
  return img;
}

}  // namespace warpsdf
