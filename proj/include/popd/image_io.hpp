#pragma once

// Portable greymap input/output and CSV number formatting.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "popd/core.hpp"

namespace popd {

/// 8-bit binary PGM (P5); values are clamped to [0, 1] and scaled to 0..255.
inline void write_pgm(const std::string& path, const ScalarImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t k = 0; k < img.size(); ++k) {
    const double v = std::isfinite(img[k]) ? std::clamp(img[k], 0.0, 1.0) : 0.0;
    bytes[k] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

namespace detail {

inline std::string pgm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw std::runtime_error("read_pgm: truncated header");
  return tok;
}

}  // namespace detail

/// Reads P2 or P5 greymaps (8 or 16 bit) into [0, 1].
inline ScalarImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  const std::string magic = detail::pgm_token(in);
  if (magic != "P5" && magic != "P2") throw std::runtime_error("read_pgm: " + path + " is not a P2/P5 greymap");
  const auto w = std::stoul(detail::pgm_token(in));
  const auto h = std::stoul(detail::pgm_token(in));
  const auto maxval = std::stoul(detail::pgm_token(in));
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw std::runtime_error("read_pgm: bad header in " + path);
  ScalarImage img(w, h);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (auto& v : img) v = static_cast<double>(std::stoul(detail::pgm_token(in))) * scale;
    return img;
  }
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> bytes(img.size() * bpp);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw std::runtime_error("read_pgm: truncated data in " + path);
  for (std::size_t k = 0; k < img.size(); ++k) {
    const unsigned v = bpp == 1 ? bytes[k] : (static_cast<unsigned>(bytes[2 * k]) << 8) | bytes[2 * k + 1];
    img[k] = static_cast<double>(v) * scale;
  }
  return img;
}

/// Shortest decimal form that reads back to the same double.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string frame_file_name(const char* prefix, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu.pgm", prefix, k);
  return buf;
}

}  // namespace popd
