#include "lavse/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "lavse/binary_io.hpp"
#include "lavse/error.hpp"

namespace lavse::image {

namespace {

std::vector<std::uint8_t> with_header(const std::string& header, std::size_t payload) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + payload);
  return out;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string token(std::span<const std::uint8_t> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string t;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') t.push_back(static_cast<char>(b[pos++]));
  if (t.empty()) throw FormatError("ppm: truncated header");
  return t;
}

int number(std::span<const std::uint8_t> b, std::size_t& pos) {
  const std::string t = token(b, pos);
  if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw FormatError("ppm: bad header field '" + t + "'");
  }
  return std::stoi(t);
}

}  // namespace

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> encode_ppm(const nn::Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("ppm: expected [3,H,W], got " + nn::shape_string(rgb.shape()));
  const std::size_t h = rgb.dim(1), w = rgb.dim(2), plane = h * w;
  auto out = with_header("P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n", 3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.push_back(to_byte(rgb[c * plane + i]));
  }
  return out;
}

nn::Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (token(bytes, pos) != "P6") throw FormatError("ppm: not a binary P6 file");
  const int w = number(bytes, pos);
  const int h = number(bytes, pos);
  const int maxval = number(bytes, pos);
  if (w <= 0 || h <= 0) throw FormatError("ppm: empty image");
  if (maxval != 255) throw FormatError("ppm: only 8-bit images are supported");
  ++pos;  // single whitespace after maxval
  const std::size_t plane = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < pos + 3 * plane) throw FormatError("ppm: truncated pixel data");
  nn::Tensor t({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = bytes[pos + 3 * i + c] / 255.0;
  }
  return t;
}

void write_ppm(const std::filesystem::path& path, const nn::Tensor& rgb) {
  write_file_bytes(path, encode_ppm(rgb));
}

nn::Tensor read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const nn::Tensor& gray) {
  if (gray.rank() != 2) throw ShapeError("pgm: expected [H,W], got " + nn::shape_string(gray.shape()));
  auto out = with_header("P5\n" + std::to_string(gray.dim(1)) + " " + std::to_string(gray.dim(0)) + "\n255\n",
                         gray.size());
  for (double v : gray.data()) out.push_back(to_byte(v));
  write_file_bytes(path, out);
}

}  // namespace lavse::image
