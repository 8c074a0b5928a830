#pragma once

// Exponent-only floating point (EOFP) codec.
//
// Each float32 element is reduced to a 4-bit code: one sign bit and three
// exponent bits, no mantissa. The three exponent bits index an 8-wide window
// of powers of two, [2^base, 2^(base+7)], chosen per array so that the
// largest magnitude lands on index 7. Magnitudes below the window flush to
// zero, and code 0b0000 is reserved for exact zero, so positive values in the
// lowest octave [2^base, 2^(base+1)) flush to zero too. Negative values keep
// all eight octaves.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lavse/error.hpp"

namespace lavse::eofp {

struct Format {
  static constexpr int sign_bits = 1;
  static constexpr int exponent_bits = 3;
  static constexpr int mantissa_bits = 0;

  // IEEE 754 binary32 layout being replaced.
  static constexpr int source_sign_bits = 1;
  static constexpr int source_exponent_bits = 8;
  static constexpr int source_mantissa_bits = 23;

  static constexpr int code_bits = sign_bits + exponent_bits + mantissa_bits;
  static constexpr int source_bits =
      source_sign_bits + source_exponent_bits + source_mantissa_bits;
  static constexpr int window_size = 1 << exponent_bits;

  static constexpr double compression_ratio() {
    return static_cast<double>(source_bits) / code_bits;
  }
};
static_assert(Format::code_bits == 4);
static_assert(Format::source_bits == 32);

// Representable magnitudes are 2^(base + k), k = 0..7.
struct ExponentWindow {
  int base = 0;

  int top() const { return base + Format::window_size - 1; }
  bool operator==(const ExponentWindow&) const = default;
};

// Low 3 bits: exponent index. Bit 3: sign.
using Code = std::uint8_t;

constexpr Code make_code(bool negative, int exponent_index) {
  return static_cast<Code>((negative ? 0x8 : 0x0) | (exponent_index & 0x7));
}
constexpr bool code_negative(Code c) { return (c & 0x8) != 0; }
constexpr int code_exponent_index(Code c) { return c & 0x7; }

class WindowError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

enum class DecodeErrc {
  truncated_header,
  bad_magic,
  bad_version,
  bad_rank,
  bad_window,
  truncated_payload,
  trailing_bytes,
  nonzero_padding,
};

const char* to_string(DecodeErrc code);

class DecodeError : public Error {
 public:
  DecodeError(DecodeErrc code, const std::string& detail);
  DecodeErrc code() const { return code_; }

 private:
  DecodeErrc code_;
};

// base = floor(log2(max |v|)) - 7. Throws WindowError when no element is
// nonzero, ValueError on NaN/inf.
ExponentWindow choose_window(std::span<const float> values);

Code quantize_value(float x, ExponentWindow w);
float dequantize_value(Code c, ExponentWindow w);

// Two codes per byte, element 2i in the low nibble of byte i.
std::vector<std::uint8_t> pack_codes(std::span<const Code> codes);
std::vector<Code> unpack_codes(std::span<const std::uint8_t> packed, std::size_t count);

struct EofpArray {
  std::vector<std::uint32_t> shape;
  ExponentWindow window;
  std::vector<std::uint8_t> packed;

  std::size_t count() const;
  Code code(std::size_t i) const;
  std::vector<Code> codes() const;

  bool operator==(const EofpArray&) const = default;
};

EofpArray encode_array(std::span<const float> values, std::vector<std::uint32_t> shape);
std::vector<float> decode_array(const EofpArray& a);

// An all-zero array with window base 0. encode_array refuses all-zero input
// because no window is derivable; callers that must still emit a container
// use this instead.
EofpArray zero_array(std::vector<std::uint32_t> shape);

// Container:
//   "EOFP" | u8 version (1) | u8 rank | rank x u32le dims | i16le base | payload
// payload = ceil(count / 2) packed bytes.
inline constexpr std::uint8_t kContainerVersion = 1;
std::size_t header_size(std::size_t rank);
std::vector<std::uint8_t> serialize(const EofpArray& a);
EofpArray deserialize(std::span<const std::uint8_t> bytes);

struct CompressionReport {
  double r_ae = 0.0;
  double r_qua = 0.0;
  double r_comp = 0.0;
  std::size_t input_bytes = 0;   // float32 image bytes
  std::size_t output_bytes = 0;  // packed latent payload bytes
};

// lip_elements: values in one image (3*64*64); latent_count: latent elements
// per image (2048).
CompressionReport compression_report(std::size_t lip_elements, std::size_t latent_count);

}  // namespace lavse::eofp
