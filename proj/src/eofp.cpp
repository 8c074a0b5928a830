#include "lavse/eofp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "lavse/binary_io.hpp"

namespace lavse::eofp {

namespace {

constexpr std::uint8_t kMagic[4] = {'E', 'O', 'F', 'P'};
constexpr std::size_t kMaxRank = 8;
// Any float32 magnitude has floor(log2) in [-149, 127].
constexpr int kMinBase = -149 - (Format::window_size - 1);
constexpr int kMaxBase = 127 - (Format::window_size - 1);

std::size_t element_count(std::span<const std::uint32_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t d) { return a * d; });
}

}  // namespace

const char* to_string(DecodeErrc code) {
  switch (code) {
    case DecodeErrc::truncated_header: return "truncated header";
    case DecodeErrc::bad_magic: return "bad magic";
    case DecodeErrc::bad_version: return "unsupported version";
    case DecodeErrc::bad_rank: return "bad rank";
    case DecodeErrc::bad_window: return "window base out of range";
    case DecodeErrc::truncated_payload: return "truncated payload";
    case DecodeErrc::trailing_bytes: return "payload longer than shape";
    case DecodeErrc::nonzero_padding: return "nonzero padding nibble";
  }
  return "unknown";
}

DecodeError::DecodeError(DecodeErrc code, const std::string& detail)
    : Error(std::string("eofp decode: ") + to_string(code) + (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

ExponentWindow choose_window(std::span<const float> values) {
  float peak = 0.0f;
  for (float v : values) {
    if (!std::isfinite(v)) throw ValueError("choose_window: non-finite input");
    peak = std::max(peak, std::fabs(v));
  }
  if (peak == 0.0f) throw WindowError("choose_window: no nonzero element");
  return {std::ilogb(peak) - (Format::window_size - 1)};
}

Code quantize_value(float x, ExponentWindow w) {
  if (!std::isfinite(x)) throw ValueError("quantize_value: non-finite input");
  if (x == 0.0f) return 0;
  const int e = std::ilogb(x);
  if (e < w.base) return 0;
  const int idx = std::min(e - w.base, Format::window_size - 1);
  // A positive value at index 0 would be code 0b0000, which is reserved for
  // zero, so it flushes as well.
  return make_code(x < 0.0f, idx);
}

float dequantize_value(Code c, ExponentWindow w) {
  c &= 0xF;
  if (c == 0) return 0.0f;
  const float mag = std::ldexp(1.0f, w.base + code_exponent_index(c));
  return code_negative(c) ? -mag : mag;
}

std::vector<std::uint8_t> pack_codes(std::span<const Code> codes) {
  std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto nibble = static_cast<std::uint8_t>(codes[i] & 0xF);
    out[i / 2] |= (i % 2 == 0) ? nibble : static_cast<std::uint8_t>(nibble << 4);
  }
  return out;
}

std::vector<Code> unpack_codes(std::span<const std::uint8_t> packed, std::size_t count) {
  if (packed.size() < (count + 1) / 2) {
    throw DecodeError(DecodeErrc::truncated_payload, "need " + std::to_string((count + 1) / 2) +
                                                         " bytes, have " +
                                                         std::to_string(packed.size()));
  }
  std::vector<Code> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t b = packed[i / 2];
    out[i] = (i % 2 == 0) ? (b & 0xF) : (b >> 4);
  }
  return out;
}

std::size_t EofpArray::count() const { return element_count(shape); }

Code EofpArray::code(std::size_t i) const {
  const std::uint8_t b = packed.at(i / 2);
  return (i % 2 == 0) ? (b & 0xF) : (b >> 4);
}

std::vector<Code> EofpArray::codes() const { return unpack_codes(packed, count()); }

EofpArray encode_array(std::span<const float> values, std::vector<std::uint32_t> shape) {
  if (element_count(shape) != values.size()) {
    throw ShapeError("encode_array: shape holds " + std::to_string(element_count(shape)) +
                     " elements, got " + std::to_string(values.size()));
  }
  const ExponentWindow w = choose_window(values);
  std::vector<Code> codes(values.size());
  std::transform(values.begin(), values.end(), codes.begin(),
                 [w](float v) { return quantize_value(v, w); });
  return {std::move(shape), w, pack_codes(codes)};
}

std::vector<float> decode_array(const EofpArray& a) {
  const std::size_t n = a.count();
  if (a.packed.size() != (n + 1) / 2) {
    throw DecodeError(a.packed.size() < (n + 1) / 2 ? DecodeErrc::truncated_payload
                                                    : DecodeErrc::trailing_bytes,
                      "");
  }
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = dequantize_value(a.code(i), a.window);
  return out;
}

EofpArray zero_array(std::vector<std::uint32_t> shape) {
  const std::size_t n = element_count(shape);
  return {std::move(shape), ExponentWindow{0}, std::vector<std::uint8_t>((n + 1) / 2, 0)};
}

std::size_t header_size(std::size_t rank) { return 4 + 1 + 1 + 4 * rank + 2; }

std::vector<std::uint8_t> serialize(const EofpArray& a) {
  if (a.shape.empty() || a.shape.size() > kMaxRank) {
    throw ShapeError("serialize: rank must be 1.." + std::to_string(kMaxRank));
  }
  if (a.packed.size() != (a.count() + 1) / 2) {
    throw ShapeError("serialize: payload does not match shape");
  }
  ByteWriter w;
  w.bytes(kMagic);
  w.u8(kContainerVersion);
  w.u8(static_cast<std::uint8_t>(a.shape.size()));
  for (std::uint32_t d : a.shape) w.u32(d);
  w.i16(static_cast<std::int16_t>(a.window.base));
  w.bytes(a.packed);
  return w.release();
}

EofpArray deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6) throw DecodeError(DecodeErrc::truncated_header, "");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw DecodeError(DecodeErrc::bad_magic, "");
  }
  if (bytes[4] != kContainerVersion) {
    throw DecodeError(DecodeErrc::bad_version, "version " + std::to_string(bytes[4]));
  }
  const std::size_t rank = bytes[5];
  if (rank == 0 || rank > kMaxRank) {
    throw DecodeError(DecodeErrc::bad_rank, "rank " + std::to_string(rank));
  }
  if (bytes.size() < header_size(rank)) throw DecodeError(DecodeErrc::truncated_header, "");

  ByteReader r(bytes.subspan(6));
  EofpArray a;
  a.shape.resize(rank);
  for (auto& d : a.shape) d = r.u32();
  a.window.base = r.i16();
  if (a.window.base < kMinBase || a.window.base > kMaxBase) {
    throw DecodeError(DecodeErrc::bad_window, "base " + std::to_string(a.window.base));
  }

  // Guard the product against overflow before trusting it.
  const std::size_t payload = r.remaining();
  std::size_t count = 1;
  for (std::uint32_t d : a.shape) {
    if (d != 0 && count > (payload * 2 + 2) / d) {
      throw DecodeError(DecodeErrc::truncated_payload, "shape exceeds payload");
    }
    count *= d;
  }
  const std::size_t need = (count + 1) / 2;
  if (payload < need) {
    throw DecodeError(DecodeErrc::truncated_payload,
                      "need " + std::to_string(need) + " bytes, have " + std::to_string(payload));
  }
  if (payload > need) {
    throw DecodeError(DecodeErrc::trailing_bytes, std::to_string(payload - need) + " extra bytes");
  }
  auto body = r.bytes(need);
  a.packed.assign(body.begin(), body.end());
  if (count % 2 == 1 && (a.packed.back() >> 4) != 0) {
    throw DecodeError(DecodeErrc::nonzero_padding, "");
  }
  return a;
}

CompressionReport compression_report(std::size_t lip_elements, std::size_t latent_count) {
  if (lip_elements == 0 || latent_count == 0) {
    throw ValueError("compression_report: counts must be positive");
  }
  CompressionReport r;
  r.r_ae = static_cast<double>(lip_elements) / static_cast<double>(latent_count);
  r.r_qua = Format::compression_ratio();
  r.r_comp = r.r_ae * r.r_qua;
  r.input_bytes = lip_elements * sizeof(float);
  r.output_bytes = (latent_count + 1) / 2;
  return r;
}

}  // namespace lavse::eofp
