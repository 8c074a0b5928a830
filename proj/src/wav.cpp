#include "lavse/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lavse/binary_io.hpp"
#include "lavse/error.hpp"

namespace lavse::audio {

namespace {

bool tag_is(std::span<const std::uint8_t> b, const char* tag) {
  return std::memcmp(b.data(), tag, 4) == 0;
}

}  // namespace

std::int16_t to_pcm16(double x) {
  const double scaled = std::nearbyint(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

Wave decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!tag_is(r.bytes(4), "RIFF")) throw FormatError("wav: missing RIFF tag");
  r.u32();
  if (!tag_is(r.bytes(4), "WAVE")) throw FormatError("wav: missing WAVE tag");

  bool have_fmt = false;
  Wave wave;
  while (r.remaining() >= 8) {
    auto id = r.bytes(4);
    const std::uint32_t size = r.u32();
    if (size > r.remaining()) throw FormatError("wav: chunk overruns file");
    if (tag_is(id, "fmt ")) {
      ByteReader fmt(r.bytes(size));
      const std::uint16_t format = fmt.u16();
      const std::uint16_t channels = fmt.u16();
      wave.sample_rate = static_cast<int>(fmt.u32());
      fmt.u32();  // byte rate
      fmt.u16();  // block align
      const std::uint16_t bits = fmt.u16();
      if (format != 1 || channels != 1 || bits != 16) {
        throw FormatError("wav: only mono 16-bit PCM is supported (format " +
                          std::to_string(format) + ", " + std::to_string(channels) +
                          " channels, " + std::to_string(bits) + " bits)");
      }
      have_fmt = true;
    } else if (tag_is(id, "data")) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      auto data = r.bytes(size);
      wave.samples.resize(size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
        wave.samples[i] = v / 32768.0;
      }
      return wave;
    } else {
      r.bytes(size);
    }
    if (size % 2 == 1 && r.remaining() > 0) r.u8();
  }
  throw FormatError("wav: no data chunk");
}

Wave read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  ByteWriter w;
  const std::uint8_t riff[] = {'R', 'I', 'F', 'F'};
  const std::uint8_t wave[] = {'W', 'A', 'V', 'E'};
  const std::uint8_t fmt[] = {'f', 'm', 't', ' '};
  const std::uint8_t data[] = {'d', 'a', 't', 'a'};
  w.bytes(riff);
  w.u32(36 + data_bytes);
  w.bytes(wave);
  w.bytes(fmt);
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(sample_rate));
  w.u32(static_cast<std::uint32_t>(sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.bytes(data);
  w.u32(data_bytes);
  for (double x : samples) w.i16(to_pcm16(x));
  return w.release();
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate) {
  write_file_bytes(path, encode_wav(samples, sample_rate));
}

}  // namespace lavse::audio
