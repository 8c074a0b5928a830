#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lavse::audio {

struct Wave {
  int sample_rate = 16000;
  std::vector<double> samples;  // [-1, 1]
};

// Mono 16-bit PCM RIFF/WAVE. Unknown chunks are skipped on read.
Wave read_wav(const std::filesystem::path& path);
Wave decode_wav(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate);
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate);

// x * 32768 rounded to nearest and saturated to int16.
std::int16_t to_pcm16(double x);

}  // namespace lavse::audio
