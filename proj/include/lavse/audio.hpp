#pragma once

// STFT analysis, log1p-magnitude features and noisy-phase resynthesis.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "lavse/tensor.hpp"

namespace lavse::audio {

struct StftConfig {
  int sample_rate = 16000;
  int fft_size = 512;
  int hop = 256;

  int bins() const { return fft_size / 2 + 1; }
  // Throws if hop does not divide fft_size or sizes are not positive.
  void validate() const;
};

struct Spectrogram {
  StftConfig config;
  std::size_t frames = 0;
  std::size_t signal_length = 0;  // samples before tail padding
  std::vector<std::complex<double>> values;  // frames x bins, row-major

  std::size_t bins() const { return static_cast<std::size_t>(config.bins()); }
  std::complex<double>& at(std::size_t t, std::size_t k) { return values[t * bins() + k]; }
  const std::complex<double>& at(std::size_t t, std::size_t k) const {
    return values[t * bins() + k];
  }
  // (frames - 1) * hop + fft_size
  std::size_t padded_length() const;
};

// Periodic Hann: w[n] = 0.5 - 0.5 cos(2 pi n / N).
std::vector<double> hann_window(int n);

// Largest deviation from 1 of sum_t w[n - t*hop] over samples covered by a
// full set of overlapping frames.
double cola_deviation(const StftConfig& cfg);

std::size_t frame_count(std::size_t signal_length, const StftConfig& cfg);

// Frames start at 0 and advance by hop; the last frame is zero-padded so every
// sample is covered. Throws ShapeError when wave is shorter than fft_size.
Spectrogram stft(std::span<const double> wave, const StftConfig& cfg = {});

// ln(1 + |X|), frames x bins.
nn::Tensor log1p_mag(const Spectrogram& s);

// e^v - 1 elementwise.
nn::Tensor expm1_mag(const nn::Tensor& features);

nn::Tensor magnitude(const Spectrogram& s);

// Combines magnitudes with the phase of phase_source, inverts each frame and
// overlap-adds with the Hann synthesis window normalized by the summed squared
// window. Returns padded_length() samples.
std::vector<double> istft_with_phase(const nn::Tensor& mag, const Spectrogram& phase_source);

}  // namespace lavse::audio
