#pragma once

// Objective speech quality measures: STOI, SI-SDR and active-frame SNR.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace lavse::metrics {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Non-overlapping 20 ms frames of `clean` whose energy is within 40 dB of the
// loudest frame; a trailing partial frame counts as a frame. Returns one flag
// per sample.
std::vector<bool> active_mask(std::span<const double> clean, int fs);

// Mean of x^2 over samples where mask is set.
double masked_power(std::span<const double> x, const std::vector<bool>& mask);

// 10 log10(P_clean / P_(noisy - clean)) over active clean frames; +inf when the
// difference is zero there.
double measure_snr(std::span<const double> clean, std::span<const double> noisy, int fs);

// Scale-invariant SDR in dB; +inf when the estimate is an exact multiple of
// the reference. Throws on zero reference or length mismatch.
double si_sdr(std::span<const double> clean, std::span<const double> estimate);

struct StoiConstants {
  static constexpr int fs = 10000;
  static constexpr int frame = 256;
  static constexpr int hop = 128;
  static constexpr int nfft = 512;
  static constexpr int bands = 15;
  static constexpr double lowest_center_hz = 150.0;
  static constexpr int segment = 30;
  static constexpr double dyn_range_db = 40.0;
  static constexpr double beta_db = -15.0;
};

// Short-time objective intelligibility. fs must be 10000 or 16000; 16 kHz
// input is resampled first. Throws on length mismatch or when fewer than 30
// frames survive silence removal.
double stoi(std::span<const double> clean, std::span<const double> processed, int fs);

// Rational 16 kHz -> 10 kHz resampler (up 5, down 8), Kaiser-windowed sinc
// with beta 8 and 64 taps per phase.
std::vector<double> resample_16k_to_10k(std::span<const double> x);

// Band edges of the third-octave filterbank in Hz: {low, high} for each band.
std::vector<std::pair<double, double>> third_octave_edges();

}  // namespace lavse::metrics
