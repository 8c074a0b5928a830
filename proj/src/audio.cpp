#include "lavse/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lavse/error.hpp"
#include "lavse/fft.hpp"

namespace lavse::audio {

void StftConfig::validate() const {
  if (sample_rate <= 0 || fft_size < 2 || hop <= 0) throw ShapeError("StftConfig: nonpositive size");
  if (fft_size % hop != 0) throw ShapeError("StftConfig: hop must divide fft_size");
}

std::size_t Spectrogram::padded_length() const {
  return frames == 0 ? 0 : (frames - 1) * static_cast<std::size_t>(config.hop) + config.fft_size;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

double cola_deviation(const StftConfig& cfg) {
  cfg.validate();
  const auto w = hann_window(cfg.fft_size);
  // In the interior every sample sees fft_size/hop frames; one hop of
  // positions covers every distinct phase.
  double worst = 0.0;
  for (int n = 0; n < cfg.hop; ++n) {
    double sum = 0.0;
    for (int j = n; j < cfg.fft_size; j += cfg.hop) sum += w[j];
    worst = std::max(worst, std::fabs(sum - 1.0));
  }
  return worst;
}

std::size_t frame_count(std::size_t signal_length, const StftConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.fft_size);
  const auto hop = static_cast<std::size_t>(cfg.hop);
  if (signal_length < n) return 0;
  return 1 + (signal_length - n + hop - 1) / hop;
}

Spectrogram stft(std::span<const double> wave, const StftConfig& cfg) {
  cfg.validate();
  if (wave.size() < static_cast<std::size_t>(cfg.fft_size)) {
    throw ShapeError("stft: signal of " + std::to_string(wave.size()) +
                     " samples is shorter than one frame (" + std::to_string(cfg.fft_size) + ")");
  }
  Spectrogram s;
  s.config = cfg;
  s.signal_length = wave.size();
  s.frames = frame_count(wave.size(), cfg);
  s.values.resize(s.frames * s.bins());

  const auto window = hann_window(cfg.fft_size);
  RealFft fft(cfg.fft_size);
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size));
  for (std::size_t t = 0; t < s.frames; ++t) {
    const std::size_t start = t * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.fft_size; ++i) {
      const std::size_t idx = start + static_cast<std::size_t>(i);
      frame[i] = idx < wave.size() ? wave[idx] * window[i] : 0.0;
    }
    fft.forward(frame, std::span(s.values).subspan(t * s.bins(), s.bins()));
  }
  return s;
}

nn::Tensor magnitude(const Spectrogram& s) {
  nn::Tensor out({s.frames, s.bins()});
  for (std::size_t i = 0; i < s.values.size(); ++i) out[i] = std::abs(s.values[i]);
  return out;
}

nn::Tensor log1p_mag(const Spectrogram& s) {
  nn::Tensor out({s.frames, s.bins()});
  for (std::size_t i = 0; i < s.values.size(); ++i) out[i] = std::log1p(std::abs(s.values[i]));
  return out;
}

nn::Tensor expm1_mag(const nn::Tensor& features) {
  nn::Tensor out(features.shape());
  for (std::size_t i = 0; i < features.size(); ++i) out[i] = std::expm1(features[i]);
  return out;
}

std::vector<double> istft_with_phase(const nn::Tensor& mag, const Spectrogram& phase_source) {
  const StftConfig& cfg = phase_source.config;
  if (mag.rank() != 2 || mag.dim(0) != phase_source.frames || mag.dim(1) != phase_source.bins()) {
    throw ShapeError("istft_with_phase: magnitude " + nn::shape_string(mag.shape()) +
                     " does not match phase source [" + std::to_string(phase_source.frames) + "," +
                     std::to_string(phase_source.bins()) + "]");
  }
  const auto n = static_cast<std::size_t>(cfg.fft_size);
  const auto hop = static_cast<std::size_t>(cfg.hop);
  const std::size_t bins = phase_source.bins();
  const auto window = hann_window(cfg.fft_size);

  std::vector<double> out(phase_source.padded_length(), 0.0);
  std::vector<double> wsum(out.size(), 0.0);
  RealFft fft(cfg.fft_size);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> frame(n);
  for (std::size_t t = 0; t < phase_source.frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) {
      const auto& z = phase_source.at(t, k);
      const double phase = (z == std::complex<double>{}) ? 0.0 : std::arg(z);
      spec[k] = std::polar(mag.at(t, k), phase);
    }
    fft.inverse(spec, frame);
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < n; ++i) {
      out[start + i] += frame[i] * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }

  // Where fewer than the full set of frames overlap (the first and last half
  // frame) the squared-window sum falls towards zero. Flooring it at half its
  // interior minimum keeps modified spectra from being amplified there while
  // leaving interior samples exact.
  double interior_min = 1e300;
  for (std::size_t i = 0; i < hop; ++i) {
    double s = 0.0;
    for (std::size_t j = i; j < n; j += hop) s += window[j] * window[j];
    interior_min = std::min(interior_min, s);
  }
  const double floor = 0.5 * interior_min;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= std::max(wsum[i], floor);
  return out;
}

}  // namespace lavse::audio
