#include "lavse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "lavse/error.hpp"
#include "lavse/fft.hpp"

namespace lavse::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
using C = StoiConstants;

// Hann of length n without its zero end points: hanning(n + 2)[1:-1].
std::vector<double> inner_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1));
  return w;
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

// Frame starts 0, hop, ... strictly below len - frame.
std::size_t frames_in(std::size_t len, int frame, int hop) {
  if (len <= static_cast<std::size_t>(frame)) return 0;
  return (len - static_cast<std::size_t>(frame) - 1) / static_cast<std::size_t>(hop) + 1;
}

void remove_silent_frames(const std::vector<double>& x, const std::vector<double>& y, std::vector<double>& xs,
                          std::vector<double>& ys) {
  const auto w = inner_hann(C::frame);
  const std::size_t n = frames_in(x.size(), C::frame, C::hop);
  std::vector<double> energy_db(n);
  for (std::size_t f = 0; f < n; ++f) {
    double e = 0.0;
    for (int i = 0; i < C::frame; ++i) {
      const double v = w[static_cast<std::size_t>(i)] * x[f * C::hop + static_cast<std::size_t>(i)];
      e += v * v;
    }
    energy_db[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double top = n ? *std::max_element(energy_db.begin(), energy_db.end()) : 0.0;
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < n; ++f) {
    if (top - C::dyn_range_db - energy_db[f] < 0.0) kept.push_back(f);
  }
  const std::size_t out_len = kept.empty() ? 0 : (kept.size() - 1) * C::hop + C::frame;
  xs.assign(out_len, 0.0);
  ys.assign(out_len, 0.0);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    for (int i = 0; i < C::frame; ++i) {
      const std::size_t src = kept[j] * C::hop + static_cast<std::size_t>(i);
      xs[j * C::hop + static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(i)] * x[src];
      ys[j * C::hop + static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(i)] * y[src];
    }
  }
}

// Third-octave band envelopes, bands x frames, row-major.
std::vector<double> band_envelopes(const std::vector<double>& x, std::size_t& frames) {
  static const auto edges = third_octave_edges();
  const auto w = inner_hann(C::frame);
  frames = frames_in(x.size(), C::frame, C::hop);
  RealFft fft(C::nfft);
  std::vector<double> buf(C::nfft);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(fft.bins()));
  std::vector<double> out(C::bands * frames, 0.0);
  constexpr double bin_hz = static_cast<double>(C::fs) / C::nfft;
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < C::frame; ++i) buf[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] * x[f * C::hop + static_cast<std::size_t>(i)];
    fft.forward(buf, spec);
    for (int b = 0; b < C::bands; ++b) {
      const auto lo = static_cast<std::size_t>(std::lround(edges[static_cast<std::size_t>(b)].first / bin_hz));
      const auto hi = static_cast<std::size_t>(std::lround(edges[static_cast<std::size_t>(b)].second / bin_hz));
      double p = 0.0;
      for (std::size_t k = lo; k < hi; ++k) p += std::norm(spec[k]);
      out[static_cast<std::size_t>(b) * frames + f] = std::sqrt(p);
    }
  }
  return out;
}

double norm2(const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

std::vector<bool> active_mask(std::span<const double> clean, int fs) {
  const auto frame = static_cast<std::size_t>(fs / 50);
  std::vector<double> energy;
  for (std::size_t start = 0; start < clean.size(); start += frame) {
    double e = 0.0;
    for (std::size_t i = start; i < std::min(clean.size(), start + frame); ++i) e += clean[i] * clean[i];
    energy.push_back(e);
  }
  const double top = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  std::vector<bool> mask(clean.size(), false);
  if (top == 0.0) return mask;
  for (std::size_t f = 0; f < energy.size(); ++f) {
    if (energy[f] > 0.0 && energy[f] >= top * 1e-4) {
      for (std::size_t i = f * frame; i < std::min(clean.size(), (f + 1) * frame); ++i) mask[i] = true;
    }
  }
  return mask;
}

double masked_power(std::span<const double> x, const std::vector<bool>& mask) {
  if (x.size() != mask.size()) throw ShapeError("masked_power: length mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i]) {
      s += x[i] * x[i];
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double measure_snr(std::span<const double> clean, std::span<const double> noisy, int fs) {
  if (clean.size() != noisy.size()) throw ShapeError("measure_snr: length mismatch");
  const auto mask = active_mask(clean, fs);
  std::vector<double> diff(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) diff[i] = noisy[i] - clean[i];
  const double pc = masked_power(clean, mask);
  if (pc == 0.0) throw Error("measure_snr: clean signal has no active frames");
  const double pn = masked_power(diff, mask);
  if (pn == 0.0) return kInfinity;
  return 10.0 * std::log10(pc / pn);
}

double si_sdr(std::span<const double> clean, std::span<const double> estimate) {
  if (clean.size() != estimate.size()) throw ShapeError("si_sdr: length mismatch");
  double ss = 0.0, se = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    ss += clean[i] * clean[i];
    se += clean[i] * estimate[i];
  }
  if (ss == 0.0) throw Error("si_sdr: reference signal is zero");
  const double a = se / ss;
  double target = 0.0, err = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double t = a * clean[i];
    const double e = estimate[i] - t;
    target += t * t;
    err += e * e;
  }
  // Below 1e-20 of the target energy the residual is rounding noise.
  if (err <= 1e-20 * target) return kInfinity;
  return 10.0 * std::log10(target / err);
}

std::vector<std::pair<double, double>> third_octave_edges() {
  constexpr double bin_hz = static_cast<double>(C::fs) / C::nfft;
  constexpr int bins = C::nfft / 2 + 1;
  auto snap = [&](double f) {
    const double k = std::clamp(std::round(f / bin_hz), 0.0, static_cast<double>(bins - 1));
    return k * bin_hz;
  };
  std::vector<std::pair<double, double>> edges;
  for (int k = 0; k < C::bands; ++k) {
    const double lo = C::lowest_center_hz * std::pow(2.0, (2.0 * k - 1.0) / 6.0);
    const double hi = C::lowest_center_hz * std::pow(2.0, (2.0 * k + 1.0) / 6.0);
    edges.emplace_back(snap(lo), snap(hi));
  }
  return edges;
}

std::vector<double> resample_16k_to_10k(std::span<const double> x) {
  constexpr int up = 5, down = 8, half = 32 * up;
  constexpr int taps = 2 * half + 1;
  constexpr double cutoff = 1.0 / down;  // relative to the upsampled Nyquist
  constexpr double beta = 8.0;
  static const std::vector<double> h = [] {
    std::vector<double> h(taps);
    double sum = 0.0;
    const double i0b = bessel_i0(beta);
    for (int n = 0; n < taps; ++n) {
      const double m = n - half;
      const double arg = cutoff * m;
      const double sinc = m == 0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double r = 2.0 * n / (taps - 1) - 1.0;
      const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
      h[static_cast<std::size_t>(n)] = cutoff * sinc * win;
      sum += h[static_cast<std::size_t>(n)];
    }
    for (double& v : h) v *= up / sum;
    return h;
  }();

  const std::size_t out_len = (x.size() * up + down - 1) / down;
  std::vector<double> y(out_len, 0.0);
  const auto nx = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    // Upsampled index aligned with the filter centre.
    const auto centre = static_cast<std::ptrdiff_t>(m) * down + half;
    // Only taps landing on nonzero upsampled samples contribute.
    std::ptrdiff_t n0 = centre % up;
    double acc = 0.0;
    for (std::ptrdiff_t n = n0; n < taps; n += up) {
      const std::ptrdiff_t j = (centre - n) / up;
      if (j >= 0 && j < nx) acc += h[static_cast<std::size_t>(n)] * x[static_cast<std::size_t>(j)];
    }
    y[m] = acc;
  }
  return y;
}

double stoi(std::span<const double> clean, std::span<const double> processed, int fs) {
  if (clean.size() != processed.size()) throw ShapeError("stoi: length mismatch");
  std::vector<double> x, y;
  if (fs == 16000) {
    x = resample_16k_to_10k(clean);
    y = resample_16k_to_10k(processed);
  } else if (fs == C::fs) {
    x.assign(clean.begin(), clean.end());
    y.assign(processed.begin(), processed.end());
  } else {
    throw Error("stoi: sample rate must be 10000 or 16000, got " + std::to_string(fs));
  }

  std::vector<double> xs, ys;
  remove_silent_frames(x, y, xs, ys);
  std::size_t frames = 0, frames_y = 0;
  const auto xb = band_envelopes(xs, frames);
  const auto yb = band_envelopes(ys, frames_y);
  if (frames < static_cast<std::size_t>(C::segment)) {
    throw Error("stoi: signal too short; " + std::to_string(frames) + " non-silent frames, need " +
                std::to_string(C::segment));
  }

  const double clip = std::pow(10.0, -C::beta_db / 20.0);
  const int N = C::segment;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xv(N), yv(N);
  for (std::size_t m = N; m <= frames; ++m) {
    for (int b = 0; b < C::bands; ++b) {
      const double* xr = xb.data() + static_cast<std::size_t>(b) * frames + (m - N);
      const double* yr = yb.data() + static_cast<std::size_t>(b) * frames + (m - N);
      const double scale = norm2(xr, N) / (norm2(yr, N) + kEps);
      double xm = 0.0, ym = 0.0;
      for (int i = 0; i < N; ++i) {
        xv[static_cast<std::size_t>(i)] = xr[i];
        yv[static_cast<std::size_t>(i)] = std::min(yr[i] * scale, xr[i] * (1.0 + clip));
        xm += xv[static_cast<std::size_t>(i)];
        ym += yv[static_cast<std::size_t>(i)];
      }
      xm /= N;
      ym /= N;
      for (int i = 0; i < N; ++i) {
        xv[static_cast<std::size_t>(i)] -= xm;
        yv[static_cast<std::size_t>(i)] -= ym;
      }
      const double nx = norm2(xv.data(), N) + kEps, ny = norm2(yv.data(), N) + kEps;
      double corr = 0.0;
      for (int i = 0; i < N; ++i) corr += (xv[static_cast<std::size_t>(i)] / nx) * (yv[static_cast<std::size_t>(i)] / ny);
      total += corr;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace lavse::metrics
