#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lavse/error.hpp"
#include "lavse/metrics.hpp"
#include "lavse/rng.hpp"
#include "lavse/synth.hpp"

using namespace lavse;
using namespace lavse::metrics;

namespace {

constexpr double kPi = std::numbers::pi;

// Mirrors gen_stoi_reference.py.
std::vector<double> lcg_noise(std::uint64_t seed, std::size_t n) {
  std::vector<double> out(n);
  std::uint64_t s = seed;
  for (auto& v : out) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(s >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  return out;
}

void reference_signal(int c, int fs, std::vector<double>& x, std::vector<double>& y) {
  const auto n = static_cast<std::size_t>(2.5 * fs);
  const double f0 = 110.0 + 20.0 * c;
  x.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double e = std::max(0.0, std::sin(2 * kPi * (2.0 + 0.5 * c) * t));
    double s = 0.0;
    for (int k = 1; k < 6; ++k) s += std::sin(2 * kPi * k * f0 * t) / k;
    x[i] = s * e * e;
  }
  const auto noise = lcg_noise(1000 + static_cast<std::uint64_t>(c), n);
  double px = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    px += x[i] * x[i];
    pn += noise[i] * noise[i];
  }
  const double snr = 5.0 - 4.0 * c;
  const double g = std::sqrt((px / n) / (pn / n) / std::pow(10.0, snr / 10.0));
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + noise[i] * g;
}

std::vector<double> add_white(const std::vector<double>& clean, double snr_db, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> n(clean.size());
  for (double& v : n) v = rng.normal();
  double pc = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    pc += clean[i] * clean[i];
    pn += n[i] * n[i];
  }
  const double g = std::sqrt(pc / pn / std::pow(10.0, snr_db / 10.0));
  std::vector<double> out(clean);
  for (std::size_t i = 0; i < n.size(); ++i) out[i] += g * n[i];
  return out;
}

// Independent SI-SDR: explicit long double projection.
double naive_si_sdr(const std::vector<double>& s, const std::vector<double>& x) {
  long double dot = 0, ss = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dot += static_cast<long double>(s[i]) * x[i];
    ss += static_cast<long double>(s[i]) * s[i];
  }
  std::vector<long double> proj(s.size());
  long double pt = 0, pe = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    proj[i] = dot / ss * s[i];
    pt += proj[i] * proj[i];
    pe += (x[i] - proj[i]) * (x[i] - proj[i]);
  }
  return static_cast<double>(10.0L * std::log10(pt / pe));
}

}  // namespace

TEST_CASE("stoi matches the pystoi reference values") {
  std::ifstream in(std::string(LAVSE_TEST_DATA) + "/stoi_reference.csv");
  REQUIRE(in);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::vector<double> x, y;
    reference_signal(std::stoi(a), std::stoi(b), x, y);
    INFO("case ", a, " fs ", b);
    CHECK(std::fabs(stoi(x, y, std::stoi(b)) - std::stod(c)) < 1e-8);
    ++rows;
  }
  CHECK(rows == 8);
}

TEST_CASE("stoi self-identity and range") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = synth::gen_clean(seed, 3.0, 16000);
    CHECK(std::fabs(stoi(x, x, 16000) - 1.0) < 1e-6);
    const auto y = add_white(x, 0.0, seed + 100);
    const double d = stoi(x, y, 16000);
    CHECK(d >= -1.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("stoi is nonincreasing as white-noise SNR falls") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = synth::gen_clean(derive_seed(77, 1, seed), 3.0, 16000);
    double prev = 2.0;
    for (double snr : {12.0, 6.0, 0.0, -6.0, -12.0}) {
      const double d = stoi(x, add_white(x, snr, derive_seed(77, 2, seed)), 16000);
      CHECK(d <= prev);
      prev = d;
    }
  }
}

TEST_CASE("stoi of a sign-flipped signal (characterization)") {
  const auto x = synth::gen_clean(3, 3.0, 16000);
  std::vector<double> neg(x);
  for (double& v : neg) v = -v;
  const double d = stoi(x, neg, 16000);
  MESSAGE("stoi(x, -x) = ", d);
  CHECK(std::isfinite(d));
}

TEST_CASE("stoi errors and purity") {
  const auto x = synth::gen_clean(1, 3.0, 16000);
  CHECK_THROWS_AS(stoi(x, std::vector<double>(x.size() - 1), 16000), ShapeError);
  CHECK_THROWS_AS(stoi(x, x, 8000), Error);
  const std::vector<double> shortx(x.begin(), x.begin() + 4000);
  CHECK_THROWS_AS(stoi(shortx, shortx, 16000), Error);
  const auto y = add_white(x, 3.0, 9);
  const double a = stoi(x, y, 16000), b = stoi(x, y, 16000);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("third-octave bands") {
  const auto e = third_octave_edges();
  REQUIRE(e.size() == 15);
  for (std::size_t i = 0; i < e.size(); ++i) {
    CHECK(e[i].first < e[i].second);
    if (i) CHECK(e[i].first >= e[i - 1].second - 1e-9);
  }
  // Lowest band straddles 150 Hz; edges sit on the 19.53 Hz bin grid.
  CHECK(e[0].first < 150.0);
  CHECK(e[0].second > 150.0);
  CHECK(std::fabs(std::fmod(e[3].first, 10000.0 / 512)) < 1e-9);
}

TEST_CASE("resampler passes the speech band and stops above 5 kHz") {
  auto tone_gain = [](double f) {
    std::vector<double> x(16000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * kPi * f * i / 16000.0);
    const auto y = resample_16k_to_10k(x);
    CHECK(y.size() == 10000);
    double p = 0.0;
    for (std::size_t i = 1000; i < 9000; ++i) p += y[i] * y[i];
    return std::sqrt(2.0 * p / 8000.0);
  };
  CHECK(std::fabs(tone_gain(1000.0) - 1.0) < 1e-3);
  CHECK(std::fabs(tone_gain(3500.0) - 1.0) < 1e-3);
  CHECK(tone_gain(6500.0) < 1e-3);
}

TEST_CASE("si_sdr") {
  Rng rng(5);
  std::vector<double> s(4000), n(4000);
  for (double& v : s) v = rng.normal();
  for (double& v : n) v = rng.normal();
  // Remove the component of n along s, then set ||n||^2 = ||s||^2 / 100.
  double dot = 0.0, ss = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dot += s[i] * n[i];
    ss += s[i] * s[i];
  }
  for (std::size_t i = 0; i < s.size(); ++i) n[i] -= dot / ss * s[i];
  for (double v : n) nn += v * v;
  std::vector<double> x(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = s[i] + n[i] * std::sqrt(ss / 100.0 / nn);
  CHECK(std::fabs(si_sdr(s, x) - 20.0) < 0.01);

  for (double alpha : {0.01, 0.5, 3.0, 1e4}) {
    std::vector<double> ax(x), as(s);
    for (double& v : ax) v *= alpha;
    for (double& v : as) v *= alpha;
    CHECK(std::fabs(si_sdr(s, ax) - si_sdr(s, x)) < 1e-9);
    CHECK(si_sdr(s, as) == kInfinity);
  }

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(1000), b(1000);
    for (double& v : a) v = rng.normal();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1, 1) + rng.uniform(0, 1) * a[i];
    CHECK(std::fabs(si_sdr(a, b) - naive_si_sdr(a, b)) < 1e-9);
  }
  CHECK_THROWS_AS(si_sdr(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0)), Error);
  CHECK_THROWS_AS(si_sdr(s, std::vector<double>(5)), ShapeError);
}

TEST_CASE("active mask and measure_snr") {
  // Two loud frames, one frame 30 dB down, one 50 dB down, one silent.
  std::vector<double> x(5 * 320, 0.0);
  const double amp[5] = {1.0, 1.0, std::pow(10.0, -1.5), std::pow(10.0, -2.5), 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp[i / 320] * (i % 2 ? 1.0 : -1.0);
  const auto mask = active_mask(x, 16000);
  for (std::size_t f = 0; f < 5; ++f) CHECK(mask[f * 320 + 7] == (f < 3));

  const auto clean = synth::gen_clean(11, 3.0, 16000);
  CHECK(measure_snr(clean, clean, 16000) == kInfinity);
  Rng rng(12);
  std::vector<double> noise(clean.size());
  for (double& v : noise) v = 0.05 * rng.normal();
  std::vector<double> y1(clean), y2(clean);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    y1[i] += noise[i];
    y2[i] += 2.0 * noise[i];
  }
  CHECK(std::fabs(measure_snr(clean, y1, 16000) - measure_snr(clean, y2, 16000) - 20.0 * std::log10(2.0)) < 0.01);
  CHECK(std::fabs(20.0 * std::log10(2.0) - 6.02) < 0.01);
}
