#include "lavse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "lavse/error.hpp"
#include "lavse/fft.hpp"
#include "lavse/image.hpp"
#include "lavse/metrics.hpp"
#include "lavse/rng.hpp"
#include "lavse/wav.hpp"

namespace lavse::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Seed streams.
constexpr std::uint64_t kTrainClean = 0x10;
constexpr std::uint64_t kTestClean = 0x11;
constexpr std::uint64_t kTrainNoise = 0x20;
constexpr std::uint64_t kTestNoise = 0x21;
constexpr std::uint64_t kLipStream = 0x30;
constexpr std::uint64_t kBabbleStream = 0x40;

std::size_t sample_count(double duration_s, int fs) {
  return static_cast<std::size_t>(std::lround(duration_s * fs));
}

void normalize_rms(std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  const double rms = std::sqrt(p / static_cast<double>(x.size()));
  if (rms == 0.0) throw Error("noise generator produced silence");
  for (double& v : x) v /= rms;
}

// Splits total into parts proportional to weights; the last part takes the
// rounding remainder.
std::vector<std::size_t> split_total(std::size_t total, const std::vector<double>& weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<std::size_t> parts;
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    const auto p = static_cast<std::size_t>(std::floor(static_cast<double>(total) * weights[i] / sum));
    parts.push_back(p);
    used += p;
  }
  parts.push_back(total - used);
  return parts;
}

double raised_cosine_ramp(std::size_t i, std::size_t len, std::size_t ramp) {
  const std::size_t r = std::min(ramp, len / 2);
  if (r == 0) return 1.0;
  auto rise = [&](std::size_t k) { return 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) / r); };
  if (i < r) return rise(i);
  if (len - 1 - i < r) return rise(len - 1 - i);
  return 1.0;
}

std::vector<double> pink_noise(Rng& rng, std::size_t n) {
  std::size_t nfft = 1;
  while (nfft < n) nfft <<= 1;
  std::vector<double> white(nfft);
  for (double& v : white) v = rng.normal();
  RealFft fft(static_cast<int>(nfft));
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(white, spec);
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) spec[k] /= std::sqrt(static_cast<double>(k));
  fft.inverse(spec, white);
  white.resize(n);
  normalize_rms(white);
  return white;
}

std::vector<double> engine_noise(Rng& rng, std::size_t n, int fs) {
  const double f0 = rng.uniform(30.0, 60.0);
  const int harmonics = 20;
  const double wobble_rate = rng.uniform(0.2, 0.8);
  const double wobble_depth = rng.uniform(0.01, 0.03);
  std::vector<double> phase(harmonics + 1);
  for (double& p : phase) p = rng.uniform(0.0, kTwoPi);
  std::vector<double> x(n);
  double theta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 * (1.0 + wobble_depth * std::sin(kTwoPi * wobble_rate * t));
    theta += kTwoPi * f / fs;
    double s = 0.0;
    for (int k = 1; k <= harmonics; ++k) s += std::pow(static_cast<double>(k), -0.7) * std::sin(k * theta + phase[k]);
    x[i] = s;
  }
  normalize_rms(x);
  const auto floor = pink_noise(rng, n);
  for (std::size_t i = 0; i < n; ++i) x[i] += 0.1 * floor[i];
  normalize_rms(x);
  return x;
}

std::vector<double> street_noise(Rng& rng, std::size_t n, int fs) {
  auto x = pink_noise(rng, n);
  const int bursts = rng.uniform_int(3, 8);
  for (int b = 0; b < bursts; ++b) {
    const auto start = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(n)));
    const double len_s = rng.uniform(0.05, 0.3);
    const double amp = rng.uniform(2.0, 5.0);
    const double tone = rng.uniform(300.0, 2500.0);
    const auto len = static_cast<std::size_t>(len_s * fs);
    for (std::size_t i = 0; i < len && start + i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      const double decay = std::exp(-t / (0.3 * len_s));
      const double carrier = 0.5 * rng.normal() + std::sin(kTwoPi * tone * t);
      x[start + i] += amp * decay * carrier;
    }
  }
  normalize_rms(x);
  return x;
}

std::vector<double> music_noise(Rng& rng, std::size_t n, int fs) {
  std::vector<double> x(n, 0.0);
  std::size_t pos = 0;
  while (pos < n) {
    const auto len = std::min(n - pos, static_cast<std::size_t>(rng.uniform(0.4, 0.8) * fs));
    const int root = rng.uniform_int(48, 72);
    const bool minor = rng.uniform() < 0.5;
    std::vector<int> notes{root, root + (minor ? 3 : 4), root + 7};
    if (rng.uniform() < 0.5) notes.push_back(root + 12);
    for (int midi : notes) {
      const double f = 440.0 * std::pow(2.0, (midi - 69) / 12.0);
      const double ph = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double env = std::min(1.0, t / 0.02) * std::exp(-1.5 * t);
        double s = 0.0;
        for (int h = 1; h <= 4; ++h) {
          if (h * f < 0.45 * fs) s += std::sin(kTwoPi * h * f * t + h * ph) / h;
        }
        x[pos + i] += env * s;
      }
    }
    pos += len;
  }
  normalize_rms(x);
  return x;
}

std::string snr_tag(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", snr);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> pcm_round_trip(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = audio::to_pcm16(x[i]) / 32768.0;
  return out;
}

}  // namespace

const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble: return "babble";
    case NoiseKind::engine: return "engine";
    case NoiseKind::street: return "street";
    case NoiseKind::music: return "music";
  }
  return "?";
}

const std::vector<NoiseKind>& all_noise_kinds() {
  static const std::vector<NoiseKind> kinds{NoiseKind::white,  NoiseKind::pink,   NoiseKind::babble,
                                            NoiseKind::engine, NoiseKind::street, NoiseKind::music};
  return kinds;
}

NoiseKind parse_noise_kind(const std::string& name) {
  for (NoiseKind k : all_noise_kinds()) {
    if (name == to_string(k)) return k;
  }
  throw Error("unknown noise kind '" + name + "'");
}

CleanUtterance gen_clean_utterance(std::uint64_t seed, double duration_s, int fs,
                                   const CleanOptions& opt) {
  if (!(duration_s >= 0.5)) throw Error("gen_clean: duration must be at least 0.5 s");
  const std::size_t n = sample_count(duration_s, fs);
  Rng rng(seed);
  const int segments = rng.uniform_int(opt.min_segments, opt.max_segments);
  const double silence = rng.uniform(0.25, 0.35);
  const auto silent_total = static_cast<std::size_t>(std::lround(silence * static_cast<double>(n)));

  std::vector<double> gap_w(static_cast<std::size_t>(segments) + 1), seg_w(static_cast<std::size_t>(segments));
  for (double& w : gap_w) w = rng.uniform(0.5, 1.5);
  for (double& w : seg_w) w = rng.uniform(0.6, 1.4);
  const auto gaps = split_total(silent_total, gap_w);
  const auto lens = split_total(n - silent_total, seg_w);

  CleanUtterance out;
  out.samples.assign(n, 0.0);
  out.silence_fraction = static_cast<double>(silent_total) / static_cast<double>(n);
  const auto ramp = static_cast<std::size_t>(0.015 * fs);
  std::size_t pos = gaps[0];
  for (int s = 0; s < segments; ++s) {
    VoicedSegment seg;
    seg.begin = pos;
    seg.end = pos + lens[static_cast<std::size_t>(s)];
    seg.f0 = rng.uniform(90.0, 250.0);
    seg.harmonics = rng.uniform_int(3, 8);
    std::vector<double> phase(static_cast<std::size_t>(seg.harmonics) + 1);
    for (double& p : phase) p = rng.uniform(0.0, kTwoPi);
    const double am_rate = rng.uniform(3.0, 6.0);
    const double am_depth = rng.uniform(0.3, 0.7);
    const double am_phase = rng.uniform(0.0, kTwoPi);
    const std::size_t len = seg.end - seg.begin;
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / fs;
      double v = 0.0;
      for (int k = 1; k <= seg.harmonics; ++k) v += std::sin(kTwoPi * k * seg.f0 * t + phase[static_cast<std::size_t>(k)]) / k;
      const double am = 1.0 - am_depth * (0.5 - 0.5 * std::cos(kTwoPi * am_rate * t + am_phase));
      out.samples[seg.begin + i] = v * am * raised_cosine_ramp(i, len, ramp);
    }
    out.segments.push_back(seg);
    pos = seg.end + gaps[static_cast<std::size_t>(s) + 1];
  }

  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    for (double& v : out.samples) v *= 0.5 / peak;
  }
  return out;
}

std::vector<double> gen_clean(std::uint64_t seed, double duration_s, int fs) {
  return gen_clean_utterance(seed, duration_s, fs).samples;
}

std::uint64_t babble_talker_seed(std::uint64_t seed, int i) {
  return derive_seed(seed, kBabbleStream, static_cast<std::uint64_t>(i));
}

std::vector<double> gen_noise(NoiseKind kind, std::uint64_t seed, double duration_s, int fs) {
  const std::size_t n = sample_count(duration_s, fs);
  if (n == 0) throw Error("gen_noise: empty duration");
  Rng rng(seed);
  switch (kind) {
    case NoiseKind::white: {
      std::vector<double> x(n);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      normalize_rms(x);
      return x;
    }
    case NoiseKind::pink: return pink_noise(rng, n);
    case NoiseKind::babble: {
      std::vector<double> x(n, 0.0);
      for (std::uint64_t s = 0; s < 6; ++s) {
        const auto talker = gen_clean(babble_talker_seed(seed, static_cast<int>(s)), std::max(duration_s, 0.5), fs);
        for (std::size_t i = 0; i < n; ++i) x[i] += talker[i];
      }
      normalize_rms(x);
      return x;
    }
    case NoiseKind::engine: return engine_noise(rng, n, fs);
    case NoiseKind::street: return street_noise(rng, n, fs);
    case NoiseKind::music: return music_noise(rng, n, fs);
  }
  throw Error("gen_noise: unknown kind");
}

MixResult mix_at_snr(const std::vector<double>& clean, const std::vector<double>& noise, double snr_db,
                     int fs) {
  if (clean.empty()) throw Error("mix_at_snr: empty clean signal");
  if (noise.empty()) throw Error("mix_at_snr: empty noise signal");
  std::vector<double> tiled(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) tiled[i] = noise[i % noise.size()];

  const auto mask = metrics::active_mask(clean, fs);
  const double pc = metrics::masked_power(clean, mask);
  const double pn = metrics::masked_power(tiled, mask);
  if (pc == 0.0) throw Error("mix_at_snr: clean signal has zero power");
  if (pn == 0.0) throw Error("mix_at_snr: noise has zero power over active frames");

  MixResult r;
  r.alpha = std::isinf(snr_db) && snr_db > 0 ? 0.0 : std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  r.noisy.resize(clean.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    r.noisy[i] = clean[i] + r.alpha * tiled[i];
    peak = std::max(peak, std::fabs(r.noisy[i]));
  }
  // Largest value that survives 16-bit conversion unclipped.
  constexpr double limit = 32767.0 / 32768.0;
  if (peak > limit) {
    r.gain = limit / peak;
    for (double& v : r.noisy) v *= r.gain;
  }
  return r;
}

std::size_t lip_frame_count(std::size_t samples, int fps_v, int fs) {
  const auto num = static_cast<std::uint64_t>(samples) * static_cast<std::uint64_t>(fps_v);
  return static_cast<std::size_t>((num + static_cast<std::uint64_t>(fs) - 1) / static_cast<std::uint64_t>(fs));
}

std::vector<double> lip_envelope(const std::vector<double>& clean, int fps_v, int fs) {
  const std::size_t frames = lip_frame_count(clean.size(), fps_v, fs);
  const auto half = static_cast<std::ptrdiff_t>(std::lround(0.02 * fs));
  std::vector<double> env(frames, 0.0);
  for (std::size_t k = 0; k < frames; ++k) {
    const auto c = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(k) * fs / fps_v));
    const auto lo = std::max<std::ptrdiff_t>(0, c - half);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(clean.size()), c + half);
    double p = 0.0;
    for (auto i = lo; i < hi; ++i) p += clean[static_cast<std::size_t>(i)] * clean[static_cast<std::size_t>(i)];
    env[k] = hi > lo ? std::sqrt(p / static_cast<double>(hi - lo)) : 0.0;
  }
  const double top = env.empty() ? 0.0 : *std::max_element(env.begin(), env.end());
  if (top > 0.0) {
    for (double& e : env) e /= top;
  }
  return env;
}

std::vector<nn::Tensor> gen_lip_frames(const std::vector<double>& clean, int fps_v, int fs,
                                       std::uint64_t seed) {
  constexpr std::size_t S = 64, plane = S * S;
  Rng rng(seed);
  const double skin_r = rng.uniform(0.75, 0.95);
  const double skin[3] = {skin_r, skin_r * rng.uniform(0.62, 0.78), skin_r * rng.uniform(0.5, 0.65)};
  const double lip[3] = {rng.uniform(0.55, 0.75), rng.uniform(0.2, 0.35), rng.uniform(0.25, 0.4)};
  const double mouth[3] = {rng.uniform(0.15, 0.3), rng.uniform(0.03, 0.08), rng.uniform(0.05, 0.1)};

  // Static low-frequency shading of the skin.
  struct Wave2 { double amp, fx, fy, phase; };
  std::vector<Wave2> waves;
  for (int i = 0; i < 3; ++i) {
    const double angle = rng.uniform(0.0, kTwoPi);
    const double cycles = rng.uniform(0.3, 1.5);
    waves.push_back({rng.uniform(0.02, 0.05), cycles * std::cos(angle) / S, cycles * std::sin(angle) / S,
                     rng.uniform(0.0, kTwoPi)});
  }
  nn::Tensor background({3, S, S});
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      double shade = 0.0;
      for (const auto& w : waves) shade += w.amp * std::sin(kTwoPi * (w.fx * (x + 0.5) + w.fy * (y + 0.5)) + w.phase);
      for (std::size_t c = 0; c < 3; ++c) background[c * plane + y * S + x] = std::clamp(skin[c] + shade, 0.0, 1.0);
    }
  }

  const auto env = lip_envelope(clean, fps_v, fs);
  std::vector<nn::Tensor> frames;
  frames.reserve(env.size());
  constexpr int sub = 4;
  for (double e : env) {
    const double ry = mouth_radius_y(e);
    const double rx = kMouthRadiusX;
    const double ox = rx + kLipThickness, oy = ry + kLipThickness;
    nn::Tensor img = background;
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        int n_mouth = 0, n_lip = 0;
        for (int sy = 0; sy < sub; ++sy) {
          for (int sx = 0; sx < sub; ++sx) {
            const double px = x + (sx + 0.5) / sub - kMouthCenterX;
            const double py = y + (sy + 0.5) / sub - kMouthCenterY;
            if ((px / rx) * (px / rx) + (py / ry) * (py / ry) <= 1.0) {
              ++n_mouth;
            } else if ((px / ox) * (px / ox) + (py / oy) * (py / oy) <= 1.0) {
              ++n_lip;
            }
          }
        }
        if (n_mouth + n_lip == 0) continue;
        const double fm = n_mouth / double(sub * sub), fl = n_lip / double(sub * sub);
        for (std::size_t c = 0; c < 3; ++c) {
          double& v = img[c * plane + y * S + x];
          v = fm * mouth[c] + fl * lip[c] + (1.0 - fm - fl) * v;
        }
      }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

void CorpusConfig::validate() const {
  if (n_train_utt < 1 || n_test_utt < 1) throw Error("corpus needs at least one train and one test utterance");
  if (train_snrs_db.empty() || test_snrs_db.empty()) throw Error("SNR sets must be nonempty");
  if (train_noise_kinds.empty() || test_noise_kinds.empty()) throw Error("noise kind sets must be nonempty");
  for (NoiseKind a : train_noise_kinds) {
    for (NoiseKind b : test_noise_kinds) {
      if (a == b) throw Error(std::string("noise kind '") + to_string(a) + "' is in both train and test sets");
    }
  }
  for (double a : train_snrs_db) {
    for (double b : test_snrs_db) {
      if (a == b) throw Error("SNR " + snr_tag(a) + " dB is in both train and test sets");
    }
  }
  if (fps_v < 1 || fs < 1) throw Error("rates must be positive");
}

std::vector<ManifestRecord> Manifest::split(const std::string& name) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == name) out.push_back(r);
  }
  return out;
}

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestRecord>& records) {
  std::ostringstream out;
  out << "id,split,utt,clean,noisy,lips,snr_db,noise,clean_seed,noise_seed,gain\n";
  for (const auto& r : records) {
    out << r.id << ',' << r.split << ',' << r.utt << ',' << r.clean << ',' << r.noisy << ',' << r.lips << ','
        << fmt_exact(r.snr_db) << ',' << r.noise << ',' << r.clean_seed << ',' << r.noise_seed << ','
        << fmt_exact(r.gain) << '\n';
  }
  const std::string text = out.str();
  std::filesystem::create_directories(file.parent_path().empty() ? "." : file.parent_path());
  std::ofstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot write " + file.string());
  f << text;
  if (!f) throw IoError("write failed: " + file.string());
}

Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != "id,split,utt,clean,noisy,lips,snr_db,noise,clean_seed,noise_seed,gain") {
    throw FormatError(file.string() + ": missing or unexpected header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 11) {
      throw FormatError(file.string() + ":" + std::to_string(line_no) + ": expected 11 fields");
    }
    try {
      ManifestRecord r;
      r.id = cells[0];
      r.split = cells[1];
      r.utt = cells[2];
      r.clean = cells[3];
      r.noisy = cells[4];
      r.lips = cells[5];
      r.snr_db = std::stod(cells[6]);
      r.noise = cells[7];
      r.clean_seed = std::stoull(cells[8]);
      r.noise_seed = std::stoull(cells[9]);
      r.gain = std::stod(cells[10]);
      m.records.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError(file.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return m;
}

void check_manifest(const Manifest& m) {
  std::set<std::string> ids;
  std::map<std::string, std::set<std::pair<std::string, double>>> conditions;
  std::map<std::string, std::set<std::uint64_t>> seeds;
  for (const auto& r : m.records) {
    if (!ids.insert(r.id).second) throw Error("manifest: duplicate id " + r.id);
    if (r.split != "train" && r.split != "test") throw Error("manifest: unknown split '" + r.split + "' for " + r.id);
    for (const auto* rel : {&r.clean, &r.noisy}) {
      if (!std::filesystem::is_regular_file(m.path(*rel))) throw Error("manifest: missing file " + *rel);
    }
    if (!std::filesystem::is_regular_file(m.path(r.lips) / lip_frame_name(0))) {
      throw Error("manifest: missing lip frames in " + r.lips);
    }
    if (!(r.gain > 0.0 && r.gain <= 1.0)) throw Error("manifest: gain out of range for " + r.id);
    conditions[r.split].insert({r.noise, r.snr_db});
    seeds[r.split].insert(r.clean_seed);
  }
  for (const auto& c : conditions["train"]) {
    if (conditions["test"].count(c)) {
      throw Error("manifest: condition " + c.first + "/" + snr_tag(c.second) + " dB is in both splits");
    }
  }
  for (auto s : seeds["train"]) {
    if (seeds["test"].count(s)) throw Error("manifest: a clean utterance seed is shared by train and test");
  }
}

std::string lip_frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu.ppm", index);
  return buf;
}

std::vector<nn::Tensor> read_lip_frames(const std::filesystem::path& dir) {
  std::vector<nn::Tensor> frames;
  for (std::size_t i = 0;; ++i) {
    const auto p = dir / lip_frame_name(i);
    if (!std::filesystem::exists(p)) break;
    frames.push_back(image::read_ppm(p));
  }
  if (frames.empty()) throw IoError("no lip frames in " + dir.string());
  return frames;
}

Manifest build_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  if (cfg.out_dir.empty()) throw Error("corpus output directory not set");
  Manifest m;
  m.root = cfg.out_dir;
  for (const std::string split : {"train", "test"}) {
    const bool train = split == "train";
    const int n_utt = train ? cfg.n_train_utt : cfg.n_test_utt;
    const auto& kinds = train ? cfg.train_noise_kinds : cfg.test_noise_kinds;
    const auto& snrs = train ? cfg.train_snrs_db : cfg.test_snrs_db;
    std::uint64_t item = 0;
    for (int u = 0; u < n_utt; ++u) {
      char utt_buf[16];
      std::snprintf(utt_buf, sizeof utt_buf, "u%04d", u);
      const std::string utt = utt_buf;
      const std::uint64_t clean_seed =
          derive_seed(cfg.master_seed, train ? kTrainClean : kTestClean, static_cast<std::uint64_t>(u));
      // Mixing uses exactly the samples stored on disk.
      const auto clean = pcm_round_trip(gen_clean(clean_seed, cfg.duration_s, cfg.fs));
      const std::string clean_rel = split + "/clean/" + utt + ".wav";
      audio::write_wav(cfg.out_dir / clean_rel, clean, cfg.fs);

      const std::string lips_rel = split + "/lips/" + utt;
      const auto frames = gen_lip_frames(clean, cfg.fps_v, cfg.fs, derive_seed(clean_seed, kLipStream));
      for (std::size_t f = 0; f < frames.size(); ++f) {
        image::write_ppm(cfg.out_dir / lips_rel / lip_frame_name(f), frames[f]);
      }

      for (NoiseKind kind : kinds) {
        for (double snr : snrs) {
          const std::uint64_t noise_seed = derive_seed(cfg.master_seed, train ? kTrainNoise : kTestNoise, item++);
          const auto noise = gen_noise(kind, noise_seed, cfg.duration_s, cfg.fs);
          const auto mix = mix_at_snr(clean, noise, snr, cfg.fs);
          ManifestRecord r;
          r.id = split + "_" + utt + "_" + to_string(kind) + "_" + snr_tag(snr);
          r.split = split;
          r.utt = utt;
          r.clean = clean_rel;
          r.noisy = split + "/noisy/" + r.id + ".wav";
          r.lips = lips_rel;
          r.snr_db = snr;
          r.noise = to_string(kind);
          r.clean_seed = clean_seed;
          r.noise_seed = noise_seed;
          r.gain = mix.gain;
          audio::write_wav(cfg.out_dir / r.noisy, mix.noisy, cfg.fs);
          m.records.push_back(std::move(r));
        }
      }
    }
  }
  write_manifest(cfg.out_dir / kManifestName, m.records);
  return m;
}

}  // namespace lavse::synth
