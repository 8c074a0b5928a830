// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Usage: lavse_acceptance [--work DIR] [--keep] [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "lavse/audio.hpp"
#include "lavse/binary_io.hpp"
#include "lavse/eofp.hpp"
#include "lavse/image.hpp"
#include "lavse/metrics.hpp"
#include "lavse/pipeline.hpp"
#include "lavse/rng.hpp"
#include "lavse/wav.hpp"
#include "support/eofp_fixture.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace lavse;

namespace {

// Pinned tolerances and sizes.
constexpr std::size_t kCodecValuesPerWindow = 100000;
constexpr int kCodecWindows = 16;
constexpr double kCodecSeconds = 5.0;
constexpr int kGradInstances = 20;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr int kStftWaves = 50;
constexpr double kStftRelTol = 1e-5;
constexpr double kColaTol = 1e-10;
constexpr double kStoiSelfTol = 1e-6;
constexpr double kSiSdrTol = 0.01;
constexpr double kScaleTol = 1e-9;
constexpr double kSnrTol = 0.01;
constexpr double kAeMseLimit = 0.01;
constexpr double kOverfitLimit = 1e-3;
constexpr int kAeEpochs = 15;  // criterion allows 30
constexpr int kOverfitEpochs = 1500;
constexpr double kAeSeconds = 15 * 60.0;
constexpr double kStoiMargin = 0.005;
constexpr double kQuantSlack = 0.01;
constexpr double kE2eSeconds = 45 * 60.0;

constexpr std::uint64_t kCorpusSeed = 7;
constexpr std::uint64_t kAeSeed = 11;
constexpr std::uint64_t kSeSeed = 13;
constexpr int kSeEpochs = LAVSE_ACCEPT_SE_EPOCHS;

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Shared artifacts, built on first use.
class Context {
 public:
  explicit Context(fs::path work) : work_(std::move(work)) {}

  const fs::path& work() const { return work_; }

  const synth::Manifest& corpus() {
    if (!corpus_) {
      synth::CorpusConfig c;
      c.out_dir = work_ / "corpus";
      c.master_seed = kCorpusSeed;
      c.n_train_utt = 40;
      c.n_test_utt = 12;
      std::fprintf(stderr, "building 40/12 corpus in %s\n", c.out_dir.c_str());
      corpus_ = synth::build_corpus(c);
    }
    return *corpus_;
  }

  std::vector<nn::Tensor> frames(const std::string& split) {
    std::vector<nn::Tensor> out;
    std::set<std::string> seen;
    for (const auto& r : corpus().split(split)) {
      if (!seen.insert(r.lips).second) continue;
      for (auto& f : synth::read_lip_frames(corpus().path(r.lips))) out.push_back(std::move(f));
    }
    return out;
  }

  // Trains the autoencoder into dir (ae.lvck, ae.csv).
  visual::AeModel train_ae(const fs::path& dir) {
    fs::create_directories(dir);
    visual::AeTrainConfig cfg;
    cfg.epochs = kAeEpochs;
    cfg.seed = kAeSeed;
    cfg.log_path = dir / "ae.csv";
    cfg.on_epoch = [](const train::EpochRecord& e) {
      std::fprintf(stderr, "  ae epoch %d train %.6f val %.6f\n", e.epoch, e.train_loss, e.val_loss);
    };
    auto r = visual::train_ae(frames("train"), cfg);
    r.model.save(dir / "ae.lvck");
    return std::move(r.model);
  }

  const visual::AeModel& ae() {
    if (!ae_) {
      const double t0 = cpu_seconds();
      ae_ = train_ae(work_ / "run1");
      ae_seconds_ = cpu_seconds() - t0;
    }
    return *ae_;
  }
  double ae_seconds() const { return ae_seconds_; }

  struct E2e {
    pipeline::EvalReport avse, audio_only;
    double seconds = 0.0;
  };

  // Trains both SE modes with identical settings and evaluates them. Files
  // land in dir: {avse,audio_only}.lvck/.csv and eval_{mode}_*.csv.
  E2e run_e2e(const visual::AeModel& ae, const fs::path& dir) {
    const double t0 = cpu_seconds();
    E2e out;
    for (se::Mode mode : {se::Mode::avse, se::Mode::audio_only}) {
      const std::string name = se::to_string(mode);
      pipeline::SeTrainConfig cfg;
      cfg.epochs = kSeEpochs;
      cfg.seed = kSeSeed;
      cfg.log_path = dir / (name + ".csv");
      cfg.on_epoch = [&](const train::EpochRecord& e) {
        std::fprintf(stderr, "  %s epoch %d train %.6f val %.6f\n", name.c_str(), e.epoch, e.train_loss,
                     e.val_loss);
      };
      const auto r = pipeline::train_se(corpus(), mode == se::Mode::avse ? &ae : nullptr, mode, cfg);
      r.model.save(dir / (name + ".lvck"));
      auto rep = pipeline::evaluate(corpus(), r.model, &ae);
      pipeline::write_report(rep, dir / ("eval_" + name + "_rows.csv"), dir / ("eval_" + name + "_snr.csv"),
                             dir / ("eval_" + name + "_overall.csv"));
      (mode == se::Mode::avse ? out.avse : out.audio_only) = std::move(rep);
    }
    out.seconds = cpu_seconds() - t0;
    return out;
  }

  const E2e& e2e() {
    if (!e2e_) e2e_ = run_e2e(ae(), work_ / "run1");
    return *e2e_;
  }

 private:
  fs::path work_;
  std::optional<synth::Manifest> corpus_;
  std::optional<visual::AeModel> ae_;
  double ae_seconds_ = 0.0;
  std::optional<E2e> e2e_;
};

Outcome codec_exactness(Context&) {
  const double t0 = cpu_seconds();
  Rng rng(1);
  std::size_t checked = 0, bad = 0, zeros_ok = 0;
  for (int w = 0; w < kCodecWindows; ++w) {
    // Bases spread over most of the float32 range.
    const int top = -100 + 13 * w;
    std::vector<float> v(kCodecValuesPerWindow);
    for (auto& x : v) {
      // Random finite float: random mantissa bits, exponent within 20 octaves
      // below the top of the window, random sign, occasional exact zero.
      const int e = top - static_cast<int>(rng.uniform_int(0, 20));
      const float m = static_cast<float>(1.0 + rng.uniform());
      x = std::ldexp(std::min(m, std::nextafter(2.0f, 0.0f)), e);
      if (rng.uniform() < 0.5) x = -x;
      if (rng.uniform() < 0.01) x = 0.0f;
    }
    v[0] = std::ldexp(1.5f, top);  // pin the window top
    const auto arr = eofp::encode_array(v, {static_cast<std::uint32_t>(v.size())});
    const auto d = eofp::decode_array(arr);
    const int base = arr.window.base;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float x = v[i], xh = d[i];
      ++checked;
      if (x == 0.0f) {
        zeros_ok += xh == 0.0f;
        bad += xh != 0.0f;
        continue;
      }
      // Below the window for this sign: positive values need 2^(base+1),
      // negative 2^base (code 0 is reserved for zero).
      const float floor_mag = std::ldexp(1.0f, x < 0.0f ? base : base + 1);
      const bool ok = std::fabs(x) < floor_mag
                          ? xh == 0.0f
                          : (std::signbit(x) == std::signbit(xh) && xh != 0.0f && std::fabs(x) / std::fabs(xh) >= 1.0f &&
                             std::fabs(x) / std::fabs(xh) < 2.0f);
      bad += !ok;
    }
  }
  const double secs = cpu_seconds() - t0;
  return {bad == 0 && zeros_ok > 0 && secs < kCodecSeconds,
          fmt("%zu values over %d windows, %zu violations, %zu zeros exact, %.2f s", checked, kCodecWindows, bad,
              zeros_ok, secs)};
}

std::string run_capture(const std::string& cmd, int& status) {
  std::string out;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) {
    status = -1;
    return out;
  }
  char buf[256];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  status = ::pclose(p);
  return out;
}

Outcome compression_ratios(Context& ctx) {
  const fs::path dir = ctx.work() / "c2";
  fs::create_directories(dir / "frames");
  const auto clean = synth::gen_clean(5, 1.0, 16000);
  const auto frames = synth::gen_lip_frames(clean, 25, 16000, 6);
  for (std::size_t i = 0; i < frames.size(); ++i) image::write_ppm(dir / "frames" / synth::lip_frame_name(i), frames[i]);
  visual::AeModel::create(3).save(dir / "ae.lvck");
  int status = 0;
  const std::string out = run_capture(std::string(LAVSE_CLI_PATH) + " compress --ae " + (dir / "ae.lvck").string() +
                                          " --frames " + (dir / "frames").string() + " --out " +
                                          (dir / "latents").string() + " 2>/dev/null",
                                      status);
  std::map<std::string, std::string> kv;
  std::istringstream in(out);
  std::string k, v;
  while (in >> k >> v) kv[k] = v;
  bool files_ok = true;
  const std::size_t expect_file = eofp::header_size(3) + 1024;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto name = synth::lip_frame_name(i);
    name.replace(name.size() - 4, 4, ".eofp");
    const fs::path f = dir / "latents" / name;
    files_ok = files_ok && fs::exists(f) && fs::file_size(f) == expect_file;
  }
  const bool pass = status == 0 && kv["r_ae"] == "6" && kv["r_qua"] == "8" && kv["r_comp"] == "48" &&
                    kv["payload_bytes_per_frame"] == "1024" &&
                    kv["payload_bytes_total"] == std::to_string(1024 * frames.size()) && files_ok;
  return {pass, fmt("exit %d, r_ae %s r_qua %s r_comp %s, payload %s bytes/frame, %zu files of %zu bytes", status,
                    kv["r_ae"].c_str(), kv["r_qua"].c_str(), kv["r_comp"].c_str(),
                    kv["payload_bytes_per_frame"].c_str(), frames.size(), expect_file)};
}

Outcome container_stability(Context&) {
  const auto golden = read_file_bytes(fs::path(LAVSE_TEST_DATA) / "fixture_3x5x3.eofp");
  const auto values = testing::eofp_fixture_values();
  const auto encoded = eofp::serialize(eofp::encode_array(values, {3, 5, 3}));
  const auto arr = eofp::deserialize(golden);
  const auto decoded = eofp::decode_array(arr);
  bool bits = decoded.size() == values.size();
  for (std::size_t i = 0; bits && i < values.size(); ++i) {
    const float want = testing::eofp_oracle_roundtrip(values[i], arr.window.base);
    bits = std::memcmp(&decoded[i], &want, sizeof(float)) == 0;
  }
  return {encoded == golden && bits,
          fmt("golden %zu bytes, re-encode %s, decode %s", golden.size(), encoded == golden ? "identical" : "differs",
              bits ? "bit-identical to oracle" : "differs")};
}

Outcome gradient_suite(Context&) {
  const double t0 = cpu_seconds();
  Rng rng(4);
  double worst = 0.0;
  std::string worst_what;
  std::size_t kinds = 0, failures = 0;
  for (nn::LayerKind kind : testing::all_layer_kinds()) {
    ++kinds;
    for (int i = 0; i < kGradInstances; ++i) {
      auto [layer, x] = testing::random_instance(kind, rng);
      const auto r = testing::check_layer_gradients(layer, x, rng);
      failures += !(r.worst_rel_error < kGradTol);
      if (r.worst_rel_error > worst) {
        worst = r.worst_rel_error;
        worst_what = layer.spec().describe() + " " + r.worst_what;
      }
    }
  }
  const double secs = cpu_seconds() - t0;
  return {failures == 0 && secs < kGradSeconds,
          fmt("%zu kinds x %d instances, worst relative error %.2e (%s), %.1f s", kinds, kGradInstances, worst,
              worst_what.c_str(), secs)};
}

Outcome stft_round_trip(Context&) {
  const audio::StftConfig cfg;
  const double cola = audio::cola_deviation(cfg);
  Rng rng(5);
  double worst = 0.0;
  for (int w = 0; w < kStftWaves; ++w) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2000, 48000));
    std::vector<double> x(n);
    const double amp = std::exp2(rng.uniform(-8.0, 4.0));
    for (double& v : x) v = amp * rng.uniform(-1.0, 1.0);
    const auto s = audio::stft(x, cfg);
    const auto y = audio::istft_with_phase(audio::magnitude(s), s);
    double peak = 0.0, err = 0.0;
    for (double v : x) peak = std::max(peak, std::fabs(v));
    const auto edge = static_cast<std::size_t>(cfg.fft_size);
    for (std::size_t i = edge; i + edge < n; ++i) err = std::max(err, std::fabs(y[i] - x[i]));
    worst = std::max(worst, err / peak);
  }
  return {worst < kStftRelTol && cola < kColaTol,
          fmt("%d waves, worst interior error %.2e of peak, COLA deviation %.2e", kStftWaves, worst, cola)};
}

Outcome stoi_oracle(Context&) {
  const std::vector<double> snrs{12, 6, 0, -6, -12};
  double worst_self = 0.0;
  int violations = 0;
  std::string example;
  for (int u = 0; u < 10; ++u) {
    const auto clean = synth::gen_clean(derive_seed(600, 1, static_cast<std::uint64_t>(u)), 3.0, 16000);
    worst_self = std::max(worst_self, std::fabs(metrics::stoi(clean, clean, 16000) - 1.0));
    const auto noise = synth::gen_noise(synth::NoiseKind::white, derive_seed(600, 2, static_cast<std::uint64_t>(u)),
                                        3.0, 16000);
    double prev = 2.0;
    std::string row;
    for (double snr : snrs) {
      const auto mix = synth::mix_at_snr(clean, noise, snr, 16000);
      std::vector<double> ref = clean;
      for (double& v : ref) v *= mix.gain;
      const double s = metrics::stoi(ref, mix.noisy, 16000);
      violations += !(s < prev);
      prev = s;
      row += fmt(" %.3f", s);
    }
    if (u == 0) example = row;
  }
  return {worst_self <= kStoiSelfTol && violations == 0,
          fmt("|stoi(x,x)-1| <= %.1e, %d order violations over 10 utterances (u0:%s)", worst_self, violations,
              example.c_str())};
}

Outcome sisdr_oracle(Context&) {
  Rng rng(7);
  double worst20 = 0.0, worst_scale = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto s = synth::gen_clean(derive_seed(700, 1, static_cast<std::uint64_t>(t)), 2.0, 16000);
    std::vector<double> e(s.size());
    for (double& v : e) v = rng.normal();
    double se = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      se += s[i] * e[i];
      ss += s[i] * s[i];
    }
    for (std::size_t i = 0; i < s.size(); ++i) e[i] -= se / ss * s[i];
    double ee = 0.0;
    for (double v : e) ee += v * v;
    const double k = std::sqrt(0.01 * ss / ee);
    std::vector<double> est(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) est[i] = s[i] + k * e[i];
    const double d = metrics::si_sdr(s, est);
    worst20 = std::max(worst20, std::fabs(d - 20.0));
    for (double c : {1e-3, 0.37, 5.0, 1e3}) {
      std::vector<double> scaled = est;
      for (double& v : scaled) v *= c;
      worst_scale = std::max(worst_scale, std::fabs(metrics::si_sdr(s, scaled) - d));
    }
  }
  return {worst20 <= kSiSdrTol && worst_scale <= kScaleTol,
          fmt("|si_sdr - 20| <= %.2e dB, scale drift <= %.2e dB over 10 signals", worst20, worst_scale)};
}

Outcome snr_closure(Context& ctx) {
  const auto& m = ctx.corpus();
  double worst = 0.0;
  for (const auto& r : m.records) {
    auto clean = audio::read_wav(m.path(r.clean)).samples;
    for (double& v : clean) v *= r.gain;
    const auto noisy = audio::read_wav(m.path(r.noisy)).samples;
    worst = std::max(worst, std::fabs(metrics::measure_snr(clean, noisy, 16000) - r.snr_db));
  }
  return {worst <= kSnrTol, fmt("%zu noisy files, worst |measured - manifest| %.2e dB", m.records.size(), worst)};
}

Outcome ae_training(Context& ctx) {
  const auto& ae = ctx.ae();
  const double mse = visual::reconstruction_mse(ae, ctx.frames("test"));
  const double t0 = cpu_seconds();
  const auto one = ctx.frames("train").front();
  visual::AeTrainConfig cfg;
  cfg.epochs = kOverfitEpochs;
  cfg.patience = kOverfitEpochs;
  cfg.seed = kAeSeed;
  const auto fit = visual::train_ae({one}, cfg);
  const double overfit = visual::reconstruction_mse(fit.model, {one});
  const double secs = ctx.ae_seconds() + (cpu_seconds() - t0);
  return {mse < kAeMseLimit && overfit < kOverfitLimit && secs < kAeSeconds,
          fmt("held-out mse %.3g after %d epochs, single-image mse %.3g, %.0f s", mse, kAeEpochs, overfit, secs)};
}

Outcome end_to_end(Context& ctx) {
  ctx.ae();
  const auto& r = ctx.e2e();
  const auto& a = r.avse.overall;
  const auto& b = r.audio_only.overall;
  const bool pass = a.stoi_enh >= b.stoi_enh + kStoiMargin && a.sisdr_enh >= b.sisdr_enh &&
                    a.stoi_enh > a.stoi_noisy && b.stoi_enh > b.stoi_noisy && r.seconds < kE2eSeconds;
  return {pass, fmt("STOI noisy %.4f avse %.4f audio-only %.4f; SI-SDR noisy %.2f avse %.2f audio-only %.2f dB; "
                    "%d epochs, %.0f s",
                    a.stoi_noisy, a.stoi_enh, b.stoi_enh, a.sisdr_noisy, a.sisdr_enh, b.sisdr_enh, kSeEpochs,
                    r.seconds)};
}

Outcome quantization_robustness(Context& ctx) {
  const auto& ae = ctx.ae();
  const double quant = ctx.e2e().avse.overall.stoi_enh;
  const fs::path dir = ctx.work() / "unquantized";
  fs::create_directories(dir);
  pipeline::SeTrainConfig cfg;
  cfg.epochs = kSeEpochs;
  cfg.seed = kSeSeed;
  cfg.quantize_visual = false;
  cfg.log_path = dir / "avse.csv";
  cfg.on_epoch = [](const train::EpochRecord& e) {
    std::fprintf(stderr, "  unquantized epoch %d train %.6f val %.6f\n", e.epoch, e.train_loss, e.val_loss);
  };
  const auto r = pipeline::train_se(ctx.corpus(), &ae, se::Mode::avse, cfg);
  r.model.save(dir / "avse.lvck");
  pipeline::EvalOptions opt;
  opt.quantize = false;
  const double raw = pipeline::evaluate(ctx.corpus(), r.model, &ae, opt).overall.stoi_enh;
  return {quant >= raw - kQuantSlack, fmt("STOI quantized %.4f, unquantized %.4f", quant, raw)};
}

Outcome determinism(Context& ctx) {
  ctx.e2e();
  const fs::path a = ctx.work() / "run1", b = ctx.work() / "run2";
  std::fprintf(stderr, "repeating the end-to-end run in %s\n", b.c_str());
  const auto ae2 = ctx.train_ae(b);
  ctx.run_e2e(ae2, b);
  std::size_t files = 0, same = 0;
  std::string first_diff;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto ext = e.path().extension();
    if (ext != ".lvck" && ext != ".csv") continue;
    ++files;
    const fs::path other = b / e.path().filename();
    if (fs::exists(other) && read_file_bytes(e.path()) == read_file_bytes(other)) {
      ++same;
    } else if (first_diff.empty()) {
      first_diff = e.path().filename().string();
    }
  }
  return {files >= 12 && same == files,
          fmt("%zu/%zu checkpoints and CSVs byte-identical%s%s", same, files, first_diff.empty() ? "" : ", first diff ",
              first_diff.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)(Context&);
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "codec exactness", codec_exactness},
      {2, "compression ratios", compression_ratios},
      {3, "container stability", container_stability},
      {4, "gradient suite", gradient_suite},
      {5, "STFT round trip", stft_round_trip},
      {6, "STOI oracle", stoi_oracle},
      {7, "SI-SDR oracle", sisdr_oracle},
      {8, "SNR closure", snr_closure},
      {9, "AE training", ae_training},
      {10, "end-to-end ordering", end_to_end},
      {11, "quantization robustness", quantization_robustness},
      {12, "determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work;
  bool keep = false;
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
      keep = true;
    } else if (a == "--keep") {
      keep = true;
    } else if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit)) {
      wanted.insert(std::stoi(a));
    } else {
      std::fprintf(stderr, "usage: %s [--work DIR] [--keep] [criterion ...]\n", argv[0]);
      return 2;
    }
  }
  if (work.empty()) work = fs::temp_directory_path() / ("lavse_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  Context ctx(work);
  int failed = 0;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::fprintf(stderr, "criterion %d: %s\n", c.id, c.name);
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                wall);
    std::fflush(stdout);
    failed += !o.pass;
  }
  if (!keep) {
    std::error_code ec;
    fs::remove_all(work, ec);
  }
  return failed == 0 ? 0 : 1;
}
