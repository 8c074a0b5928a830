#pragma once

// Procedural audio-visual corpus: harmonic speech-like utterances, six noise
// families, SNR-exact mixing and rendered mouth images whose opening follows
// the speech envelope.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lavse/tensor.hpp"

namespace lavse::synth {

enum class NoiseKind { white, pink, babble, engine, street, music };

const char* to_string(NoiseKind k);
// Throws Error on an unknown name.
NoiseKind parse_noise_kind(const std::string& name);
const std::vector<NoiseKind>& all_noise_kinds();

struct VoicedSegment {
  std::size_t begin = 0;  // sample index, inclusive
  std::size_t end = 0;    // exclusive
  double f0 = 0.0;
  int harmonics = 0;
};

struct CleanUtterance {
  std::vector<double> samples;
  std::vector<VoicedSegment> segments;
  double silence_fraction = 0.0;  // planned share of samples outside segments
};

struct CleanOptions {
  int min_segments = 2;
  int max_segments = 4;
};

// Throws Error when duration_s < 0.5.
CleanUtterance gen_clean_utterance(std::uint64_t seed, double duration_s, int fs,
                                   const CleanOptions& opt = {});
std::vector<double> gen_clean(std::uint64_t seed, double duration_s, int fs);

// Unit-RMS noise.
std::vector<double> gen_noise(NoiseKind kind, std::uint64_t seed, double duration_s, int fs);
// Seed of the i-th of the six talkers summed into babble noise.
std::uint64_t babble_talker_seed(std::uint64_t seed, int i);

struct MixResult {
  std::vector<double> noisy;  // gain * (clean + alpha * noise)
  double alpha = 0.0;
  double gain = 1.0;  // < 1 only when the mix would clip
};

// SNR measured over active clean frames. snr_db = +inf gives alpha = 0. Noise
// shorter than clean is tiled. Throws Error on zero clean or noise power.
MixResult mix_at_snr(const std::vector<double>& clean, const std::vector<double>& noise,
                     double snr_db, int fs);

// Short-time RMS of `clean` at each video frame time k / fps_v (40 ms window
// centred on it), divided by the largest value; all zeros for silence.
std::vector<double> lip_envelope(const std::vector<double>& clean, int fps_v, int fs);
// ceil(duration * fps_v)
std::size_t lip_frame_count(std::size_t samples, int fps_v, int fs);

inline constexpr double kMouthCenterX = 32.0;
inline constexpr double kMouthCenterY = 40.0;
inline constexpr double kMouthRadiusX = 18.0;
inline constexpr double kLipThickness = 4.0;
inline double mouth_radius_y(double env) { return 2.0 + 14.0 * env; }

// One [3,64,64] frame per 1/fps_v seconds.
std::vector<nn::Tensor> gen_lip_frames(const std::vector<double>& clean, int fps_v, int fs,
                                       std::uint64_t seed);

struct CorpusConfig {
  std::filesystem::path out_dir;
  int n_train_utt = 40;
  int n_test_utt = 12;
  double duration_s = 3.0;
  int fs = 16000;
  int fps_v = 25;
  std::vector<double> train_snrs_db{-12, -6, 0, 6, 12};
  std::vector<double> test_snrs_db{-1, -4, -7, -10};
  std::vector<NoiseKind> train_noise_kinds{NoiseKind::white, NoiseKind::pink};
  std::vector<NoiseKind> test_noise_kinds{NoiseKind::babble, NoiseKind::engine,
                                          NoiseKind::street, NoiseKind::music};
  std::uint64_t master_seed = 0;

  // Throws Error when train and test share a noise kind or an SNR.
  void validate() const;
};

struct ManifestRecord {
  std::string id;
  std::string split;  // "train" or "test"
  std::string utt;
  std::string clean;  // paths relative to the corpus root
  std::string noisy;
  std::string lips;
  double snr_db = 0.0;
  std::string noise;
  std::uint64_t clean_seed = 0;
  std::uint64_t noise_seed = 0;
  double gain = 1.0;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(const std::string& name) const;
  std::filesystem::path path(const std::string& rel) const { return root / rel; }
};

inline constexpr const char* kManifestName = "manifest.csv";

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestRecord>& records);
// root = the manifest's directory. Throws FormatError on malformed rows.
Manifest read_manifest(const std::filesystem::path& file);
// Throws Error naming the first problem: duplicate id, missing file, unknown
// split, or a (noise, snr) pair shared by train and test.
void check_manifest(const Manifest& m);

std::vector<nn::Tensor> read_lip_frames(const std::filesystem::path& dir);
std::string lip_frame_name(std::size_t index);  // "0000.ppm"

Manifest build_corpus(const CorpusConfig& cfg);

}  // namespace lavse::synth
