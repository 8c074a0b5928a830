#pragma once

// Speech-enhancement model: a per-frame audio net, a fusion LSTM+FC stack over
// [audio features | visual latents], and split audio/visual output heads.
//
//   audio_net  fc 257->512, relu, fc 512->257, relu
//   fusion     lstm(257 + 2048 -> 256), fc 256->512, relu, fc 512->2305
//              audio head = columns [0, 257), visual head = [257, 2305)
//
// The audio-only baseline drops the visual input and head and widens the
// middle fusion layer until its parameter count matches the audio-visual model.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lavse/audio.hpp"
#include "lavse/nn.hpp"
#include "lavse/train.hpp"

namespace lavse::se {

enum class Mode { avse, audio_only };

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

inline constexpr std::size_t kBins = 257;
inline constexpr std::size_t kVisualDim = 2048;
inline constexpr int kAudioHidden = 512;
inline constexpr int kLstmHidden = 256;
inline constexpr int kFusionHidden = 512;

// Middle fusion width that brings the audio-only model to the audio-visual
// parameter count.
int audio_only_fusion_width();

std::size_t param_count(Mode m);

struct SeOutput {
  nn::Tensor audio;   // [T, 257]
  nn::Tensor visual;  // [T, 2048]; empty in audio-only mode
};

class SeModel {
 public:
  // Throws Error when the parameter budgets of the two modes differ by more
  // than 10%.
  static SeModel create(Mode mode, std::uint64_t seed);
  // Validates layer layout against the mode stored in the bundle metadata.
  explicit SeModel(nn::ModelBundle bundle);

  Mode mode() const { return mode_; }
  const nn::ModelBundle& bundle() const { return bundle_; }
  std::size_t param_count() const { return bundle_.param_count(); }

  // noisy: [T, 257] log1p magnitudes; visual: [T, 2048], ignored (may be
  // empty) in audio-only mode.
  SeOutput forward(const nn::Tensor& noisy, const nn::Tensor& visual) const;

  void save(const std::filesystem::path& path) const;
  static SeModel load(const std::filesystem::path& path);

 private:
  Mode mode_;
  nn::ModelBundle bundle_;
};

struct LossWeights {
  double mu = 1e-3;
};

struct LossParts {
  double total = 0.0;
  double audio = 0.0;
  double visual = 0.0;
};

// mse(audio_hat, clean) + mu * mse(visual_hat, visual_target). An empty
// visual_hat contributes nothing.
LossParts combined_loss(const nn::Tensor& audio_hat, const nn::Tensor& clean, const nn::Tensor& visual_hat,
                        const nn::Tensor& visual_target, LossWeights w);

// Adds parameter gradients of combined_loss for one utterance into grads
// (laid out like bundle().param_refs()) and returns the loss.
LossParts accumulate_gradients(const nn::ModelBundle& bundle, Mode mode, const nn::Tensor& noisy,
                               const nn::Tensor& clean, const nn::Tensor& visual, LossWeights w,
                               std::vector<nn::Tensor>& grads);

struct AlignConfig {
  int fs = 16000;
  int hop = 256;
  int fps_v = 25;
};

// Video frame used by audio frame t: round(t * hop / fs * fps_v), clamped.
std::size_t video_frame_for(std::size_t t, std::size_t n_video, const AlignConfig& cfg);
// latents: one [2048] (or [32,8,8]) tensor per video frame -> [T, 2048].
nn::Tensor align_visual(const std::vector<nn::Tensor>& latents, std::size_t frames, const AlignConfig& cfg);

}  // namespace lavse::se
