#include "lavse/se_model.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "lavse/rng.hpp"

namespace lavse::se {

using nn::LayerSpec;
using nn::Tensor;

namespace {

constexpr int kBinsI = static_cast<int>(kBins);
constexpr int kVisualI = static_cast<int>(kVisualDim);

std::vector<LayerSpec> audio_specs() {
  return {LayerSpec::fc(kBinsI, kAudioHidden), LayerSpec::relu(), LayerSpec::fc(kAudioHidden, kBinsI),
          LayerSpec::relu()};
}

std::vector<LayerSpec> fusion_specs(Mode m) {
  if (m == Mode::avse) {
    return {LayerSpec::lstm(kBinsI + kVisualI, kLstmHidden), LayerSpec::fc(kLstmHidden, kFusionHidden),
            LayerSpec::relu(), LayerSpec::fc(kFusionHidden, kBinsI + kVisualI)};
  }
  const int w = audio_only_fusion_width();
  return {LayerSpec::lstm(kBinsI, kLstmHidden), LayerSpec::fc(kLstmHidden, w), LayerSpec::relu(),
          LayerSpec::fc(w, kBinsI)};
}

std::size_t count(const std::vector<LayerSpec>& specs) {
  std::size_t n = 0;
  for (const auto& s : specs) {
    for (const auto& shape : s.param_shapes()) n += nn::shape_size(shape);
  }
  return n;
}

// Columns [begin, begin + width) of a [T, C] tensor.
Tensor columns(const Tensor& x, std::size_t begin, std::size_t width) {
  const std::size_t rows = x.dim(0);
  Tensor out({rows, width});
  out.matrix(rows, width) =
      x.matrix(rows, x.dim(1)).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(width));
  return out;
}

Tensor hconcat(const Tensor& a, const Tensor& b) {
  const std::size_t rows = a.dim(0);
  Tensor out({rows, a.dim(1) + b.dim(1)});
  auto m = out.matrix(rows, a.dim(1) + b.dim(1));
  m.leftCols(static_cast<Eigen::Index>(a.dim(1))) = a.matrix(rows, a.dim(1));
  m.rightCols(static_cast<Eigen::Index>(b.dim(1))) = b.matrix(rows, b.dim(1));
  return out;
}

void check_features(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() != 2 || x.dim(1) != width || x.dim(0) == 0) {
    throw ShapeError(std::string(what) + " must be [T," + std::to_string(width) + "], got " +
                     nn::shape_string(x.shape()));
  }
}

}  // namespace

const char* to_string(Mode m) { return m == Mode::avse ? "avse" : "audio_only"; }

Mode parse_mode(const std::string& s) {
  if (s == "avse") return Mode::avse;
  if (s == "audio_only" || s == "audio-only") return Mode::audio_only;
  throw Error("unknown mode '" + s + "' (expected avse or audio_only)");
}

int audio_only_fusion_width() {
  // Audio-only total = fixed + 514 w, where fixed covers the audio net, the
  // 257-input LSTM and the output bias.
  const std::size_t target = count(audio_specs()) + count(fusion_specs(Mode::avse));
  const std::size_t fixed = count(audio_specs()) + count({LayerSpec::lstm(kBinsI, kLstmHidden)}) + kBins;
  const std::size_t per_unit = (kLstmHidden + 1) + kBins;
  return static_cast<int>(std::lround(static_cast<double>(target - fixed) / static_cast<double>(per_unit)));
}

std::size_t param_count(Mode m) { return count(audio_specs()) + count(fusion_specs(m)); }

SeModel SeModel::create(Mode mode, std::uint64_t seed) {
  const double avse = static_cast<double>(se::param_count(Mode::avse));
  const double audio = static_cast<double>(se::param_count(Mode::audio_only));
  if (std::fabs(audio - avse) / avse > 0.10) throw Error("audio-only and audio-visual parameter budgets differ by >10%");
  nn::ModelBundle b;
  b.meta["model"] = "se";
  b.meta["mode"] = to_string(mode);
  b.networks.emplace_back("audio_net", nn::Network(audio_specs()));
  b.networks.emplace_back("fusion", nn::Network(fusion_specs(mode)));
  b.net("audio_net").seed_init(derive_seed(seed, 1, 0));
  b.net("fusion").seed_init(derive_seed(seed, 2, 0));
  return SeModel(std::move(b));
}

SeModel::SeModel(nn::ModelBundle bundle) : bundle_(std::move(bundle)) {
  const auto it = bundle_.meta.find("mode");
  if (bundle_.meta.count("model") == 0 || bundle_.meta.at("model") != "se" || it == bundle_.meta.end()) {
    throw FormatError("not a speech-enhancement checkpoint");
  }
  mode_ = parse_mode(it->second);
  auto specs_of = [&](const char* name) {
    std::vector<LayerSpec> out;
    for (const auto& l : bundle_.net(name).layers()) out.push_back(l.spec());
    return out;
  };
  if (specs_of("audio_net") != audio_specs() || specs_of("fusion") != fusion_specs(mode_)) {
    throw FormatError("speech-enhancement checkpoint layout does not match mode " + it->second);
  }
}

SeOutput SeModel::forward(const Tensor& noisy, const Tensor& visual) const {
  check_features(noisy, kBins, "noisy features");
  const Tensor a = bundle_.net("audio_net").forward(noisy);
  if (mode_ == Mode::audio_only) return {bundle_.net("fusion").forward(a), Tensor{}};
  check_features(visual, kVisualDim, "visual features");
  if (visual.dim(0) != noisy.dim(0)) throw ShapeError("audio and visual frame counts differ");
  const Tensor y = bundle_.net("fusion").forward(hconcat(a, visual));
  return {columns(y, 0, kBins), columns(y, kBins, kVisualDim)};
}

void SeModel::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, bundle_); }

SeModel SeModel::load(const std::filesystem::path& path) { return SeModel(nn::load_checkpoint(path)); }

LossParts combined_loss(const Tensor& audio_hat, const Tensor& clean, const Tensor& visual_hat,
                        const Tensor& visual_target, LossWeights w) {
  if (!(w.mu >= 0.0)) throw Error("loss weight mu must be nonnegative");
  LossParts p;
  p.audio = nn::mse(audio_hat, clean);
  if (!visual_hat.empty()) p.visual = nn::mse(visual_hat, visual_target);
  p.total = p.audio + w.mu * p.visual;
  return p;
}

LossParts accumulate_gradients(const nn::ModelBundle& bundle, Mode mode, const Tensor& noisy, const Tensor& clean,
                               const Tensor& visual, LossWeights w, std::vector<Tensor>& grads) {
  const nn::Network& audio_net = bundle.net("audio_net");
  const nn::Network& fusion = bundle.net("fusion");
  const std::size_t n_audio = audio_net.param_refs().size();
  std::vector<Tensor> g_audio(std::make_move_iterator(grads.begin()),
                              std::make_move_iterator(grads.begin() + static_cast<std::ptrdiff_t>(n_audio)));
  std::vector<Tensor> g_fusion(std::make_move_iterator(grads.begin() + static_cast<std::ptrdiff_t>(n_audio)),
                               std::make_move_iterator(grads.end()));

  std::vector<nn::LayerCache> ca, cf;
  const Tensor a = audio_net.forward(noisy, &ca);
  LossParts parts;
  Tensor da;
  if (mode == Mode::audio_only) {
    const Tensor y = fusion.forward(a, &cf);
    parts = combined_loss(y, clean, Tensor{}, Tensor{}, w);
    da = fusion.backward(cf, nn::mse_grad(y, clean), g_fusion);
  } else {
    if (visual.dim(0) != noisy.dim(0)) throw ShapeError("audio and visual frame counts differ");
    const Tensor y = fusion.forward(hconcat(a, visual), &cf);
    const Tensor audio_hat = columns(y, 0, kBins);
    const Tensor visual_hat = columns(y, kBins, kVisualDim);
    parts = combined_loss(audio_hat, clean, visual_hat, visual, w);
    Tensor gv = nn::mse_grad(visual_hat, visual);
    for (auto& v : gv.storage()) v *= w.mu;
    const Tensor dx = fusion.backward(cf, hconcat(nn::mse_grad(audio_hat, clean), gv), g_fusion);
    da = columns(dx, 0, kBins);
  }
  audio_net.backward(ca, da, g_audio);

  std::move(g_audio.begin(), g_audio.end(), grads.begin());
  std::move(g_fusion.begin(), g_fusion.end(), grads.begin() + static_cast<std::ptrdiff_t>(n_audio));
  return parts;
}

std::size_t video_frame_for(std::size_t t, std::size_t n_video, const AlignConfig& cfg) {
  const double seconds = static_cast<double>(t) * cfg.hop / cfg.fs;
  const auto k = static_cast<std::int64_t>(std::llround(seconds * cfg.fps_v));
  return static_cast<std::size_t>(std::clamp<std::int64_t>(k, 0, static_cast<std::int64_t>(n_video) - 1));
}

Tensor align_visual(const std::vector<Tensor>& latents, std::size_t frames, const AlignConfig& cfg) {
  if (latents.empty()) throw Error("align_visual: no visual frames");
  Tensor out({frames, kVisualDim});
  for (std::size_t t = 0; t < frames; ++t) {
    const Tensor& z = latents[video_frame_for(t, latents.size(), cfg)];
    if (z.size() != kVisualDim) throw ShapeError("align_visual: latent must hold 2048 values");
    std::copy(z.ptr(), z.ptr() + kVisualDim, out.ptr() + t * kVisualDim);
  }
  return out;
}

}  // namespace lavse::se
