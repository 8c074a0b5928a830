#pragma once

// Convolutional autoencoder for 3x64x64 lip images with a 32x8x8 latent.
//
//   encoder: conv 3->8->16->32, kernel 4, stride 2, pad 1, ReLU after each
//   decoder: conv^T 32->16->8->3, kernel 4, stride 2, pad 1, ReLU, ReLU, sigmoid

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "lavse/nn.hpp"
#include "lavse/train.hpp"

namespace lavse::visual {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kImageElements = kImageChannels * kImageSize * kImageSize;
inline constexpr std::size_t kLatentChannels = 32;
inline constexpr std::size_t kLatentSize = 8;
inline constexpr std::size_t kLatentDim = kLatentChannels * kLatentSize * kLatentSize;
static_assert(kLatentDim == 2048);
static_assert(kImageElements / kLatentDim == 6);

std::vector<nn::LayerSpec> encoder_specs();
std::vector<nn::LayerSpec> decoder_specs();

void check_image(const nn::Tensor& img);
// [32,8,8] <-> [2048], row-major, so both are the same bytes.
nn::Tensor flatten_latent(const nn::Tensor& z);
nn::Tensor unflatten_latent(const nn::Tensor& flat);

class AeModel {
 public:
  static AeModel create(std::uint64_t seed);
  // Throws FormatError if the bundle does not hold the expected layer stacks.
  explicit AeModel(nn::ModelBundle bundle);

  nn::Tensor encode(const nn::Tensor& img) const;  // -> [32,8,8], elementwise >= 0
  nn::Tensor decode(const nn::Tensor& z) const;    // [32,8,8] or [2048] -> [3,64,64]

  const nn::Network& encoder() const { return bundle_.net("encoder"); }
  const nn::Network& decoder() const { return bundle_.net("decoder"); }
  const nn::ModelBundle& bundle() const { return bundle_; }

  void save(const std::filesystem::path& path) const;
  static AeModel load(const std::filesystem::path& path);

 private:
  nn::ModelBundle bundle_;
};

struct AeTrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int patience = 10;
  std::filesystem::path state_path;
  std::filesystem::path log_path;
  int stop_after_epoch = 0;
  std::function<void(const train::EpochRecord&)> on_epoch;
};

struct AeTrainResult {
  AeModel model;
  std::vector<train::EpochRecord> history;
  int best_epoch = 0;
};

// Per-image Adam steps on MSE(decode(encode(x)), x). The last val_fraction of
// the images validates; with fewer than ten images the training set doubles as
// the validation set.
AeTrainResult train_ae(const std::vector<nn::Tensor>& images, const AeTrainConfig& cfg);

double reconstruction_mse(const AeModel& m, const std::vector<nn::Tensor>& images);

// Channels tiled 8 across and 4 down, each 8x8 tile min-max normalized.
nn::Tensor latent_mosaic(const nn::Tensor& z);

}  // namespace lavse::visual
