#include "lavse/visual_ae.hpp"

#include <algorithm>
#include <sstream>

#include "lavse/rng.hpp"

namespace lavse::visual {

using nn::LayerSpec;
using nn::Tensor;

std::vector<LayerSpec> encoder_specs() {
  return {LayerSpec::conv2d(3, 8, 4, 2, 1),   LayerSpec::relu(),
          LayerSpec::conv2d(8, 16, 4, 2, 1),  LayerSpec::relu(),
          LayerSpec::conv2d(16, 32, 4, 2, 1), LayerSpec::relu()};
}

std::vector<LayerSpec> decoder_specs() {
  return {LayerSpec::conv_transpose2d(32, 16, 4, 2, 1), LayerSpec::relu(),
          LayerSpec::conv_transpose2d(16, 8, 4, 2, 1),  LayerSpec::relu(),
          LayerSpec::conv_transpose2d(8, 3, 4, 2, 1),   LayerSpec::sigmoid()};
}

void check_image(const Tensor& img) {
  if (img.shape() != std::vector<std::size_t>{kImageChannels, kImageSize, kImageSize}) {
    throw ShapeError("lip image must be [3,64,64], got " + nn::shape_string(img.shape()));
  }
}

Tensor flatten_latent(const Tensor& z) {
  if (z.shape() != std::vector<std::size_t>{kLatentChannels, kLatentSize, kLatentSize}) {
    throw ShapeError("latent must be [32,8,8], got " + nn::shape_string(z.shape()));
  }
  return z.reshaped({kLatentDim});
}

Tensor unflatten_latent(const Tensor& flat) {
  if (flat.shape() != std::vector<std::size_t>{kLatentDim}) {
    throw ShapeError("flat latent must be [2048], got " + nn::shape_string(flat.shape()));
  }
  return flat.reshaped({kLatentChannels, kLatentSize, kLatentSize});
}

AeModel AeModel::create(std::uint64_t seed) {
  nn::ModelBundle b;
  b.meta["model"] = "ae";
  b.networks.emplace_back("encoder", nn::Network(encoder_specs()));
  b.networks.emplace_back("decoder", nn::Network(decoder_specs()));
  b.net("encoder").seed_init(derive_seed(seed, 1, 0));
  b.net("decoder").seed_init(derive_seed(seed, 2, 0));
  return AeModel(std::move(b));
}

AeModel::AeModel(nn::ModelBundle bundle) : bundle_(std::move(bundle)) {
  auto specs_of = [&](const char* name) {
    std::vector<LayerSpec> out;
    for (const auto& l : bundle_.net(name).layers()) out.push_back(l.spec());
    return out;
  };
  try {
    if (specs_of("encoder") != encoder_specs() || specs_of("decoder") != decoder_specs()) {
      throw FormatError("layer stack differs from the autoencoder layout");
    }
  } catch (const Error& e) {
    throw FormatError(std::string("not an autoencoder checkpoint: ") + e.what());
  }
}

Tensor AeModel::encode(const Tensor& img) const {
  check_image(img);
  return encoder().forward(img);
}

Tensor AeModel::decode(const Tensor& z) const {
  const Tensor latent = z.rank() == 1 ? unflatten_latent(z) : z;
  if (latent.shape() != std::vector<std::size_t>{kLatentChannels, kLatentSize, kLatentSize}) {
    throw ShapeError("latent must be [32,8,8], got " + nn::shape_string(z.shape()));
  }
  return decoder().forward(latent);
}

void AeModel::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, bundle_); }

AeModel AeModel::load(const std::filesystem::path& path) { return AeModel(nn::load_checkpoint(path)); }

double reconstruction_mse(const AeModel& m, const std::vector<Tensor>& images) {
  if (images.empty()) throw Error("reconstruction_mse: no images");
  double sum = 0.0;
  for (const auto& img : images) sum += nn::mse(m.decode(m.encode(img)), img);
  return sum / static_cast<double>(images.size());
}

AeTrainResult train_ae(const std::vector<Tensor>& images, const AeTrainConfig& cfg) {
  if (images.empty()) throw Error("train_ae: dataset is empty");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
    throw Error("train_ae: validation fraction must lie in (0, 1)");
  }
  for (const auto& img : images) check_image(img);

  std::size_t n_val = static_cast<std::size_t>(static_cast<double>(images.size()) * cfg.val_fraction);
  std::vector<Tensor> train_set, val_set;
  if (images.size() < 10 || n_val == 0) {
    train_set = images;
    val_set = images;
  } else {
    train_set.assign(images.begin(), images.end() - static_cast<std::ptrdiff_t>(n_val));
    val_set.assign(images.end() - static_cast<std::ptrdiff_t>(n_val), images.end());
  }

  auto step = [&](const nn::ModelBundle& b, std::size_t idx, std::vector<Tensor>& grads) {
    const Tensor& x = train_set[idx];
    const nn::Network& enc = b.net("encoder");
    const nn::Network& dec = b.net("decoder");
    std::vector<nn::LayerCache> enc_cache, dec_cache;
    const Tensor z = enc.forward(x, &enc_cache);
    const Tensor y = dec.forward(z, &dec_cache);
    // grads follow bundle order: encoder parameters, then decoder parameters.
    const std::size_t n_enc = enc.zero_grads().size();
    std::vector<Tensor> g_enc(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(n_enc));
    std::vector<Tensor> g_dec(grads.begin() + static_cast<std::ptrdiff_t>(n_enc), grads.end());
    const Tensor dz = dec.backward(dec_cache, nn::mse_grad(y, x), g_dec);
    enc.backward(enc_cache, dz, g_enc);
    std::move(g_enc.begin(), g_enc.end(), grads.begin());
    std::move(g_dec.begin(), g_dec.end(), grads.begin() + static_cast<std::ptrdiff_t>(n_enc));
    return train::StepResult{nn::mse(y, x), {}};
  };
  auto validate = [&](const nn::ModelBundle& b) { return reconstruction_mse(AeModel(b), val_set); };

  std::ostringstream fp;
  fp << "ae images=" << images.size() << " epochs=" << cfg.epochs << " lr=" << cfg.lr
     << " seed=" << cfg.seed << " val=" << cfg.val_fraction << " patience=" << cfg.patience;

  train::LoopConfig loop;
  loop.epochs = cfg.epochs;
  loop.lr = cfg.lr;
  loop.seed = cfg.seed;
  loop.patience = cfg.patience;
  loop.state_path = cfg.state_path;
  loop.log_path = cfg.log_path;
  loop.fingerprint = fp.str();
  loop.stop_after_epoch = cfg.stop_after_epoch;
  loop.on_epoch = cfg.on_epoch;

  auto out = train::run(AeModel::create(cfg.seed).bundle(), train_set.size(), step, validate, loop);
  return AeTrainResult{AeModel(std::move(out.best)), std::move(out.history), out.best_epoch};
}

Tensor latent_mosaic(const Tensor& z) {
  const Tensor latent = z.rank() == 1 ? unflatten_latent(z) : z;
  flatten_latent(latent);  // shape check
  constexpr std::size_t cols = 8, rows = kLatentChannels / cols, s = kLatentSize;
  Tensor out({rows * s, cols * s});
  for (std::size_t c = 0; c < kLatentChannels; ++c) {
    const double* tile = latent.ptr() + c * s * s;
    const auto [lo, hi] = std::minmax_element(tile, tile + s * s);
    const double span = *hi - *lo;
    const std::size_t r0 = (c / cols) * s, c0 = (c % cols) * s;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        out.at(r0 + i, c0 + j) = span > 0.0 ? (tile[i * s + j] - *lo) / span : 0.0;
      }
    }
  }
  return out;
}

}  // namespace lavse::visual
