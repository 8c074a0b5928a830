#pragma once

// Small deterministic neural-network engine: layers with explicit caches and
// analytic backward passes, MSE loss, Adam, and a binary checkpoint format.
//
// Shapes:
//   fc                [N, in] -> [N, out]   (a rank-1 [in] input is one row)
//   conv2d            [C, H, W] -> [out, Ho, Wo]
//   conv_transpose2d  [C, H, W] -> [out, Ho, Wo]
//   lstm              [T, in] -> [T, hidden], zero initial state
//   relu/sigmoid/tanh elementwise, any shape

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lavse/binary_io.hpp"
#include "lavse/error.hpp"
#include "lavse/tensor.hpp"

namespace lavse::nn {

enum class LayerKind : std::uint8_t {
  fc = 0,
  conv2d = 1,
  conv_transpose2d = 2,
  lstm = 3,
  relu = 4,
  sigmoid = 5,
  tanh = 6,
};

const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in = 0;   // features, channels, or LSTM input size
  int out = 0;  // features, channels, or LSTM hidden size
  int kernel = 0;
  int stride = 1;
  int pad = 0;

  static LayerSpec fc(int in, int out) { return {LayerKind::fc, in, out}; }
  static LayerSpec conv2d(int in, int out, int kernel, int stride, int pad) {
    return {LayerKind::conv2d, in, out, kernel, stride, pad};
  }
  static LayerSpec conv_transpose2d(int in, int out, int kernel, int stride, int pad) {
    return {LayerKind::conv_transpose2d, in, out, kernel, stride, pad};
  }
  static LayerSpec lstm(int in, int hidden) { return {LayerKind::lstm, in, hidden}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec sigmoid() { return {LayerKind::sigmoid}; }
  static LayerSpec tanh() { return {LayerKind::tanh}; }

  bool has_params() const;
  // Spatial output size along one axis for the convolution kinds.
  std::size_t spatial_out(std::size_t in_size) const;
  std::vector<std::vector<std::size_t>> param_shapes() const;
  std::string describe() const;

  bool operator==(const LayerSpec&) const = default;
};

// Activations recorded by forward() for use by backward().
struct LayerCache {
  bool valid = false;
  Tensor input;
  Tensor output;
  std::vector<Tensor> aux;
};

struct LayerGrads {
  Tensor input;
  std::vector<Tensor> params;  // same order as Layer::params()
};

class Layer {
 public:
  explicit Layer(LayerSpec spec);

  const LayerSpec& spec() const { return spec_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t param_count() const;

  // Throws ShapeError naming the layer and the expected/actual shapes.
  Tensor forward(const Tensor& x, LayerCache* cache = nullptr) const;
  // Throws Error if the cache was not filled by forward().
  LayerGrads backward(const LayerCache& cache, const Tensor& grad_out) const;

 private:
  void check_input(const Tensor& x) const;
  LayerSpec spec_;
  std::vector<Tensor> params_;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases, LSTM
// forget-gate bias 1. Identical seeds give identical parameters.
std::vector<Tensor> seed_init(const LayerSpec& spec, std::uint64_t seed);
double init_bound(const LayerSpec& spec, std::size_t param_index);

// A stack of layers applied in order.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<LayerSpec> specs);

  void seed_init(std::uint64_t seed);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t param_count() const;

  // Pointers to every parameter tensor, layer by layer.
  std::vector<Tensor*> param_refs();
  std::vector<const Tensor*> param_refs() const;
  // Zeroed tensors matching param_refs().
  std::vector<Tensor> zero_grads() const;

  Tensor forward(const Tensor& x, std::vector<LayerCache>* caches = nullptr) const;
  // Adds parameter gradients into grads (laid out like zero_grads()) and
  // returns the gradient with respect to the network input.
  Tensor backward(const std::vector<LayerCache>& caches, const Tensor& grad_out,
                  std::vector<Tensor>& grads) const;

  bool operator==(const Network& o) const;

 private:
  std::vector<Layer> layers_;
};

double mse(const Tensor& pred, const Tensor& target);
// 2 (pred - target) / N
Tensor mse_grad(const Tensor& pred, const Tensor& target);

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;
  AdamState(AdamConfig cfg, const std::vector<const Tensor*>& params);
  AdamState(AdamConfig cfg, const std::vector<Tensor*>& params)
      : AdamState(cfg, std::vector<const Tensor*>(params.begin(), params.end())) {}
};

// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads);

// Named networks plus string metadata; the unit persisted in checkpoints.
struct ModelBundle {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Network>> networks;

  Network& net(const std::string& name);
  const Network& net(const std::string& name) const;
  std::vector<Tensor*> param_refs();
  std::vector<const Tensor*> param_refs() const;
  std::size_t param_count() const;
  bool operator==(const ModelBundle&) const = default;
};

// Checkpoint layout (all integers little-endian, see docs/checkpoint_format.md):
//   "LVCK" u32 version
//   u32 n_meta   { str key, str value }
//   u32 n_nets   { str name, u32 n_layers { u8 kind, i32 in, out, kernel, stride, pad,
//                  u32 n_params { u8 rank, u32 dims[rank], f64 values[...] } } }
// str = u32 length + bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_bundle(ByteWriter& w, const ModelBundle& b);
ModelBundle read_bundle(ByteReader& r);
void write_tensor(ByteWriter& w, const Tensor& t);
Tensor read_tensor(ByteReader& r);

std::vector<std::uint8_t> serialize_checkpoint(const ModelBundle& b);
ModelBundle deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& b);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace lavse::nn
