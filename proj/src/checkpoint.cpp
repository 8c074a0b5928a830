#include <algorithm>
#include <cstring>

#include "lavse/nn.hpp"

namespace lavse::nn {

namespace {

constexpr std::uint8_t kMagic[4] = {'L', 'V', 'C', 'K'};
constexpr std::uint8_t kMaxKind = static_cast<std::uint8_t>(LayerKind::tanh);

}  // namespace

Network& ModelBundle::net(const std::string& name) {
  for (auto& [n, net] : networks)
    if (n == name) return net;
  throw Error("model has no network named '" + name + "'");
}

const Network& ModelBundle::net(const std::string& name) const {
  for (const auto& [n, net] : networks)
    if (n == name) return net;
  throw Error("model has no network named '" + name + "'");
}

std::vector<Tensor*> ModelBundle::param_refs() {
  std::vector<Tensor*> refs;
  for (auto& [name, net] : networks) {
    auto r = net.param_refs();
    refs.insert(refs.end(), r.begin(), r.end());
  }
  return refs;
}

std::vector<const Tensor*> ModelBundle::param_refs() const {
  std::vector<const Tensor*> refs;
  for (const auto& [name, net] : networks) {
    auto r = net.param_refs();
    refs.insert(refs.end(), r.begin(), r.end());
  }
  return refs;
}

std::size_t ModelBundle::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, net] : networks) n += net.param_count();
  return n;
}

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f64(v);
}

Tensor read_tensor(ByteReader& r) {
  const std::size_t rank = r.u8();
  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = r.u32();
    count *= d;
  }
  if (count > r.remaining() / 8) throw FormatError("checkpoint: tensor exceeds file size");
  std::vector<double> data(count);
  for (auto& v : data) v = r.f64();
  return Tensor(std::move(shape), std::move(data));
}

void write_bundle(ByteWriter& w, const ModelBundle& b) {
  w.u32(static_cast<std::uint32_t>(b.meta.size()));
  for (const auto& [k, v] : b.meta) {
    w.text(k);
    w.text(v);
  }
  w.u32(static_cast<std::uint32_t>(b.networks.size()));
  for (const auto& [name, net] : b.networks) {
    w.text(name);
    w.u32(static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& layer : net.layers()) {
      const LayerSpec& s = layer.spec();
      w.u8(static_cast<std::uint8_t>(s.kind));
      w.i32(s.in);
      w.i32(s.out);
      w.i32(s.kernel);
      w.i32(s.stride);
      w.i32(s.pad);
      w.u32(static_cast<std::uint32_t>(layer.params().size()));
      for (const auto& p : layer.params()) write_tensor(w, p);
    }
  }
}

ModelBundle read_bundle(ByteReader& r) {
  ModelBundle b;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.text();
    b.meta[k] = r.text();
  }
  const std::uint32_t n_nets = r.u32();
  for (std::uint32_t i = 0; i < n_nets; ++i) {
    std::string name = r.text();
    const std::uint32_t n_layers = r.u32();
    std::vector<LayerSpec> specs;
    std::vector<std::vector<Tensor>> params;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      LayerSpec s;
      const std::uint8_t kind = r.u8();
      if (kind > kMaxKind) throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
      s.kind = static_cast<LayerKind>(kind);
      s.in = r.i32();
      s.out = r.i32();
      s.kernel = r.i32();
      s.stride = r.i32();
      s.pad = r.i32();
      const std::uint32_t n_params = r.u32();
      std::vector<Tensor> ps;
      for (std::uint32_t p = 0; p < n_params; ++p) ps.push_back(read_tensor(r));
      specs.push_back(s);
      params.push_back(std::move(ps));
    }
    Network net(specs);
    for (std::size_t l = 0; l < specs.size(); ++l) {
      auto& dst = net.layers()[l].params();
      if (dst.size() != params[l].size()) {
        throw FormatError("checkpoint: " + specs[l].describe() + " has wrong parameter count");
      }
      for (std::size_t p = 0; p < dst.size(); ++p) {
        if (!dst[p].same_shape(params[l][p])) {
          throw FormatError("checkpoint: " + specs[l].describe() + " parameter " +
                            std::to_string(p) + " has shape " +
                            shape_string(params[l][p].shape()) + ", expected " +
                            shape_string(dst[p].shape()));
        }
        dst[p] = std::move(params[l][p]);
      }
    }
    b.networks.emplace_back(std::move(name), std::move(net));
  }
  return b;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelBundle& b) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  write_bundle(w, b);
  return w.release();
}

ModelBundle deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelBundle b = read_bundle(r);
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return b;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& b) {
  write_file_bytes(path, serialize_checkpoint(b));
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lavse::nn
