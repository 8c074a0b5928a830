#include <algorithm>
#include <cmath>

#include "lavse/nn.hpp"
#include "lavse/rng.hpp"

namespace lavse::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::Index;

struct ConvGeom {
  std::size_t channels, height, width;  // image being unfolded
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;             // positions of the kernel
};

// cols[(c*k + ki)*k + kj, oy*out_w + ox] = img[c, oy*s - p + ki, ox*s - p + kj]
void im2col(const double* img, const ConvGeom& g, double* cols) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            row[oy * g.out_w + ox] =
                inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into img (which must be zeroed).
void col2im(const double* cols, const ConvGeom& g, double* img) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            img[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::fc: return "fc";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv_transpose2d: return "conv_transpose2d";
    case LayerKind::lstm: return "lstm";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::tanh: return "tanh";
  }
  return "?";
}

bool LayerSpec::has_params() const {
  return kind == LayerKind::fc || kind == LayerKind::conv2d ||
         kind == LayerKind::conv_transpose2d || kind == LayerKind::lstm;
}

std::size_t LayerSpec::spatial_out(std::size_t in_size) const {
  const auto n = static_cast<long>(in_size);
  if (kind == LayerKind::conv2d) {
    const long span = n + 2L * pad - kernel;
    return span < 0 ? 0 : static_cast<std::size_t>(span / stride + 1);
  }
  if (kind == LayerKind::conv_transpose2d) {
    const long size = (n - 1) * stride - 2L * pad + kernel;
    return size < 0 ? 0 : static_cast<std::size_t>(size);
  }
  return in_size;
}

std::vector<std::vector<std::size_t>> LayerSpec::param_shapes() const {
  const auto i = static_cast<std::size_t>(in);
  const auto o = static_cast<std::size_t>(out);
  const auto k = static_cast<std::size_t>(kernel);
  switch (kind) {
    case LayerKind::fc: return {{o, i}, {o}};
    case LayerKind::conv2d: return {{o, i, k, k}, {o}};
    case LayerKind::conv_transpose2d: return {{i, o, k, k}, {o}};
    case LayerKind::lstm: return {{4 * o, i}, {4 * o, o}, {4 * o}};
    default: return {};
  }
}

std::string LayerSpec::describe() const {
  std::string s = to_string(kind);
  if (kind == LayerKind::fc || kind == LayerKind::lstm) {
    s += "(" + std::to_string(in) + "->" + std::to_string(out) + ")";
  } else if (kind == LayerKind::conv2d || kind == LayerKind::conv_transpose2d) {
    s += "(" + std::to_string(in) + "->" + std::to_string(out) + ", k" + std::to_string(kernel) +
         " s" + std::to_string(stride) + " p" + std::to_string(pad) + ")";
  }
  return s;
}

Layer::Layer(LayerSpec spec) : spec_(spec) {
  if (spec_.has_params() && (spec_.in <= 0 || spec_.out <= 0)) {
    throw ShapeError(spec_.describe() + ": sizes must be positive");
  }
  if ((spec_.kind == LayerKind::conv2d || spec_.kind == LayerKind::conv_transpose2d) &&
      (spec_.kernel <= 0 || spec_.stride <= 0 || spec_.pad < 0)) {
    throw ShapeError(spec_.describe() + ": bad kernel/stride/pad");
  }
  for (auto& shape : spec_.param_shapes()) params_.emplace_back(std::move(shape));
}

std::size_t Layer::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Layer::check_input(const Tensor& x) const {
  auto fail = [&](const std::string& expected) {
    throw ShapeError(spec_.describe() + ": expected input " + expected + ", got " +
                     shape_string(x.shape()));
  };
  const auto in = static_cast<std::size_t>(spec_.in);
  switch (spec_.kind) {
    case LayerKind::fc:
      if ((x.rank() != 1 && x.rank() != 2) || x.shape().back() != in) {
        fail("[N," + std::to_string(in) + "]");
      }
      break;
    case LayerKind::conv2d:
    case LayerKind::conv_transpose2d:
      if (x.rank() != 3 || x.dim(0) != in || spec_.spatial_out(x.dim(1)) == 0 ||
          spec_.spatial_out(x.dim(2)) == 0) {
        fail("[" + std::to_string(in) + ",H,W]");
      }
      break;
    case LayerKind::lstm:
      if (x.rank() != 2 || x.dim(1) != in || x.dim(0) == 0) fail("[T," + std::to_string(in) + "]");
      break;
    default:
      break;
  }
}

Tensor Layer::forward(const Tensor& x, LayerCache* cache) const {
  check_input(x);
  Tensor y;
  std::vector<Tensor> aux;
  const auto out = static_cast<std::size_t>(spec_.out);

  switch (spec_.kind) {
    case LayerKind::fc: {
      const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
      y = x.rank() == 1 ? Tensor({out}) : Tensor({rows, out});
      auto Y = y.matrix(rows, out);
      const auto W = params_[0].matrix(out, static_cast<std::size_t>(spec_.in));
      const auto b = params_[1].matrix(1, out);
      Y.noalias() = x.matrix(rows, static_cast<std::size_t>(spec_.in)) * W.transpose();
      Y.rowwise() += b.row(0);
      break;
    }
    case LayerKind::conv2d: {
      ConvGeom g{x.dim(0), x.dim(1), x.dim(2),
                 static_cast<std::size_t>(spec_.kernel), static_cast<std::size_t>(spec_.stride),
                 static_cast<std::size_t>(spec_.pad), spec_.spatial_out(x.dim(1)),
                 spec_.spatial_out(x.dim(2))};
      const std::size_t ckk = g.channels * g.kernel * g.kernel;
      const std::size_t positions = g.out_h * g.out_w;
      Tensor cols({ckk, positions});
      im2col(x.ptr(), g, cols.ptr());
      y = Tensor({out, g.out_h, g.out_w});
      auto Y = y.matrix(out, positions);
      Y.noalias() = params_[0].matrix(out, ckk) * cols.matrix(ckk, positions);
      Y.colwise() += params_[1].matrix(out, 1).col(0);
      aux.push_back(std::move(cols));
      break;
    }
    case LayerKind::conv_transpose2d: {
      const std::size_t oh = spec_.spatial_out(x.dim(1));
      const std::size_t ow = spec_.spatial_out(x.dim(2));
      ConvGeom g{out, oh, ow, static_cast<std::size_t>(spec_.kernel),
                 static_cast<std::size_t>(spec_.stride), static_cast<std::size_t>(spec_.pad),
                 x.dim(1), x.dim(2)};
      const std::size_t okk = out * g.kernel * g.kernel;
      const std::size_t positions = x.dim(1) * x.dim(2);
      const auto in = static_cast<std::size_t>(spec_.in);
      Tensor cols({okk, positions});
      cols.matrix(okk, positions).noalias() =
          params_[0].matrix(in, okk).transpose() * x.matrix(in, positions);
      y = Tensor({out, oh, ow});
      col2im(cols.ptr(), g, y.ptr());
      y.matrix(out, oh * ow).colwise() += params_[1].matrix(out, 1).col(0);
      break;
    }
    case LayerKind::lstm: {
      const std::size_t steps = x.dim(0);
      const std::size_t h = out;
      const auto in = static_cast<std::size_t>(spec_.in);
      Tensor gates({steps, 4 * h});
      Tensor cells({steps, h});
      Tensor cell_tanh({steps, h});
      y = Tensor({steps, h});
      auto G = gates.matrix(steps, 4 * h);
      G.noalias() = x.matrix(steps, in) * params_[0].matrix(4 * h, in).transpose();
      G.rowwise() += params_[2].matrix(1, 4 * h).row(0);
      const auto Whh = params_[1].matrix(4 * h, h);
      Eigen::VectorXd z(static_cast<Index>(4 * h));
      for (std::size_t t = 0; t < steps; ++t) {
        z = G.row(static_cast<Index>(t)).transpose();
        if (t > 0) z.noalias() += Whh * y.matrix(steps, h).row(static_cast<Index>(t - 1)).transpose();
        double* gt = gates.ptr() + t * 4 * h;
        for (std::size_t j = 0; j < h; ++j) {
          const double ig = sigmoid(z[static_cast<Index>(j)]);
          const double fg = sigmoid(z[static_cast<Index>(h + j)]);
          const double gg = std::tanh(z[static_cast<Index>(2 * h + j)]);
          const double og = sigmoid(z[static_cast<Index>(3 * h + j)]);
          gt[j] = ig;
          gt[h + j] = fg;
          gt[2 * h + j] = gg;
          gt[3 * h + j] = og;
          const double prev = t > 0 ? cells[(t - 1) * h + j] : 0.0;
          const double c = fg * prev + ig * gg;
          cells[t * h + j] = c;
          cell_tanh[t * h + j] = std::tanh(c);
          y[t * h + j] = og * cell_tanh[t * h + j];
        }
      }
      aux.push_back(std::move(gates));
      aux.push_back(std::move(cells));
      aux.push_back(std::move(cell_tanh));
      break;
    }
    case LayerKind::relu:
      y = Tensor(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case LayerKind::sigmoid:
      y = Tensor(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
      break;
    case LayerKind::tanh:
      y = Tensor(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
      break;
  }

  if (cache) {
    cache->valid = true;
    cache->input = x;
    cache->output = y;
    cache->aux = std::move(aux);
  }
  return y;
}

LayerGrads Layer::backward(const LayerCache& cache, const Tensor& grad_out) const {
  if (!cache.valid) throw Error(spec_.describe() + ": backward called without a forward cache");
  if (!grad_out.same_shape(cache.output)) {
    throw ShapeError(spec_.describe() + ": gradient shape " + shape_string(grad_out.shape()) +
                     " does not match output " + shape_string(cache.output.shape()));
  }
  const Tensor& x = cache.input;
  const Tensor& y = cache.output;
  LayerGrads g;
  g.input = Tensor(x.shape());
  for (const auto& p : params_) g.params.emplace_back(p.shape());
  const auto out = static_cast<std::size_t>(spec_.out);
  const auto in = static_cast<std::size_t>(spec_.in);

  switch (spec_.kind) {
    case LayerKind::fc: {
      const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
      const auto dY = grad_out.matrix(rows, out);
      g.input.matrix(rows, in).noalias() = dY * params_[0].matrix(out, in);
      g.params[0].matrix(out, in).noalias() = dY.transpose() * x.matrix(rows, in);
      g.params[1].matrix(1, out) = dY.colwise().sum();
      break;
    }
    case LayerKind::conv2d: {
      ConvGeom geo{x.dim(0), x.dim(1), x.dim(2),
                   static_cast<std::size_t>(spec_.kernel), static_cast<std::size_t>(spec_.stride),
                   static_cast<std::size_t>(spec_.pad), y.dim(1), y.dim(2)};
      const std::size_t ckk = geo.channels * geo.kernel * geo.kernel;
      const std::size_t positions = geo.out_h * geo.out_w;
      const auto dY = grad_out.matrix(out, positions);
      const Tensor& cols = cache.aux.at(0);
      g.params[0].matrix(out, ckk).noalias() = dY * cols.matrix(ckk, positions).transpose();
      g.params[1].matrix(out, 1) = dY.rowwise().sum();
      Tensor dcols({ckk, positions});
      dcols.matrix(ckk, positions).noalias() = params_[0].matrix(out, ckk).transpose() * dY;
      col2im(dcols.ptr(), geo, g.input.ptr());
      break;
    }
    case LayerKind::conv_transpose2d: {
      ConvGeom geo{out, y.dim(1), y.dim(2), static_cast<std::size_t>(spec_.kernel),
                   static_cast<std::size_t>(spec_.stride), static_cast<std::size_t>(spec_.pad),
                   x.dim(1), x.dim(2)};
      const std::size_t okk = out * geo.kernel * geo.kernel;
      const std::size_t positions = x.dim(1) * x.dim(2);
      Tensor dcols({okk, positions});
      im2col(grad_out.ptr(), geo, dcols.ptr());
      const auto D = dcols.matrix(okk, positions);
      g.input.matrix(in, positions).noalias() = params_[0].matrix(in, okk) * D;
      g.params[0].matrix(in, okk).noalias() = x.matrix(in, positions) * D.transpose();
      g.params[1].matrix(out, 1) = grad_out.matrix(out, y.dim(1) * y.dim(2)).rowwise().sum();
      break;
    }
    case LayerKind::lstm: {
      const std::size_t steps = x.dim(0);
      const std::size_t h = out;
      const Tensor& gates = cache.aux.at(0);
      const Tensor& cells = cache.aux.at(1);
      const Tensor& cell_tanh = cache.aux.at(2);
      Tensor dz({steps, 4 * h});
      const auto Whh = params_[1].matrix(4 * h, h);
      Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(static_cast<Index>(h));
      std::vector<double> dc_next(h, 0.0);
      for (std::size_t t = steps; t-- > 0;) {
        const double* gt = gates.ptr() + t * 4 * h;
        double* dzt = dz.ptr() + t * 4 * h;
        for (std::size_t j = 0; j < h; ++j) {
          const double ig = gt[j], fg = gt[h + j], gg = gt[2 * h + j], og = gt[3 * h + j];
          const double tc = cell_tanh[t * h + j];
          const double dh = grad_out[t * h + j] + dh_next[static_cast<Index>(j)];
          const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
          const double prev = t > 0 ? cells[(t - 1) * h + j] : 0.0;
          dzt[j] = dc * gg * ig * (1.0 - ig);
          dzt[h + j] = dc * prev * fg * (1.0 - fg);
          dzt[2 * h + j] = dc * ig * (1.0 - gg * gg);
          dzt[3 * h + j] = dh * tc * og * (1.0 - og);
          dc_next[j] = dc * fg;
        }
        dh_next.noalias() =
            Whh.transpose() * dz.matrix(steps, 4 * h).row(static_cast<Index>(t)).transpose();
      }
      const auto DZ = dz.matrix(steps, 4 * h);
      g.params[0].matrix(4 * h, in).noalias() = DZ.transpose() * x.matrix(steps, in);
      if (steps > 1) {
        g.params[1].matrix(4 * h, h).noalias() =
            DZ.bottomRows(static_cast<Index>(steps - 1)).transpose() *
            y.matrix(steps, h).topRows(static_cast<Index>(steps - 1));
      }
      g.params[2].matrix(1, 4 * h) = DZ.colwise().sum();
      g.input.matrix(steps, in).noalias() = DZ * params_[0].matrix(4 * h, in);
      break;
    }
    case LayerKind::relu:
      for (std::size_t i = 0; i < x.size(); ++i) g.input[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
      break;
    case LayerKind::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) g.input[i] = grad_out[i] * y[i] * (1.0 - y[i]);
      break;
    case LayerKind::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) g.input[i] = grad_out[i] * (1.0 - y[i] * y[i]);
      break;
  }
  return g;
}

double init_bound(const LayerSpec& spec, std::size_t param_index) {
  const double k2 = static_cast<double>(spec.kernel) * spec.kernel;
  switch (spec.kind) {
    case LayerKind::fc: return std::sqrt(6.0 / (spec.in + spec.out));
    case LayerKind::conv2d:
    case LayerKind::conv_transpose2d: return std::sqrt(6.0 / ((spec.in + spec.out) * k2));
    case LayerKind::lstm:
      return param_index == 0 ? std::sqrt(6.0 / (spec.in + 4.0 * spec.out))
                              : std::sqrt(6.0 / (5.0 * spec.out));
    default: return 0.0;
  }
}

std::vector<Tensor> seed_init(const LayerSpec& spec, std::uint64_t seed) {
  std::vector<Tensor> params;
  for (auto& shape : spec.param_shapes()) params.emplace_back(std::move(shape));
  if (params.empty()) return params;
  Rng rng(seed);
  // The last tensor of every parametrized kind is the bias.
  for (std::size_t p = 0; p + 1 < params.size(); ++p) {
    const double bound = init_bound(spec, p);
    for (auto& v : params[p].storage()) v = rng.uniform(-bound, bound);
  }
  if (spec.kind == LayerKind::lstm) {
    const auto h = static_cast<std::size_t>(spec.out);
    for (std::size_t j = h; j < 2 * h; ++j) params.back()[j] = 1.0;
  }
  return params;
}

Network::Network(std::vector<LayerSpec> specs) {
  for (const auto& s : specs) layers_.emplace_back(s);
}

void Network::seed_init(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].params() = nn::seed_init(layers_[i].spec(), derive_seed(seed, 0x4c41594552ULL, i));
  }
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.param_count();
  return n;
}

std::vector<Tensor*> Network::param_refs() {
  std::vector<Tensor*> refs;
  for (auto& l : layers_)
    for (auto& p : l.params()) refs.push_back(&p);
  return refs;
}

std::vector<const Tensor*> Network::param_refs() const {
  std::vector<const Tensor*> refs;
  for (const auto& l : layers_)
    for (const auto& p : l.params()) refs.push_back(&p);
  return refs;
}

std::vector<Tensor> Network::zero_grads() const {
  std::vector<Tensor> g;
  for (const auto* p : param_refs()) g.emplace_back(p->shape());
  return g;
}

Tensor Network::forward(const Tensor& x, std::vector<LayerCache>* caches) const {
  if (caches) caches->assign(layers_.size(), LayerCache{});
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i].forward(cur, caches ? &(*caches)[i] : nullptr);
  }
  return cur;
}

Tensor Network::backward(const std::vector<LayerCache>& caches, const Tensor& grad_out,
                         std::vector<Tensor>& grads) const {
  if (caches.size() != layers_.size()) throw Error("Network::backward: cache count mismatch");
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& l : layers_) {
    offsets.push_back(offset);
    offset += l.params().size();
  }
  if (grads.size() != offset) throw ShapeError("Network::backward: gradient buffer mismatch");
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    LayerGrads lg = layers_[i].backward(caches[i], g);
    for (std::size_t p = 0; p < lg.params.size(); ++p) {
      Tensor& acc = grads[offsets[i] + p];
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += lg.params[p][k];
    }
    g = std::move(lg.input);
  }
  return g;
}

bool Network::operator==(const Network& o) const {
  if (layers_.size() != o.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!(layers_[i].spec() == o.layers_[i].spec()) ||
        layers_[i].params() != o.layers_[i].params()) {
      return false;
    }
  }
  return true;
}

double mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw ShapeError("mse: shapes " + shape_string(pred.shape()) + " and " +
                     shape_string(target.shape()) + " differ");
  }
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw ShapeError("mse_grad: shapes " + shape_string(pred.shape()) + " and " +
                     shape_string(target.shape()) + " differ");
  }
  Tensor g(pred.shape());
  const double scale = 2.0 / static_cast<double>(std::max<std::size_t>(pred.size(), 1));
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

}  // namespace lavse::nn
