#pragma once

// Central finite-difference check of Layer::backward. The scalar objective is
// L = sum(G * forward(x)) for a fixed random upstream gradient G.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lavse/nn.hpp"
#include "lavse/rng.hpp"

namespace lavse::testing {

struct GradCheckResult {
  double worst_rel_error = 0.0;
  std::string worst_what;
};

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline double objective(const nn::Layer& layer, const nn::Tensor& x, const nn::Tensor& g) {
  const nn::Tensor y = layer.forward(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
  return s;
}

inline GradCheckResult check_layer_gradients(nn::Layer& layer, nn::Tensor x, Rng& rng,
                                             double h = 1e-5) {
  nn::LayerCache cache;
  const nn::Tensor y = layer.forward(x, &cache);
  nn::Tensor g(y.shape());
  for (auto& v : g.storage()) v = rng.uniform(-1.0, 1.0);
  const nn::LayerGrads analytic = layer.backward(cache, g);

  GradCheckResult result;
  auto record = [&](std::span<const double> a, std::span<const double> n,
                    const std::string& what) {
    const double e = rel_error(a, n);
    if (e > result.worst_rel_error) {
      result.worst_rel_error = e;
      result.worst_what = what;
    }
  };

  std::vector<double> numeric(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = objective(layer, x, g);
    x[i] = keep - h;
    const double down = objective(layer, x, g);
    x[i] = keep;
    numeric[i] = (up - down) / (2.0 * h);
  }
  record(analytic.input.data(), numeric, "input");

  for (std::size_t p = 0; p < layer.params().size(); ++p) {
    nn::Tensor& param = layer.params()[p];
    std::vector<double> num(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double keep = param[i];
      param[i] = keep + h;
      const double up = objective(layer, x, g);
      param[i] = keep - h;
      const double down = objective(layer, x, g);
      param[i] = keep;
      num[i] = (up - down) / (2.0 * h);
    }
    record(analytic.params[p].data(), num, "param " + std::to_string(p));
  }
  return result;
}

// A random small instance of the given kind, with input.
inline std::pair<nn::Layer, nn::Tensor> random_instance(nn::LayerKind kind, Rng& rng) {
  using nn::LayerSpec;
  auto fill = [&](nn::Tensor& t, double lo, double hi) {
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  };
  auto away_from_zero = [&](nn::Tensor& t) {
    for (auto& v : t.storage()) {
      const double m = rng.uniform(0.05, 2.0);
      v = rng.uniform() < 0.5 ? -m : m;
    }
  };
  switch (kind) {
    case nn::LayerKind::fc: {
      nn::Layer l(LayerSpec::fc(rng.uniform_int(1, 7), rng.uniform_int(1, 7)));
      for (auto& p : l.params()) fill(p, -1.0, 1.0);
      nn::Tensor x({static_cast<std::size_t>(rng.uniform_int(1, 4)),
                    static_cast<std::size_t>(l.spec().in)});
      fill(x, -1.0, 1.0);
      return {std::move(l), std::move(x)};
    }
    case nn::LayerKind::conv2d:
    case nn::LayerKind::conv_transpose2d: {
      const int k = rng.uniform_int(1, 4);
      const int s = rng.uniform_int(1, 3);
      const int p = rng.uniform_int(0, k - 1);
      const int in = rng.uniform_int(1, 3), out = rng.uniform_int(1, 3);
      nn::Layer l(kind == nn::LayerKind::conv2d ? LayerSpec::conv2d(in, out, k, s, p)
                                                : LayerSpec::conv_transpose2d(in, out, k, s, p));
      for (auto& prm : l.params()) fill(prm, -1.0, 1.0);
      // Smallest spatial size with a non-empty output.
      int lo = 1;
      if (kind == nn::LayerKind::conv2d) {
        lo = std::max(1, k - 2 * p);
      } else {
        while ((lo - 1) * s + k - 2 * p < 1) ++lo;
      }
      nn::Tensor x({static_cast<std::size_t>(in), static_cast<std::size_t>(rng.uniform_int(lo, 7)),
                    static_cast<std::size_t>(rng.uniform_int(lo, 7))});
      fill(x, -1.0, 1.0);
      return {std::move(l), std::move(x)};
    }
    case nn::LayerKind::lstm: {
      nn::Layer l(LayerSpec::lstm(rng.uniform_int(1, 5), rng.uniform_int(1, 5)));
      for (auto& p : l.params()) fill(p, -0.8, 0.8);
      nn::Tensor x({static_cast<std::size_t>(rng.uniform_int(1, 6)),
                    static_cast<std::size_t>(l.spec().in)});
      fill(x, -1.0, 1.0);
      return {std::move(l), std::move(x)};
    }
    case nn::LayerKind::relu:
    case nn::LayerKind::sigmoid:
    case nn::LayerKind::tanh: {
      nn::Layer l(nn::LayerSpec{kind});
      nn::Tensor x({static_cast<std::size_t>(rng.uniform_int(1, 4)),
                    static_cast<std::size_t>(rng.uniform_int(1, 6))});
      // ReLU is not differentiable at 0; keep samples away from the kink.
      away_from_zero(x);
      return {std::move(l), std::move(x)};
    }
  }
  throw Error("unknown kind");
}

inline const std::vector<nn::LayerKind>& all_layer_kinds() {
  static const std::vector<nn::LayerKind> kinds{
      nn::LayerKind::fc,   nn::LayerKind::conv2d,  nn::LayerKind::conv_transpose2d,
      nn::LayerKind::lstm, nn::LayerKind::relu,    nn::LayerKind::sigmoid,
      nn::LayerKind::tanh};
  return kinds;
}

}  // namespace lavse::testing
