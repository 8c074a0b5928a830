#include <algorithm>
#include <vector>

#include "doctest.h"
#include "lavse/binary_io.hpp"
#include "lavse/error.hpp"
#include "lavse/rng.hpp"
#include "lavse/train.hpp"
#include "support/tempdir.hpp"

using namespace lavse;
using nn::Tensor;

namespace {

struct Toy {
  std::vector<Tensor> x, y;

  Toy() {
    Rng rng(1);
    for (int i = 0; i < 24; ++i) {
      Tensor a({3}), b({2});
      for (auto& v : a.storage()) v = rng.normal();
      b[0] = 0.5 * a[0] - a[1];
      b[1] = a[2] * 0.25;
      x.push_back(a);
      y.push_back(b);
    }
  }

  nn::ModelBundle model() const {
    nn::ModelBundle b;
    b.networks.emplace_back("net", nn::Network({nn::LayerSpec::fc(3, 8), nn::LayerSpec::tanh(), nn::LayerSpec::fc(8, 2)}));
    b.net("net").seed_init(4);
    return b;
  }

  train::StepResult step(const nn::ModelBundle& b, std::size_t i, std::vector<Tensor>& grads) const {
    std::vector<nn::LayerCache> caches;
    const Tensor out = b.net("net").forward(x[i], &caches);
    b.net("net").backward(caches, nn::mse_grad(out, y[i]), grads);
    const double l = nn::mse(out, y[i]);
    return {l, {2.0 * l}};
  }

  double validate(const nn::ModelBundle& b) const {
    double s = 0.0;
    for (std::size_t i = 20; i < 24; ++i) s += nn::mse(b.net("net").forward(x[i]), y[i]);
    return s / 4.0;
  }

  train::LoopResult run(train::LoopConfig cfg) const {
    return train::run(
        model(), 20, [&](const nn::ModelBundle& b, std::size_t i, std::vector<Tensor>& g) { return step(b, i, g); },
        [&](const nn::ModelBundle& b) { return validate(b); }, cfg);
  }
};

}  // namespace

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = train::epoch_order(50, 3, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(a == train::epoch_order(50, 3, 1));
  CHECK(a != train::epoch_order(50, 3, 2));
  CHECK(a != train::epoch_order(50, 4, 1));
}

TEST_CASE("loop trains, logs and keeps the best model") {
  testing::TempDir dir("loop");
  const Toy toy;
  train::LoopConfig cfg;
  cfg.epochs = 6;
  cfg.lr = 1e-2;
  cfg.seed = 9;
  cfg.log_path = dir / "log.csv";
  cfg.extra_columns = {"twice"};
  const auto r = toy.run(cfg);
  REQUIRE(r.history.size() == 6);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  for (const auto& h : r.history) CHECK(h.extra[0] == doctest::Approx(2.0 * h.train_loss));
  const auto best = std::min_element(r.history.begin(), r.history.end(),
                                     [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
  CHECK(r.best_epoch == best->epoch);
  CHECK(toy.validate(r.best) == best->val_loss);

  const auto rows = train::read_log(dir / "log.csv");
  CHECK(rows.size() == 6);
  const auto text = read_file_bytes(dir / "log.csv");
  CHECK(std::string(text.begin(), text.begin() + 32) == "epoch,train_loss,val_loss,twice\n");
}

TEST_CASE("an interrupted run resumes to the same result") {
  testing::TempDir dir("resume");
  const Toy toy;
  train::LoopConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 1e-2;
  cfg.seed = 2;
  cfg.fingerprint = "toy";

  cfg.state_path = dir / "full.state";
  cfg.log_path = dir / "full.csv";
  const auto full = toy.run(cfg);

  cfg.state_path = dir / "part.state";
  cfg.log_path = dir / "part.csv";
  cfg.stop_after_epoch = 2;
  const auto part = toy.run(cfg);
  CHECK(part.interrupted);
  CHECK(part.history.size() == 2);
  CHECK(train::read_log(dir / "part.csv").size() == 2);

  cfg.stop_after_epoch = 0;
  const auto resumed = toy.run(cfg);
  CHECK(resumed.resumed_from == 2);
  CHECK(resumed.history == full.history);
  CHECK(resumed.best == full.best);
  CHECK(read_file_bytes(dir / "part.csv") == read_file_bytes(dir / "full.csv"));
  CHECK(read_file_bytes(dir / "part.state") == read_file_bytes(dir / "full.state"));

  cfg.fingerprint = "other";
  CHECK_THROWS_WITH_AS(toy.run(cfg), doctest::Contains("different configuration"), Error);
}

TEST_CASE("patience stops a run that stops improving") {
  const Toy toy;
  train::LoopConfig cfg;
  cfg.epochs = 50;
  cfg.patience = 3;
  int calls = 0;
  const auto r = train::run(
      toy.model(), 20, [&](const nn::ModelBundle& b, std::size_t i, std::vector<Tensor>& g) { return toy.step(b, i, g); },
      [&](const nn::ModelBundle&) { return ++calls == 2 ? 0.5 : 1.0; }, cfg);
  CHECK(r.early_stopped);
  CHECK(r.best_epoch == 2);
  CHECK(r.history.size() == 5);
}

TEST_CASE("loop argument errors") {
  const Toy toy;
  train::LoopConfig cfg;
  auto step = [&](const nn::ModelBundle& b, std::size_t i, std::vector<Tensor>& g) { return toy.step(b, i, g); };
  auto val = [&](const nn::ModelBundle& b) { return toy.validate(b); };
  CHECK_THROWS_AS(train::run(toy.model(), 0, step, val, cfg), Error);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train::run(toy.model(), 5, step, val, cfg), Error);
  cfg.epochs = 1;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(train::run(toy.model(), 5, step, val, cfg), Error);
}
