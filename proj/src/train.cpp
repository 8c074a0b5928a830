#include "lavse/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lavse/binary_io.hpp"
#include "lavse/rng.hpp"

namespace lavse::train {

namespace {

constexpr std::uint8_t kStateMagic[4] = {'L', 'V', 'S', 'T'};
constexpr std::uint32_t kStateVersion = 1;
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

struct LoopState {
  int epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int bad_epochs = 0;
  bool early_stopped = false;
  nn::ModelBundle current;
  nn::ModelBundle best;
  nn::AdamState adam;
  std::vector<EpochRecord> history;
};

void save_state(const std::filesystem::path& path, const std::string& fingerprint,
                const LoopState& s) {
  ByteWriter w;
  w.bytes(kStateMagic);
  w.u32(kStateVersion);
  w.text(fingerprint);
  w.i32(s.epoch);
  w.f64(s.best_val);
  w.i32(s.best_epoch);
  w.i32(s.bad_epochs);
  w.u8(s.early_stopped ? 1 : 0);
  nn::write_bundle(w, s.current);
  nn::write_bundle(w, s.best);
  w.f64(s.adam.config.lr);
  w.f64(s.adam.config.beta1);
  w.f64(s.adam.config.beta2);
  w.f64(s.adam.config.eps);
  w.u64(static_cast<std::uint64_t>(s.adam.step));
  w.u32(static_cast<std::uint32_t>(s.adam.m.size()));
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    nn::write_tensor(w, s.adam.m[i]);
    nn::write_tensor(w, s.adam.v[i]);
  }
  w.u32(static_cast<std::uint32_t>(s.history.size()));
  for (const auto& r : s.history) {
    w.i32(r.epoch);
    w.f64(r.train_loss);
    w.f64(r.val_loss);
    w.u32(static_cast<std::uint32_t>(r.extra.size()));
    for (double v : r.extra) w.f64(v);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_file_bytes(tmp, w.buffer());
  std::filesystem::rename(tmp, path);
}

LoopState load_state(const std::filesystem::path& path, const std::string& fingerprint) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kStateMagic))) throw FormatError(path.string() + ": not a training state file");
  if (r.u32() != kStateVersion) throw FormatError(path.string() + ": unsupported state version");
  if (r.text() != fingerprint) {
    throw Error(path.string() + ": state was written by a run with a different configuration; "
                "delete it to start over");
  }
  LoopState s;
  s.epoch = r.i32();
  s.best_val = r.f64();
  s.best_epoch = r.i32();
  s.bad_epochs = r.i32();
  s.early_stopped = r.u8() != 0;
  s.current = nn::read_bundle(r);
  s.best = nn::read_bundle(r);
  s.adam.config.lr = r.f64();
  s.adam.config.beta1 = r.f64();
  s.adam.config.beta2 = r.f64();
  s.adam.config.eps = r.f64();
  s.adam.step = static_cast<std::int64_t>(r.u64());
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    s.adam.m.push_back(nn::read_tensor(r));
    s.adam.v.push_back(nn::read_tensor(r));
  }
  const std::uint32_t rows = r.u32();
  for (std::uint32_t i = 0; i < rows; ++i) {
    EpochRecord rec;
    rec.epoch = r.i32();
    rec.train_loss = r.f64();
    rec.val_loss = r.f64();
    const std::uint32_t k = r.u32();
    for (std::uint32_t j = 0; j < k; ++j) rec.extra.push_back(r.f64());
    s.history.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes in state file");
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

void write_log(const std::filesystem::path& path, const std::vector<std::string>& extra_columns,
               const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss";
  for (const auto& c : extra_columns) out << ',' << c;
  out << '\n';
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss);
    for (double v : r.extra) out << ',' << fmt(v);
    out << '\n';
  }
  const std::string text = out.str();
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<EpochRecord> read_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EpochRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) throw FormatError(path.string() + ": short log row");
    EpochRecord r;
    r.epoch = std::stoi(cells[0]);
    r.train_loss = std::stod(cells[1]);
    r.val_loss = std::stod(cells[2]);
    for (std::size_t i = 3; i < cells.size(); ++i) r.extra.push_back(std::stod(cells[i]));
    rows.push_back(std::move(r));
  }
  return rows;
}

LoopResult run(nn::ModelBundle model, std::size_t n_train, const StepFn& step,
               const ValidateFn& validate, const LoopConfig& cfg) {
  if (n_train == 0) throw Error("training set is empty");
  if (cfg.epochs < 1) throw Error("epochs must be at least 1");
  if (!(cfg.lr > 0.0)) throw Error("learning rate must be positive");

  LoopState s;
  LoopResult result;
  if (!cfg.state_path.empty() && std::filesystem::exists(cfg.state_path)) {
    s = load_state(cfg.state_path, cfg.fingerprint);
    result.resumed_from = s.epoch;
  } else {
    s.current = std::move(model);
    s.best = s.current;
    s.adam = nn::AdamState(nn::AdamConfig{cfg.lr}, s.current.param_refs());
  }

  while (s.epoch < cfg.epochs && !s.early_stopped) {
    if (cfg.stop_after_epoch > 0 && s.epoch >= cfg.stop_after_epoch) {
      result.interrupted = true;
      break;
    }
    const int epoch = s.epoch + 1;
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t idx : epoch_order(n_train, cfg.seed, epoch)) {
      const std::vector<nn::Tensor*> params = s.current.param_refs();
      std::vector<nn::Tensor> grads;
      grads.reserve(params.size());
      for (const auto* p : params) grads.emplace_back(p->shape());
      const StepResult r = step(s.current, idx, grads);
      nn::adam_step(s.adam, params, grads);
      rec.train_loss += r.loss;
      if (rec.extra.size() < r.extra.size()) rec.extra.resize(r.extra.size(), 0.0);
      for (std::size_t i = 0; i < r.extra.size(); ++i) rec.extra[i] += r.extra[i];
    }
    rec.train_loss /= static_cast<double>(n_train);
    for (double& v : rec.extra) v /= static_cast<double>(n_train);
    rec.val_loss = validate(s.current);

    s.epoch = epoch;
    if (rec.val_loss < s.best_val) {
      s.best_val = rec.val_loss;
      s.best_epoch = epoch;
      s.best = s.current;
      s.bad_epochs = 0;
    } else if (++s.bad_epochs >= cfg.patience) {
      s.early_stopped = true;
    }
    s.history.push_back(rec);
    if (!cfg.log_path.empty()) write_log(cfg.log_path, cfg.extra_columns, s.history);
    if (!cfg.state_path.empty()) save_state(cfg.state_path, cfg.fingerprint, s);
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }

  result.best = std::move(s.best);
  result.best_epoch = s.best_epoch;
  result.history = std::move(s.history);
  result.early_stopped = s.early_stopped;
  return result;
}

}  // namespace lavse::train
