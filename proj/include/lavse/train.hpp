#pragma once

// Epoch loop shared by the autoencoder and the SE model: per-item Adam steps
// in a seeded shuffle order, validation after each epoch, best-validation
// snapshot, patience-based early stop, CSV log, and an optional state file
// that lets an interrupted run continue from its last completed epoch.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lavse/nn.hpp"

namespace lavse::train {

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::vector<double> extra;  // means of StepResult::extra over the epoch

  bool operator==(const EpochRecord&) const = default;
};

struct StepResult {
  double loss = 0.0;
  std::vector<double> extra;
};

// Adds gradients for training item `index` into grads (laid out like
// ModelBundle::param_refs()) and returns its loss.
using StepFn =
    std::function<StepResult(const nn::ModelBundle&, std::size_t index, std::vector<nn::Tensor>& grads)>;
// Mean validation loss of the current model.
using ValidateFn = std::function<double(const nn::ModelBundle&)>;

struct LoopConfig {
  int epochs = 60;
  double lr = 5e-5;
  std::uint64_t seed = 0;
  int patience = 10;
  std::filesystem::path state_path;  // empty: no resume support
  std::filesystem::path log_path;    // empty: no CSV
  std::vector<std::string> extra_columns;
  // Stored in the state file; resuming with a different value is an error.
  std::string fingerprint;
  // >0: return after this many epochs as if the process had been killed.
  int stop_after_epoch = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct LoopResult {
  nn::ModelBundle best;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  bool interrupted = false;
  int resumed_from = 0;  // epochs already done when the run started
};

LoopResult run(nn::ModelBundle model, std::size_t n_train, const StepFn& step,
               const ValidateFn& validate, const LoopConfig& cfg);

void write_log(const std::filesystem::path& path, const std::vector<std::string>& extra_columns,
               const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_log(const std::filesystem::path& path);

// Deterministic shuffle order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace lavse::train
