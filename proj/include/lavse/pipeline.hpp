#pragma once

// End-to-end plumbing: lip frames -> compressed latents, corpus loading, SE
// training, enhancement and evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lavse/eofp.hpp"
#include "lavse/se_model.hpp"
#include "lavse/synth.hpp"
#include "lavse/visual_ae.hpp"

namespace lavse::pipeline {

// Encodes one lip frame and packs its latent as float32 into an EOFP array of
// shape [32,8,8]. An all-zero latent gives an all-zero array.
eofp::EofpArray compress_frame(const visual::AeModel& ae, const nn::Tensor& frame);
// Dequantized flat [2048] latent.
nn::Tensor dequantize_latent(const eofp::EofpArray& a);

// Flat [2048] latents per frame: encode, then (if quantize) EOFP round trip.
std::vector<nn::Tensor> visual_latents(const visual::AeModel& ae, const std::vector<nn::Tensor>& frames,
                                       bool quantize);

// Called with every path the data loader opens.
using FileAudit = std::function<void(const std::filesystem::path&)>;

// Features for a set of manifest records. Visual features are computed once
// per utterance. Audio-only datasets never touch lip frames.
class SeDataset {
 public:
  SeDataset(const synth::Manifest& manifest, const std::vector<synth::ManifestRecord>& records, se::Mode mode,
            const visual::AeModel* ae, bool quantize, const FileAudit& audit = {},
            const se::AlignConfig& align = {});

  std::size_t size() const { return items_.size(); }
  const synth::ManifestRecord& record(std::size_t i) const { return items_[i].record; }
  const nn::Tensor& noisy(std::size_t i) const { return items_[i].noisy; }
  // log1p(gain * |clean|), the target matching the scaled clean inside the mix.
  nn::Tensor clean(std::size_t i) const;
  // [T, 2048]; empty in audio-only mode.
  const nn::Tensor& visual(std::size_t i) const;

 private:
  struct Item {
    synth::ManifestRecord record;
    std::size_t utt = 0;
    nn::Tensor noisy;
  };
  std::vector<Item> items_;
  std::vector<nn::Tensor> clean_mag_;  // per utterance
  std::vector<nn::Tensor> visual_;     // per utterance
  nn::Tensor empty_;
};

struct SeTrainConfig {
  int epochs = 60;
  double lr = 5e-5;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int patience = 10;
  double mu = 1e-3;
  bool quantize_visual = true;
  std::filesystem::path state_path;
  std::filesystem::path log_path;
  int stop_after_epoch = 0;
  std::function<void(const train::EpochRecord&)> on_epoch;
  FileAudit audit;
};

struct SeTrainResult {
  se::SeModel model;
  std::vector<train::EpochRecord> history;
  int best_epoch = 0;
  bool interrupted = false;
  std::size_t train_items = 0;
  std::size_t val_items = 0;
};

// Trains on the manifest's train split. The utterances in the last
// val_fraction of manifest order (at least one) form the validation set. The
// log has columns epoch,train_loss,val_loss,loss_a,loss_v.
SeTrainResult train_se(const synth::Manifest& manifest, const visual::AeModel* ae, se::Mode mode,
                       const SeTrainConfig& cfg);

// STFT, model, clamp at 0, expm1, resynthesis with the noisy phase, trimmed to
// the input length. latents are ignored in audio-only mode.
std::vector<double> enhance_with_latents(const se::SeModel& model, const std::vector<double>& noisy,
                                         const std::vector<nn::Tensor>& latents, const se::AlignConfig& align = {});
std::vector<double> enhance_utterance(const se::SeModel& model, const visual::AeModel* ae,
                                      const std::vector<double>& noisy, const std::vector<nn::Tensor>& lip_frames,
                                      bool quantize = true, const se::AlignConfig& align = {});

struct EvalRow {
  std::string id;
  double snr_db = 0.0;
  std::string noise;
  double stoi_noisy = 0.0;
  double stoi_enh = 0.0;
  double sisdr_noisy = 0.0;
  double sisdr_enh = 0.0;
};

struct EvalAggregate {
  double snr_db = 0.0;  // unused for the overall row
  std::size_t count = 0;
  double stoi_noisy = 0.0;
  double stoi_enh = 0.0;
  double sisdr_noisy = 0.0;
  double sisdr_enh = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;           // manifest order of the test split
  std::vector<EvalAggregate> per_snr;  // ascending snr_db
  EvalAggregate overall;
};

struct EvalOptions {
  bool quantize = true;
  std::filesystem::path enhanced_dir;  // write enhanced WAVs here when set
};

EvalReport evaluate(const synth::Manifest& manifest, const se::SeModel& model, const visual::AeModel* ae,
                    const EvalOptions& opt = {});
// Means of rows grouped by SNR, and overall.
void aggregate(EvalReport& report);

// rows: id,snr_db,noise,stoi_noisy,stoi_enh,sisdr_noisy,sisdr_enh
// per-SNR: snr_db,count,stoi_noisy,stoi_enh,sisdr_noisy,sisdr_enh
// overall: one data row with the per-SNR columns, snr_db = "all"
void write_report(const EvalReport& r, const std::filesystem::path& rows_csv, const std::filesystem::path& snr_csv,
                  const std::filesystem::path& overall_csv);
std::vector<EvalRow> read_rows(const std::filesystem::path& rows_csv);

}  // namespace lavse::pipeline
