#include "lavse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lavse/audio.hpp"
#include "lavse/binary_io.hpp"
#include "lavse/image.hpp"
#include "lavse/metrics.hpp"
#include "lavse/wav.hpp"

namespace lavse::pipeline {

using nn::Tensor;

namespace {

std::vector<double> read_audited(const std::filesystem::path& p, const FileAudit& audit) {
  if (audit) audit(p);
  return audio::read_wav(p).samples;
}

std::vector<Tensor> read_frames_audited(const std::filesystem::path& dir, const FileAudit& audit) {
  std::vector<Tensor> frames;
  for (std::size_t i = 0;; ++i) {
    const auto p = dir / synth::lip_frame_name(i);
    if (!std::filesystem::exists(p)) break;
    if (audit) audit(p);
    frames.push_back(image::read_ppm(p));
  }
  if (frames.empty()) throw IoError("no lip frames in " + dir.string());
  return frames;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  write_file_bytes(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace

eofp::EofpArray compress_frame(const visual::AeModel& ae, const Tensor& frame) {
  const Tensor z = ae.encode(frame);
  std::vector<float> values(z.size());
  bool any = false;
  for (std::size_t i = 0; i < z.size(); ++i) {
    values[i] = static_cast<float>(z[i]);
    any = any || values[i] != 0.0f;
  }
  const std::vector<std::uint32_t> shape{visual::kLatentChannels, visual::kLatentSize, visual::kLatentSize};
  return any ? eofp::encode_array(values, shape) : eofp::zero_array(shape);
}

Tensor dequantize_latent(const eofp::EofpArray& a) {
  if (a.count() != visual::kLatentDim) throw ShapeError("compressed latent must hold 2048 values");
  const auto v = eofp::decode_array(a);
  Tensor out({visual::kLatentDim});
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

std::vector<Tensor> visual_latents(const visual::AeModel& ae, const std::vector<Tensor>& frames, bool quantize) {
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    out.push_back(quantize ? dequantize_latent(compress_frame(ae, f)) : visual::flatten_latent(ae.encode(f)));
  }
  return out;
}

SeDataset::SeDataset(const synth::Manifest& manifest, const std::vector<synth::ManifestRecord>& records,
                     se::Mode mode, const visual::AeModel* ae, bool quantize, const FileAudit& audit,
                     const se::AlignConfig& align) {
  if (mode == se::Mode::avse && ae == nullptr) throw Error("audio-visual mode needs an autoencoder");
  std::map<std::string, std::size_t> utt_index;  // keyed by clean path
  for (const auto& r : records) {
    auto [it, fresh] = utt_index.try_emplace(r.clean, clean_mag_.size());
    if (fresh) {
      const auto clean = read_audited(manifest.path(r.clean), audit);
      clean_mag_.push_back(audio::magnitude(audio::stft(clean)));
      if (mode == se::Mode::avse) {
        const auto frames = read_frames_audited(manifest.path(r.lips), audit);
        visual_.push_back(se::align_visual(visual_latents(*ae, frames, quantize), clean_mag_.back().dim(0), align));
      }
    }
    Item item;
    item.record = r;
    item.utt = it->second;
    item.noisy = audio::log1p_mag(audio::stft(read_audited(manifest.path(r.noisy), audit)));
    if (item.noisy.shape() != clean_mag_[item.utt].shape()) {
      throw FormatError(r.id + ": noisy and clean lengths differ");
    }
    items_.push_back(std::move(item));
  }
}

Tensor SeDataset::clean(std::size_t i) const {
  const Item& item = items_[i];
  Tensor out = clean_mag_[item.utt];
  for (auto& v : out.storage()) v = std::log1p(item.record.gain * v);
  return out;
}

const Tensor& SeDataset::visual(std::size_t i) const {
  return visual_.empty() ? empty_ : visual_[items_[i].utt];
}

SeTrainResult train_se(const synth::Manifest& manifest, const visual::AeModel* ae, se::Mode mode,
                       const SeTrainConfig& cfg) {
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw Error("validation fraction must lie in (0, 1)");
  const auto records = manifest.split("train");
  if (records.empty()) throw Error("manifest has no training items");

  std::vector<std::string> utts;
  for (const auto& r : records) {
    if (std::find(utts.begin(), utts.end(), r.utt) == utts.end()) utts.push_back(r.utt);
  }
  const auto n_val = static_cast<std::size_t>(std::ceil(static_cast<double>(utts.size()) * cfg.val_fraction));
  const std::vector<std::string> val_utts(utts.end() - static_cast<std::ptrdiff_t>(std::min(n_val, utts.size())),
                                          utts.end());
  std::vector<synth::ManifestRecord> train_recs, val_recs;
  for (const auto& r : records) {
    const bool is_val = std::find(val_utts.begin(), val_utts.end(), r.utt) != val_utts.end();
    (is_val ? val_recs : train_recs).push_back(r);
  }
  if (train_recs.empty()) train_recs = val_recs;  // a single utterance trains and validates

  const SeDataset train_set(manifest, train_recs, mode, ae, cfg.quantize_visual, cfg.audit);
  const SeDataset val_set(manifest, val_recs, mode, ae, cfg.quantize_visual, cfg.audit);
  const se::LossWeights w{cfg.mu};

  auto step = [&](const nn::ModelBundle& b, std::size_t i, std::vector<Tensor>& grads) {
    const auto p = se::accumulate_gradients(b, mode, train_set.noisy(i), train_set.clean(i), train_set.visual(i), w,
                                            grads);
    return train::StepResult{p.total, {p.audio, p.visual}};
  };
  auto validate = [&](const nn::ModelBundle& b) {
    const se::SeModel m(b);
    double total = 0.0;
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      const auto out = m.forward(val_set.noisy(i), val_set.visual(i));
      total += se::combined_loss(out.audio, val_set.clean(i), out.visual, val_set.visual(i), w).total;
    }
    return total / static_cast<double>(val_set.size());
  };

  std::ostringstream fp;
  fp << "se mode=" << se::to_string(mode) << " items=" << records.size() << " epochs=" << cfg.epochs
     << " lr=" << cfg.lr << " seed=" << cfg.seed << " val=" << cfg.val_fraction << " patience=" << cfg.patience
     << " mu=" << cfg.mu << " quantize=" << cfg.quantize_visual;

  train::LoopConfig loop;
  loop.epochs = cfg.epochs;
  loop.lr = cfg.lr;
  loop.seed = cfg.seed;
  loop.patience = cfg.patience;
  loop.state_path = cfg.state_path;
  loop.log_path = cfg.log_path;
  loop.extra_columns = {"loss_a", "loss_v"};
  loop.fingerprint = fp.str();
  loop.stop_after_epoch = cfg.stop_after_epoch;
  loop.on_epoch = cfg.on_epoch;

  auto out = train::run(se::SeModel::create(mode, cfg.seed).bundle(), train_set.size(), step, validate, loop);
  SeTrainResult r{se::SeModel(std::move(out.best)), std::move(out.history), out.best_epoch, out.interrupted,
                  train_set.size(), val_set.size()};
  return r;
}

std::vector<double> enhance_with_latents(const se::SeModel& model, const std::vector<double>& noisy,
                                         const std::vector<Tensor>& latents, const se::AlignConfig& align) {
  const auto spec = audio::stft(noisy);
  const Tensor feats = audio::log1p_mag(spec);
  const Tensor visual =
      model.mode() == se::Mode::avse ? se::align_visual(latents, feats.dim(0), align) : Tensor{};
  Tensor audio_hat = model.forward(feats, visual).audio;
  for (auto& v : audio_hat.storage()) v = std::max(v, 0.0);
  auto wave = audio::istft_with_phase(audio::expm1_mag(audio_hat), spec);
  wave.resize(noisy.size());
  return wave;
}

std::vector<double> enhance_utterance(const se::SeModel& model, const visual::AeModel* ae,
                                      const std::vector<double>& noisy, const std::vector<Tensor>& lip_frames,
                                      bool quantize, const se::AlignConfig& align) {
  if (model.mode() == se::Mode::audio_only) return enhance_with_latents(model, noisy, {}, align);
  if (ae == nullptr) throw Error("audio-visual enhancement needs an autoencoder");
  return enhance_with_latents(model, noisy, visual_latents(*ae, lip_frames, quantize), align);
}

void aggregate(EvalReport& report) {
  auto add = [](EvalAggregate& a, const EvalRow& r) {
    ++a.count;
    a.stoi_noisy += r.stoi_noisy;
    a.stoi_enh += r.stoi_enh;
    a.sisdr_noisy += r.sisdr_noisy;
    a.sisdr_enh += r.sisdr_enh;
  };
  auto finish = [](EvalAggregate& a) {
    const double n = static_cast<double>(a.count);
    a.stoi_noisy /= n;
    a.stoi_enh /= n;
    a.sisdr_noisy /= n;
    a.sisdr_enh /= n;
  };
  std::map<double, EvalAggregate> by_snr;
  report.overall = EvalAggregate{};
  for (const auto& r : report.rows) {
    auto& a = by_snr[r.snr_db];
    a.snr_db = r.snr_db;
    add(a, r);
    add(report.overall, r);
  }
  report.per_snr.clear();
  for (auto& [snr, a] : by_snr) {
    finish(a);
    report.per_snr.push_back(a);
  }
  if (report.overall.count) finish(report.overall);
}

EvalReport evaluate(const synth::Manifest& manifest, const se::SeModel& model, const visual::AeModel* ae,
                    const EvalOptions& opt) {
  const auto records = manifest.split("test");
  if (records.empty()) throw Error("manifest has no test items");
  EvalReport report;
  std::map<std::string, std::vector<Tensor>> latents;  // per lips directory
  for (const auto& r : records) {
    const auto clean_raw = audio::read_wav(manifest.path(r.clean));
    const int fs = clean_raw.sample_rate;
    std::vector<double> clean = clean_raw.samples;
    for (double& v : clean) v *= r.gain;
    const auto noisy = audio::read_wav(manifest.path(r.noisy)).samples;

    std::vector<double> enhanced;
    if (model.mode() == se::Mode::avse) {
      if (ae == nullptr) throw Error("audio-visual evaluation needs an autoencoder");
      auto it = latents.find(r.lips);
      if (it == latents.end()) {
        it = latents.emplace(r.lips, visual_latents(*ae, synth::read_lip_frames(manifest.path(r.lips)), opt.quantize))
                 .first;
      }
      enhanced = enhance_with_latents(model, noisy, it->second);
    } else {
      enhanced = enhance_with_latents(model, noisy, {});
    }
    if (!opt.enhanced_dir.empty()) audio::write_wav(opt.enhanced_dir / (r.id + ".wav"), enhanced, fs);

    EvalRow row;
    row.id = r.id;
    row.snr_db = r.snr_db;
    row.noise = r.noise;
    row.stoi_noisy = metrics::stoi(clean, noisy, fs);
    row.stoi_enh = metrics::stoi(clean, enhanced, fs);
    row.sisdr_noisy = metrics::si_sdr(clean, noisy);
    row.sisdr_enh = metrics::si_sdr(clean, enhanced);
    report.rows.push_back(std::move(row));
  }
  aggregate(report);
  return report;
}

void write_report(const EvalReport& r, const std::filesystem::path& rows_csv, const std::filesystem::path& snr_csv,
                  const std::filesystem::path& overall_csv) {
  std::ostringstream rows;
  rows << "id,snr_db,noise,stoi_noisy,stoi_enh,sisdr_noisy,sisdr_enh\n";
  for (const auto& x : r.rows) {
    rows << x.id << ',' << fmt(x.snr_db) << ',' << x.noise << ',' << fmt(x.stoi_noisy) << ',' << fmt(x.stoi_enh)
         << ',' << fmt(x.sisdr_noisy) << ',' << fmt(x.sisdr_enh) << '\n';
  }
  write_text(rows_csv, rows.str());

  auto agg_line = [](const std::string& key, const EvalAggregate& a) {
    return key + ',' + std::to_string(a.count) + ',' + fmt(a.stoi_noisy) + ',' + fmt(a.stoi_enh) + ',' +
           fmt(a.sisdr_noisy) + ',' + fmt(a.sisdr_enh) + '\n';
  };
  const std::string header = "snr_db,count,stoi_noisy,stoi_enh,sisdr_noisy,sisdr_enh\n";
  std::string per = header;
  for (const auto& a : r.per_snr) per += agg_line(fmt(a.snr_db), a);
  write_text(snr_csv, per);
  write_text(overall_csv, header + agg_line("all", r.overall));
}

std::vector<EvalRow> read_rows(const std::filesystem::path& rows_csv) {
  std::ifstream in(rows_csv);
  if (!in) throw IoError("cannot open " + rows_csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 7) throw FormatError(rows_csv.string() + ": expected 7 fields");
    rows.push_back({c[0], std::stod(c[1]), c[2], std::stod(c[3]), std::stod(c[4]), std::stod(c[5]), std::stod(c[6])});
  }
  return rows;
}

}  // namespace lavse::pipeline
