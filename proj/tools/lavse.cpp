// lavse command-line tool. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lavse/binary_io.hpp"
#include "lavse/eofp.hpp"
#include "lavse/error.hpp"
#include "lavse/pipeline.hpp"
#include "lavse/wav.hpp"

namespace fs = std::filesystem;
using namespace lavse;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reads key=value lines; '#' starts a comment. Returns "--key=value" tokens.
std::vector<std::string> config_tokens(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot open config file " + file.string());
  std::vector<std::string> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(file.string() + ":" + std::to_string(n) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    out.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  return out;
}

// Splices --config file entries in front of the command-line flags so that
// explicit flags, parsed later, win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      const auto t = config_tokens(args[++i]);
      from_file.insert(from_file.end(), t.begin(), t.end());
    } else if (args[i].rfind("--config=", 0) == 0) {
      const auto t = config_tokens(args[i].substr(9));
      from_file.insert(from_file.end(), t.begin(), t.end());
    } else {
      out.push_back(args[i]);
    }
  }
  if (!from_file.empty()) {
    if (out.empty()) throw UsageError("--config given without a subcommand");
    out.insert(out.begin() + 1, from_file.begin(), from_file.end());
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

void echo_config(const CLI::App& sub) {
  std::cerr << "lavse " << sub.get_name() << "\n";
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "--help-all" || name == "--config") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->reduced_results()) value += (value.empty() ? "" : " ") + r;
    } else {
      value = opt->get_default_str();
    }
    std::cerr << "  " << opt->get_lnames().front() << " = " << value << "\n";
  }
}

void print_epoch(const train::EpochRecord& e) {
  std::fprintf(stderr, "epoch %d train %.6g val %.6g\n", e.epoch, e.train_loss, e.val_loss);
}

fs::path manifest_file(const fs::path& corpus) {
  return fs::is_directory(corpus) ? corpus / synth::kManifestName : corpus;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(what + " not found: " + p.string());
}

synth::Manifest load_manifest(const fs::path& corpus) {
  const fs::path file = manifest_file(corpus);
  require_file(file, "corpus manifest");
  auto m = synth::read_manifest(file);
  synth::check_manifest(m);
  return m;
}

std::vector<nn::Tensor> split_frames(const synth::Manifest& m, const std::string& split) {
  std::vector<nn::Tensor> out;
  std::vector<std::string> seen;
  for (const auto& r : m.split(split)) {
    if (std::find(seen.begin(), seen.end(), r.lips) != seen.end()) continue;
    seen.push_back(r.lips);
    for (auto& f : synth::read_lip_frames(m.path(r.lips))) out.push_back(std::move(f));
  }
  return out;
}

std::vector<nn::Tensor> read_latent_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".eofp") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .eofp files in " + dir.string());
  std::vector<nn::Tensor> out;
  for (const auto& f : files) out.push_back(pipeline::dequantize_latent(eofp::deserialize(read_file_bytes(f))));
  return out;
}

std::string svg_chart(const std::vector<std::vector<std::string>>& rows) {
  // rows: snr_db, count, stoi_noisy, stoi_enh, ...
  const double w = 120.0 * static_cast<double>(rows.size()) + 80.0, h = 320.0, base = 280.0, scale = 240.0;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
    << "<text x=\"10\" y=\"20\" font-size=\"14\">STOI per SNR (grey noisy, blue enhanced)</text>\n"
    << "<line x1=\"40\" y1=\"" << base << "\" x2=\"" << w - 20 << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = 60.0 + 120.0 * static_cast<double>(i);
    const double vals[2] = {std::stod(rows[i][2]), std::stod(rows[i][3])};
    const char* colors[2] = {"#999999", "#3366cc"};
    for (int k = 0; k < 2; ++k) {
      const double bh = std::max(0.0, vals[k]) * scale;
      s << "<rect x=\"" << x + 40.0 * k << "\" y=\"" << base - bh << "\" width=\"36\" height=\"" << bh
        << "\" fill=\"" << colors[k] << "\"/>\n";
      s << "<text x=\"" << x + 40.0 * k << "\" y=\"" << base - bh - 4 << "\" font-size=\"10\">" << rows[i][2 + k]
        << "</text>\n";
    }
    s << "<text x=\"" << x + 20 << "\" y=\"" << base + 18 << "\" font-size=\"12\">" << rows[i][0]
      << " dB</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::vector<std::string>> read_csv_body(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() < 4) throw FormatError(file.string() + ": short row");
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lip-image audio-visual speech enhancement toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all");
  std::string config_doc;
  app.add_option("--config", config_doc,
                 "key=value file ('#' comments) applied before the flags; place after the subcommand");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic audio-visual corpus");
  synth::CorpusConfig corpus;
  std::string out_dir;
  // Comma lists are taken as single strings so a later flag replaces the whole list.
  std::string train_snrs = "-12,-6,0,6,12", test_snrs = "-1,-4,-7,-10";
  std::string train_noises = "white,pink", test_noises = "babble,engine,street,music";
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", corpus.master_seed, "Master seed");
  synth_cmd->add_option("--train-utts", corpus.n_train_utt, "Training utterances");
  synth_cmd->add_option("--test-utts", corpus.n_test_utt, "Test utterances");
  synth_cmd->add_option("--duration", corpus.duration_s, "Utterance length in seconds");
  synth_cmd->add_option("--fps", corpus.fps_v, "Lip video frame rate");
  synth_cmd->add_option("--train-snrs", train_snrs, "Training SNRs in dB, comma separated");
  synth_cmd->add_option("--test-snrs", test_snrs, "Test SNRs in dB, comma separated");
  synth_cmd->add_option("--train-noises", train_noises, "Training noise kinds, comma separated");
  synth_cmd->add_option("--test-noises", test_noises, "Test noise kinds, comma separated");

  // train-ae
  auto* ae_cmd = app.add_subcommand("train-ae", "Train the lip-image autoencoder");
  std::string corpus_path, out_path, log_path, state_path;
  visual::AeTrainConfig ae_cfg;
  ae_cmd->add_option("--corpus", corpus_path, "Corpus directory or manifest")->required();
  ae_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  ae_cmd->add_option("--log", log_path, "Training log CSV (default <out>.csv)");
  ae_cmd->add_option("--state", state_path, "Resume state file (default <out>.state)");
  ae_cmd->add_option("--epochs", ae_cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  ae_cmd->add_option("--lr", ae_cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  ae_cmd->add_option("--seed", ae_cfg.seed, "Seed");
  ae_cmd->add_option("--val-fraction", ae_cfg.val_fraction, "Validation fraction");
  ae_cmd->add_option("--patience", ae_cfg.patience, "Early-stop patience in epochs");
  ae_cmd->add_option("--stop-after-epoch", ae_cfg.stop_after_epoch, "End this run after the given epoch");

  // train-se
  auto* se_cmd = app.add_subcommand("train-se", "Train a speech-enhancement model");
  pipeline::SeTrainConfig se_cfg;
  std::string mode_name = "avse", ae_path;
  se_cmd->add_option("--corpus", corpus_path, "Corpus directory or manifest")->required();
  se_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  se_cmd->add_option("--mode", mode_name, "avse or audio_only");
  se_cmd->add_option("--ae", ae_path, "Autoencoder checkpoint (avse mode)");
  se_cmd->add_option("--log", log_path, "Training log CSV (default <out>.csv)");
  se_cmd->add_option("--state", state_path, "Resume state file (default <out>.state)");
  se_cmd->add_option("--epochs", se_cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  se_cmd->add_option("--lr", se_cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  se_cmd->add_option("--seed", se_cfg.seed, "Seed");
  se_cmd->add_option("--val-fraction", se_cfg.val_fraction, "Validation fraction");
  se_cmd->add_option("--patience", se_cfg.patience, "Early-stop patience in epochs");
  se_cmd->add_option("--mu", se_cfg.mu, "Visual loss weight");
  se_cmd->add_option("--quantize", se_cfg.quantize_visual, "Pass visual latents through EOFP");
  se_cmd->add_option("--stop-after-epoch", se_cfg.stop_after_epoch, "End this run after the given epoch");

  // compress
  auto* comp_cmd = app.add_subcommand("compress", "Encode lip frames into EOFP latent files");
  std::string frames_dir;
  comp_cmd->add_option("--ae", ae_path, "Autoencoder checkpoint")->required();
  comp_cmd->add_option("--frames", frames_dir, "Directory of NNNN.ppm lip frames")->required();
  comp_cmd->add_option("--out", out_dir, "Output directory for NNNN.eofp files")->required();

  // enhance
  auto* enh_cmd = app.add_subcommand("enhance", "Enhance one noisy utterance");
  std::string model_path, noisy_path, lips_dir, latents_dir;
  bool quantize = true;
  enh_cmd->add_option("--model", model_path, "Speech-enhancement checkpoint")->required();
  enh_cmd->add_option("--noisy", noisy_path, "Noisy WAV")->required();
  enh_cmd->add_option("--out", out_path, "Enhanced WAV to write")->required();
  enh_cmd->add_option("--ae", ae_path, "Autoencoder checkpoint (avse with --lips)");
  enh_cmd->add_option("--lips", lips_dir, "Lip frame directory");
  enh_cmd->add_option("--latents", latents_dir, "Directory of .eofp latents from compress");
  enh_cmd->add_option("--quantize", quantize, "Pass visual latents through EOFP");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Enhance and score the test split");
  bool save_enhanced = false;
  eval_cmd->add_option("--corpus", corpus_path, "Corpus directory or manifest")->required();
  eval_cmd->add_option("--model", model_path, "Speech-enhancement checkpoint")->required();
  eval_cmd->add_option("--out", out_dir, "Directory for report CSVs")->required();
  eval_cmd->add_option("--ae", ae_path, "Autoencoder checkpoint (avse mode)");
  eval_cmd->add_option("--quantize", quantize, "Pass visual latents through EOFP");
  eval_cmd->add_option("--save-enhanced", save_enhanced, "Write enhanced WAVs to <out>/enhanced");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "SVG bar chart from eval_snr.csv");
  std::string in_path;
  plot_cmd->add_option("--in", in_path, "Per-SNR CSV")->required();
  plot_cmd->add_option("--out", out_path, "SVG to write")->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  echo_config(*sub);
  auto default_path = [](const std::string& given, const std::string& base, const char* ext) {
    return fs::path(given.empty() ? base + ext : given);
  };

  try {
    if (sub == synth_cmd) {
      corpus.out_dir = out_dir;
      corpus.train_snrs_db = parse_numbers(train_snrs);
      corpus.test_snrs_db = parse_numbers(test_snrs);
      corpus.train_noise_kinds.clear();
      corpus.test_noise_kinds.clear();
      for (const auto& n : split_list(train_noises)) corpus.train_noise_kinds.push_back(synth::parse_noise_kind(n));
      for (const auto& n : split_list(test_noises)) corpus.test_noise_kinds.push_back(synth::parse_noise_kind(n));
      const auto m = synth::build_corpus(corpus);
      std::fprintf(stderr, "wrote %zu train and %zu test items to %s\n", m.split("train").size(),
                   m.split("test").size(), out_dir.c_str());
    } else if (sub == ae_cmd) {
      const auto m = load_manifest(corpus_path);
      const auto frames = split_frames(m, "train");
      ae_cfg.log_path = default_path(log_path, out_path, ".csv");
      ae_cfg.state_path = default_path(state_path, out_path, ".state");
      ae_cfg.on_epoch = print_epoch;
      std::fprintf(stderr, "training on %zu lip frames\n", frames.size());
      const auto r = visual::train_ae(frames, ae_cfg);
      r.model.save(out_path);
      const auto test = split_frames(m, "test");
      if (!test.empty()) {
        std::fprintf(stderr, "held-out reconstruction mse %.6g\n", visual::reconstruction_mse(r.model, test));
      }
    } else if (sub == se_cmd) {
      const se::Mode mode = se::parse_mode(mode_name);
      const auto m = load_manifest(corpus_path);
      std::optional<visual::AeModel> ae;
      if (mode == se::Mode::avse) {
        if (ae_path.empty()) throw UsageError("--ae is required in avse mode");
        require_file(ae_path, "autoencoder checkpoint");
        ae = visual::AeModel::load(ae_path);
      }
      se_cfg.log_path = default_path(log_path, out_path, ".csv");
      se_cfg.state_path = default_path(state_path, out_path, ".state");
      se_cfg.on_epoch = print_epoch;
      const auto r = pipeline::train_se(m, ae ? &*ae : nullptr, mode, se_cfg);
      r.model.save(out_path);
      if (r.interrupted) {
        std::fprintf(stderr, "stopped after epoch %zu; rerun to resume\n", r.history.size());
      } else {
        std::fprintf(stderr, "best epoch %d\n", r.best_epoch);
      }
    } else if (sub == comp_cmd) {
      require_file(ae_path, "autoencoder checkpoint");
      const auto ae = visual::AeModel::load(ae_path);
      const auto frames = synth::read_lip_frames(frames_dir);
      fs::create_directories(out_dir);
      std::size_t total = 0, payload = 0;
      for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto arr = pipeline::compress_frame(ae, frames[i]);
        const auto bytes = eofp::serialize(arr);
        auto name = synth::lip_frame_name(i);
        name.replace(name.size() - 4, 4, ".eofp");
        write_file_bytes(fs::path(out_dir) / name, bytes);
        total += bytes.size();
        payload += arr.packed.size();
      }
      const auto rep = eofp::compression_report(3 * visual::kImageSize * visual::kImageSize, visual::kLatentDim);
      std::printf("frames %zu\n", frames.size());
      std::printf("r_ae %g\nr_qua %g\nr_comp %g\n", rep.r_ae, rep.r_qua, rep.r_comp);
      std::printf("input_bytes_per_frame %zu\n", rep.input_bytes);
      std::printf("payload_bytes_per_frame %zu\n", frames.empty() ? 0 : payload / frames.size());
      std::printf("payload_bytes_total %zu\n", payload);
      std::printf("file_bytes_total %zu\n", total);
    } else if (sub == enh_cmd) {
      require_file(model_path, "model checkpoint");
      require_file(noisy_path, "noisy WAV");
      const auto model = se::SeModel::load(model_path);
      const auto noisy = audio::read_wav(noisy_path);
      std::vector<double> enhanced;
      if (model.mode() == se::Mode::audio_only) {
        enhanced = pipeline::enhance_with_latents(model, noisy.samples, {});
      } else if (!latents_dir.empty()) {
        enhanced = pipeline::enhance_with_latents(model, noisy.samples, read_latent_dir(latents_dir));
      } else {
        if (lips_dir.empty() || ae_path.empty()) throw UsageError("avse models need --latents or --lips with --ae");
        require_file(ae_path, "autoencoder checkpoint");
        const auto ae = visual::AeModel::load(ae_path);
        enhanced = pipeline::enhance_utterance(model, &ae, noisy.samples, synth::read_lip_frames(lips_dir), quantize);
      }
      audio::write_wav(out_path, enhanced, noisy.sample_rate);
    } else if (sub == eval_cmd) {
      require_file(model_path, "model checkpoint");
      const auto m = load_manifest(corpus_path);
      const auto model = se::SeModel::load(model_path);
      std::optional<visual::AeModel> ae;
      if (model.mode() == se::Mode::avse) {
        if (ae_path.empty()) throw UsageError("--ae is required for avse models");
        require_file(ae_path, "autoencoder checkpoint");
        ae = visual::AeModel::load(ae_path);
      }
      fs::create_directories(out_dir);
      pipeline::EvalOptions opt;
      opt.quantize = quantize;
      if (save_enhanced) {
        opt.enhanced_dir = fs::path(out_dir) / "enhanced";
        fs::create_directories(opt.enhanced_dir);
      }
      const auto rep = pipeline::evaluate(m, model, ae ? &*ae : nullptr, opt);
      const fs::path o(out_dir);
      pipeline::write_report(rep, o / "eval_rows.csv", o / "eval_snr.csv", o / "eval_overall.csv");
      std::printf("stoi noisy %.4f enhanced %.4f  si-sdr noisy %.3f enhanced %.3f (%zu items)\n",
                  rep.overall.stoi_noisy, rep.overall.stoi_enh, rep.overall.sisdr_noisy, rep.overall.sisdr_enh,
                  rep.overall.count);
    } else if (sub == plot_cmd) {
      const auto svg = svg_chart(read_csv_body(in_path));
      write_file_bytes(out_path, std::vector<std::uint8_t>(svg.begin(), svg.end()));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
