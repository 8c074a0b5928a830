#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lavse/audio.hpp"
#include "lavse/eofp.hpp"
#include "lavse/metrics.hpp"
#include "lavse/pipeline.hpp"

namespace py = pybind11;
using namespace lavse;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

nn::Tensor to_tensor(const DoubleArray& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return nn::Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> tensor_array(const nn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<nn::Tensor> to_frames(const DoubleArray& frames) {
  if (frames.ndim() != 4) throw py::value_error("lip frames must be [N, 3, 64, 64]");
  std::vector<nn::Tensor> out;
  const std::size_t per = static_cast<std::size_t>(frames.shape(1) * frames.shape(2) * frames.shape(3));
  for (py::ssize_t i = 0; i < frames.shape(0); ++i) {
    const double* p = frames.data() + static_cast<std::size_t>(i) * per;
    out.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(frames.shape(1)),
                                              static_cast<std::size_t>(frames.shape(2)),
                                              static_cast<std::size_t>(frames.shape(3))},
                     std::vector<double>(p, p + per));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_lavse, m) {
  m.doc() = "Lip-image audio-visual speech enhancement core";

  py::register_exception<Error>(m, "LavseError", PyExc_RuntimeError);

  // Codec
  m.def(
      "eofp_encode",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> values) {
        std::vector<std::uint32_t> shape(values.shape(), values.shape() + values.ndim());
        std::span<const float> v(values.data(), static_cast<std::size_t>(values.size()));
        const bool zero = std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
        const auto arr = zero ? eofp::zero_array(shape) : eofp::encode_array(v, shape);
        const auto bytes = eofp::serialize(arr);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("values"), "Encode a float array into an EOFP container (bytes).");
  m.def(
      "eofp_decode",
      [](py::bytes data) {
        const std::string s = data;
        const auto arr = eofp::deserialize(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        const auto v = eofp::decode_array(arr);
        std::vector<py::ssize_t> shape(arr.shape.begin(), arr.shape.end());
        py::array_t<float> out(shape);
        std::copy(v.begin(), v.end(), out.mutable_data());
        return out;
      },
      py::arg("data"), "Decode an EOFP container into a float32 array.");
  m.def("compression_report", [] {
    const auto r = eofp::compression_report(3 * visual::kImageSize * visual::kImageSize, visual::kLatentDim);
    return py::dict(py::arg("r_ae") = r.r_ae, py::arg("r_qua") = r.r_qua, py::arg("r_comp") = r.r_comp,
                    py::arg("input_bytes") = r.input_bytes, py::arg("output_bytes") = r.output_bytes);
  });

  // Audio and metrics
  m.def(
      "log1p_features", [](const DoubleArray& wave) { return tensor_array(audio::log1p_mag(audio::stft(to_vector(wave)))); },
      py::arg("wave"), "log1p STFT magnitudes, [frames, 257].");
  m.def(
      "stoi", [](const DoubleArray& c, const DoubleArray& p, int fs) { return metrics::stoi(to_vector(c), to_vector(p), fs); },
      py::arg("clean"), py::arg("processed"), py::arg("fs") = 16000);
  m.def(
      "si_sdr", [](const DoubleArray& c, const DoubleArray& e) { return metrics::si_sdr(to_vector(c), to_vector(e)); },
      py::arg("clean"), py::arg("estimate"));
  m.def(
      "measure_snr",
      [](const DoubleArray& c, const DoubleArray& n, int fs) { return metrics::measure_snr(to_vector(c), to_vector(n), fs); },
      py::arg("clean"), py::arg("noisy"), py::arg("fs") = 16000);

  // Synthesis
  m.def(
      "gen_clean", [](std::uint64_t seed, double dur, int fs) { return to_array(synth::gen_clean(seed, dur, fs)); },
      py::arg("seed"), py::arg("duration_s") = 3.0, py::arg("fs") = 16000);
  m.def(
      "gen_noise",
      [](const std::string& kind, std::uint64_t seed, double dur, int fs) {
        return to_array(synth::gen_noise(synth::parse_noise_kind(kind), seed, dur, fs));
      },
      py::arg("kind"), py::arg("seed"), py::arg("duration_s") = 3.0, py::arg("fs") = 16000);
  m.def(
      "mix_at_snr",
      [](const DoubleArray& clean, const DoubleArray& noise, double snr, int fs) {
        const auto r = synth::mix_at_snr(to_vector(clean), to_vector(noise), snr, fs);
        return py::make_tuple(to_array(r.noisy), r.alpha, r.gain);
      },
      py::arg("clean"), py::arg("noise"), py::arg("snr_db"), py::arg("fs") = 16000,
      "Returns (noisy, alpha, gain).");
  m.def(
      "build_corpus",
      [](const std::filesystem::path& out, std::uint64_t seed, int n_train, int n_test, double duration_s,
         std::vector<double> train_snrs, std::vector<double> test_snrs) {
        synth::CorpusConfig c;
        c.out_dir = out;
        c.master_seed = seed;
        c.n_train_utt = n_train;
        c.n_test_utt = n_test;
        c.duration_s = duration_s;
        if (!train_snrs.empty()) c.train_snrs_db = std::move(train_snrs);
        if (!test_snrs.empty()) c.test_snrs_db = std::move(test_snrs);
        return synth::build_corpus(c).records.size();
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("n_train") = 40, py::arg("n_test") = 12,
      py::arg("duration_s") = 3.0, py::arg("train_snrs") = std::vector<double>{},
      py::arg("test_snrs") = std::vector<double>{}, "Writes a corpus; returns the number of noisy items.");
  m.def(
      "read_lip_frames",
      [](const std::filesystem::path& dir) {
        const auto frames = synth::read_lip_frames(dir);
        py::array_t<double> out({static_cast<py::ssize_t>(frames.size()), py::ssize_t{3}, py::ssize_t{64}, py::ssize_t{64}});
        double* p = out.mutable_data();
        for (const auto& f : frames) p = std::copy(f.data().begin(), f.data().end(), p);
        return out;
      },
      py::arg("dir"));

  // Models
  py::class_<visual::AeModel>(m, "AeModel")
      .def_static("create", &visual::AeModel::create, py::arg("seed"))
      .def_static("load", &visual::AeModel::load, py::arg("path"))
      .def("save", &visual::AeModel::save, py::arg("path"))
      .def(
          "encode", [](const visual::AeModel& ae, const DoubleArray& img) { return tensor_array(ae.encode(to_tensor(img))); },
          py::arg("image"), "[3,64,64] image in [0,1] -> [32,8,8] latent.")
      .def(
          "decode", [](const visual::AeModel& ae, const DoubleArray& z) { return tensor_array(ae.decode(to_tensor(z))); },
          py::arg("latent"))
      .def(
          "compress",
          [](const visual::AeModel& ae, const DoubleArray& img) {
            const auto bytes = eofp::serialize(pipeline::compress_frame(ae, to_tensor(img)));
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
          },
          py::arg("image"), "Encode and quantize one frame into an EOFP container.");

  py::class_<se::SeModel>(m, "SeModel")
      .def_static(
          "create", [](const std::string& mode, std::uint64_t seed) { return se::SeModel::create(se::parse_mode(mode), seed); },
          py::arg("mode"), py::arg("seed"))
      .def_static("load", &se::SeModel::load, py::arg("path"))
      .def("save", &se::SeModel::save, py::arg("path"))
      .def_property_readonly("mode", [](const se::SeModel& s) { return std::string(se::to_string(s.mode())); })
      .def_property_readonly("param_count", &se::SeModel::param_count)
      .def(
          "enhance",
          [](const se::SeModel& s, const DoubleArray& noisy, const visual::AeModel* ae, std::optional<DoubleArray> lips,
             bool quantize) {
            const auto frames = lips ? to_frames(*lips) : std::vector<nn::Tensor>{};
            return to_array(pipeline::enhance_utterance(s, ae, to_vector(noisy), frames, quantize));
          },
          py::arg("noisy"), py::arg("ae") = nullptr, py::arg("lips") = std::nullopt, py::arg("quantize") = true,
          "Enhance a 16 kHz waveform; avse models need ae and lips [N,3,64,64].");

  m.def(
      "train_se",
      [](const std::filesystem::path& manifest, const visual::AeModel* ae, const std::string& mode, int epochs,
         std::uint64_t seed, double lr) {
        pipeline::SeTrainConfig cfg;
        cfg.epochs = epochs;
        cfg.seed = seed;
        cfg.lr = lr;
        auto r = pipeline::train_se(synth::read_manifest(manifest), ae, se::parse_mode(mode), cfg);
        py::list losses;
        for (const auto& e : r.history) losses.append(py::make_tuple(e.train_loss, e.val_loss));
        return py::make_tuple(std::move(r.model), losses);
      },
      py::arg("manifest"), py::arg("ae"), py::arg("mode") = "avse", py::arg("epochs") = 60, py::arg("seed") = 0,
      py::arg("lr") = 5e-5, "Returns (model, [(train_loss, val_loss), ...]).");
  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest, const se::SeModel& s, const visual::AeModel* ae, bool quantize) {
        pipeline::EvalOptions opt;
        opt.quantize = quantize;
        const auto rep = pipeline::evaluate(synth::read_manifest(manifest), s, ae, opt);
        py::list rows;
        for (const auto& r : rep.rows) {
          rows.append(py::dict(py::arg("id") = r.id, py::arg("snr_db") = r.snr_db, py::arg("noise") = r.noise,
                               py::arg("stoi_noisy") = r.stoi_noisy, py::arg("stoi_enh") = r.stoi_enh,
                               py::arg("sisdr_noisy") = r.sisdr_noisy, py::arg("sisdr_enh") = r.sisdr_enh));
        }
        return rows;
      },
      py::arg("manifest"), py::arg("model"), py::arg("ae") = nullptr, py::arg("quantize") = true);
}
