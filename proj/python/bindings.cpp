// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "satcn/audio.hpp"
#include "satcn/dsp.hpp"
#include "satcn/metrics.hpp"
#include "satcn/model.hpp"
#include "satcn/train.hpp"

namespace py = pybind11;
using namespace satcn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a, const char* what) {
  if (a.ndim() != 1) throw std::invalid_argument(std::string(what) + " must be one-dimensional");
  return {a.data(), a.data() + a.size()};
}

Tensor to_tensor(const Array& a, const char* what) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(what) + " must be two-dimensional");
  return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  return py::array_t<double>(shape, t.values().data());
}

dsp::Waveform waveform(const Array& a, int rate) { return {to_vector(a, "waveform"), rate}; }

std::vector<train::Utterance> utterances(const std::vector<std::pair<Array, Array>>& pairs, int rate) {
  std::vector<train::Utterance> out;
  for (const auto& [noisy, clean] : pairs) out.push_back({waveform(noisy, rate), waveform(clean, rate)});
  return out;
}

py::dict losses_dict(const StageLosses& l) {
  py::dict d;
  d["per_stage"] = l.per_stage;
  d["total"] = l.total;
  return d;
}

// Model plus the optimizer state that travels with it through fit and save.
struct PyModel {
  MultiStageModel model;
  std::optional<train::AdamState> state;

  Parameter& param(const std::string& name) {
    const auto i = model.store().index_of(name);
    if (!i) throw py::key_error("no parameter named " + name);
    return model.store()[*i];
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-stage self-attentive TCN speech enhancement";

  py::register_exception<train::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<audio::WavError>(m, "WavError", PyExc_ValueError);
  py::register_exception<train::TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);
  py::register_exception<dsp::DegenerateCoverage>(m, "DegenerateCoverage", PyExc_ValueError);

  m.def("hann_window", [](std::size_t n) { return to_array(dsp::hann_window(n).coefficients); }, py::arg("n"));
  m.def("frame_count", &dsp::frame_count, py::arg("length"), py::arg("fft_size"), py::arg("hop"));
  m.def("receptive_field", &receptive_field, py::arg("kernel"), py::arg("blocks"));
  m.def(
      "stft",
      [](const Array& x, std::size_t fft_size, std::size_t hop) {
        const auto [mag, phase] = dsp::stft(waveform(x, 16000), dsp::hann_window(fft_size, hop));
        return py::make_tuple(to_array(mag.values), to_array(phase.values));
      },
      py::arg("x"), py::arg("fft_size") = 512, py::arg("hop") = 256);
  m.def(
      "istft",
      [](const Array& mag, const Array& phase, std::size_t length, std::size_t fft_size, std::size_t hop,
         std::optional<Array> reference) {
        const auto win = dsp::hann_window(fft_size, hop);
        dsp::Spectrogram s{to_tensor(mag, "mag"), hop, fft_size};
        dsp::PhaseMatrix p{to_tensor(phase, "phase")};
        std::vector<double> ref;
        if (reference) ref = to_vector(*reference, "reference");
        return to_array(dsp::istft(s, p, win, length, 16000, ref).samples);
      },
      py::arg("mag"), py::arg("phase"), py::arg("length"), py::arg("fft_size") = 512, py::arg("hop") = 256,
      py::arg("reference") = py::none());

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::size_t stages, std::size_t hidden, std::size_t bottleneck, std::size_t stacks,
                       std::size_t blocks, std::size_t kernel, std::size_t fft_size, std::size_t hop,
                       std::uint64_t seed) {
             ModelConfig c{stages, hidden, bottleneck, stacks, blocks, kernel, fft_size, hop, seed};
             c.validate();
             return c;
           }),
           py::arg("stages") = 5, py::arg("hidden") = 256, py::arg("bottleneck") = 128, py::arg("stacks") = 3,
           py::arg("blocks") = 8, py::arg("kernel") = 3, py::arg("fft_size") = 512, py::arg("hop") = 256,
           py::arg("seed") = 0)
      .def_readwrite("stages", &ModelConfig::stages)
      .def_readwrite("hidden", &ModelConfig::hidden)
      .def_readwrite("bottleneck", &ModelConfig::bottleneck)
      .def_readwrite("stacks", &ModelConfig::stacks)
      .def_readwrite("blocks", &ModelConfig::blocks)
      .def_readwrite("kernel", &ModelConfig::kernel)
      .def_readwrite("fft_size", &ModelConfig::fft_size)
      .def_readwrite("hop", &ModelConfig::hop)
      .def_readwrite("seed", &ModelConfig::seed)
      .def_property_readonly("bins", &ModelConfig::bins)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  py::class_<train::TrainConfig>(m, "TrainConfig")
      .def(py::init([](double lr, std::size_t batch, std::size_t epochs, std::uint64_t seed,
                       std::optional<double> clip_norm, std::size_t max_steps, double beta1, double beta2,
                       double eps) {
             train::TrainConfig c{lr, beta1, beta2, eps, batch, epochs, seed, clip_norm, max_steps};
             c.validate();
             return c;
           }),
           py::arg("lr") = 2e-4, py::arg("batch") = 16, py::arg("epochs") = 1, py::arg("seed") = 0,
           py::arg("clip_norm") = py::none(), py::arg("max_steps") = 0, py::arg("beta1") = 0.9,
           py::arg("beta2") = 0.999, py::arg("eps") = 1e-8)
      .def_readwrite("lr", &train::TrainConfig::lr)
      .def_readwrite("batch", &train::TrainConfig::batch)
      .def_readwrite("epochs", &train::TrainConfig::epochs)
      .def_readwrite("seed", &train::TrainConfig::seed)
      .def_readwrite("clip_norm", &train::TrainConfig::clip_norm)
      .def_readwrite("max_steps", &train::TrainConfig::max_steps);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const ModelConfig& c) { return PyModel{build_model(c), std::nullopt}; }),
           py::arg("config") = ModelConfig{})
      .def_property_readonly("config", [](const PyModel& p) { return p.model.config(); })
      .def("parameter_names",
           [](const PyModel& p) {
             std::vector<std::string> names;
             for (std::size_t i = 0; i < p.model.store().size(); ++i) names.push_back(p.model.store()[i].name);
             return names;
           })
      .def("get_parameter", [](PyModel& p, const std::string& name) { return to_array(p.param(name).value); },
           py::arg("name"))
      .def(
          "set_parameter",
          [](PyModel& p, const std::string& name, const Array& value) {
            Parameter& param = p.param(name);
            if (static_cast<std::size_t>(value.size()) != param.value.size()) {
              throw std::invalid_argument("size mismatch for " + name);
            }
            for (std::size_t i = 0; i < param.value.size(); ++i) param.value[i] = nn::storage_precision(value.data()[i]);
          },
          py::arg("name"), py::arg("value"))
      .def("parameter_counts",
           [](const PyModel& p) {
             const auto c = count_parameters(p.model);
             py::dict d;
             d["self_attention"] = c.self_attention;
             d["tcn_blocks"] = c.tcn_blocks;
             d["stage_glue"] = c.stage_glue;
             d["stage"] = c.stage;
             d["fusion"] = c.fusion;
             d["stages"] = c.stages;
             d["fusions"] = c.fusions;
             d["total"] = c.total;
             return d;
           })
      .def(
          "forward",
          [](const PyModel& p, const Array& mag, bool unit_masks) {
            ForwardOptions opts;
            opts.unit_masks = unit_masks;
            const auto trace = forward(p.model, to_tensor(mag, "magnitude"), opts);
            py::list masks, estimates;
            for (const auto& t : trace.masks) masks.append(to_array(t));
            for (const auto& t : trace.estimates) estimates.append(to_array(t));
            py::dict d;
            d["masks"] = masks;
            d["estimates"] = estimates;
            return d;
          },
          py::arg("magnitude"), py::arg("unit_masks") = false)
      .def(
          "enhance",
          [](const PyModel& p, const Array& noisy, int sample_rate) {
            const auto w = waveform(noisy, sample_rate);
            dsp::Waveform out;
            {
              py::gil_scoped_release release;
              out = enhance(p.model, w);
            }
            return to_array(out.samples);
          },
          py::arg("noisy"), py::arg("sample_rate") = 16000)
      .def(
          "fit",
          [](PyModel& p, const std::vector<std::pair<Array, Array>>& pairs, const train::TrainConfig& config,
             int sample_rate) {
            const auto data = utterances(pairs, sample_rate);
            train::AdamState state = p.state.value_or(train::AdamState{});
            train::TrainingLog log;
            {
              py::gil_scoped_release release;
              log = train::fit(p.model, state, data, config);
            }
            p.state = std::move(state);
            py::list steps, epochs;
            for (const auto& s : log.steps) {
              py::dict d = losses_dict(s.losses);
              d["epoch"] = s.epoch;
              d["step"] = s.step;
              steps.append(d);
            }
            for (const auto& e : log.epochs) {
              py::dict d = losses_dict(e.mean);
              d["epoch"] = e.epoch;
              epochs.append(d);
            }
            py::dict out;
            out["steps"] = steps;
            out["epochs"] = epochs;
            return out;
          },
          py::arg("pairs"), py::arg("config"), py::arg("sample_rate") = 16000,
          "Train on (noisy, clean) waveform pairs; optimizer state persists across calls.")
      .def(
          "save",
          [](const PyModel& p, const std::filesystem::path& path) {
            train::save_checkpoint(p.model, p.state ? &*p.state : nullptr, path);
          },
          py::arg("path"))
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            auto loaded = train::load_checkpoint(path);
            return PyModel{std::move(loaded.model), std::move(loaded.state)};
          },
          py::arg("path"));

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        const auto w = audio::read_wav(path);
        return py::make_tuple(to_array(w.samples), w.sample_rate);
      },
      py::arg("path"));
  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const Array& samples, int sample_rate) {
        return audio::write_wav(path, waveform(samples, sample_rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"), "Returns the number of clipped samples.");
  m.def(
      "mix_at_snr",
      [](const Array& clean, const Array& noise, double snr_db, std::size_t offset) {
        return to_array(audio::mix_at_snr(waveform(clean, 16000), waveform(noise, 16000), snr_db, offset).samples);
      },
      py::arg("clean"), py::arg("noise"), py::arg("snr_db"), py::arg("noise_offset") = 0);
  m.def(
      "synth_toy_dataset",
      [](std::size_t n, std::uint64_t seed, double duration, int sample_rate, std::vector<double> snrs) {
        audio::ToyDatasetConfig c;
        c.count = n;
        c.duration_s = duration;
        c.sample_rate = sample_rate;
        c.snrs_db = std::move(snrs);
        py::list items;
        for (const auto& it : audio::synth_toy_dataset(c, seed)) {
          py::dict d;
          d["clean"] = to_array(it.clean.samples);
          d["noise"] = to_array(it.noise.samples);
          d["noisy"] = to_array(it.noisy.samples);
          d["snr_db"] = it.snr_db;
          items.append(d);
        }
        return items;
      },
      py::arg("n") = 8, py::arg("seed") = 0, py::arg("duration") = 0.5, py::arg("sample_rate") = 8000,
      py::arg("snrs") = std::vector<double>{0.0, 5.0});

  m.def(
      "si_sdr", [](const Array& est, const Array& ref) {
        return metrics::si_sdr(to_vector(est, "estimate"), to_vector(ref, "reference"));
      },
      py::arg("estimate"), py::arg("reference"));
  m.def(
      "snr_db", [](const Array& est, const Array& ref) {
        return metrics::snr_db(to_vector(est, "estimate"), to_vector(ref, "reference"));
      },
      py::arg("estimate"), py::arg("reference"));
  m.def(
      "evaluate",
      [](const PyModel& p, const std::vector<std::pair<Array, Array>>& pairs, int sample_rate) {
        const auto data = utterances(pairs, sample_rate);
        metrics::MetricReport r;
        {
          py::gil_scoped_release release;
          r = metrics::evaluate_set(p.model, data);
        }
        py::list items;
        for (const auto& it : r.items) {
          py::dict d;
          d["noisy_si_sdr"] = it.noisy_si_sdr;
          d["enhanced_si_sdr"] = it.enhanced_si_sdr;
          d["noisy_snr"] = it.noisy_snr;
          d["enhanced_snr"] = it.enhanced_snr;
          d["spectral_l1"] = it.spectral_l1;
          items.append(d);
        }
        py::dict d;
        d["items"] = items;
        d["mean_noisy_si_sdr"] = r.mean_noisy_si_sdr;
        d["mean_enhanced_si_sdr"] = r.mean_enhanced_si_sdr;
        d["si_sdr_improvement"] = r.si_sdr_improvement();
        d["mean_noisy_snr"] = r.mean_noisy_snr;
        d["mean_enhanced_snr"] = r.mean_enhanced_snr;
        d["mean_spectral_l1"] = r.mean_spectral_l1;
        d["tsv"] = metrics::format_tsv(r);
        d["summary"] = metrics::format_summary(r);
        return d;
      },
      py::arg("model"), py::arg("pairs"), py::arg("sample_rate") = 16000,
      "SI-SDR, SNR and per-stage spectral L1 over (noisy, clean) pairs.");
}
