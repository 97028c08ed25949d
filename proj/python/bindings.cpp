#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "s2pec/checkpoint.hpp"
#include "s2pec/commands.hpp"
#include "s2pec/data.hpp"
#include "s2pec/error.hpp"
#include "s2pec/features.hpp"
#include "s2pec/kvconfig.hpp"
#include "s2pec/losses.hpp"
#include "s2pec/metrics.hpp"
#include "s2pec/model.hpp"
#include "s2pec/toy.hpp"
#include "s2pec/training.hpp"

namespace py = pybind11;
using namespace s2pec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Waveform to_waveform(const Array& a) {
  if (a.ndim() != 1) throw py::value_error("waveform must be one-dimensional");
  Waveform w;
  w.samples.assign(a.data(), a.data() + a.size());
  return w;
}

KvConfig kv_from_dict(const std::map<std::string, std::string>& d) {
  KvConfig kv;
  for (const auto& [k, v] : d) kv.set(k, v);
  return kv;
}

std::vector<ScoreRecord> records(const std::vector<double>& bona, const std::vector<double>& spoof) {
  std::vector<ScoreRecord> r;
  for (double s : bona) r.push_back({"", s, Label::kBonafide, "-"});
  for (double s : spoof) r.push_back({"", s, Label::kSpoof, "A"});
  return r;
}

// Adds a leading batch axis to a (C, F, T) array.
Tensor batched(const Array& a) {
  if (a.ndim() != 3) throw py::value_error("expected a (C, F, T) array");
  Tensor t = to_tensor(a);
  return reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)});
}

Array unbatched(const Tensor& t) { return to_array(reshape(t, {t.dim(1), t.dim(2), t.dim(3)})); }

class PyModel {
 public:
  explicit PyModel(std::unique_ptr<S2pecNet> net) : net_(std::move(net)) { net_->set_training(false); }

  py::dict forward(const Array& waves) {
    if (waves.ndim() != 2) throw py::value_error("expected a (batch, samples) array");
    std::vector<Waveform> ws;
    for (py::ssize_t i = 0; i < waves.shape(0); ++i) {
      Waveform w;
      w.samples.assign(waves.data() + i * waves.shape(1), waves.data() + (i + 1) * waves.shape(1));
      ws.push_back(std::move(w));
    }
    std::vector<const Waveform*> ptrs;
    for (const auto& w : ws) ptrs.push_back(&w);
    NoGradGuard ng;
    const ModelOutput out = net_->forward(ptrs);
    py::dict d;
    d["logit"] = to_array(out.logit);
    d["fused"] = to_array(out.fused);
    if (out.h_raw.defined()) d["h_raw"] = to_array(out.h_raw);
    if (out.h_power.defined()) d["h_power"] = to_array(out.h_power);
    if (out.recon_raw) d["recon_raw"] = to_array(*out.recon_raw);
    if (out.recon_power) d["recon_power"] = to_array(*out.recon_power);
    if (out.raw_input.defined()) d["raw_input"] = to_array(out.raw_input);
    if (out.power_input.defined()) d["power_input"] = to_array(out.power_input);
    if (out.attention) {
      d["attention_spectral"] = to_array(out.attention->spectral);
      d["attention_temporal"] = to_array(out.attention->temporal);
      d["attention"] = to_array(out.attention->combined);
    }
    return d;
  }

  std::map<std::string, std::string> config() const { return model_config_to_kv(net_->config()).values(); }
  int64_t parameter_count() const { return net_->parameter_count(); }
  void save(const std::filesystem::path& p) const { save_checkpoint(p, *net_); }

 private:
  std::unique_ptr<S2pecNet> net_;
};

}  // namespace

PYBIND11_MODULE(_s2pec, m) {
  m.doc() = "Dual-spectrogram anti-spoofing toolkit";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<TrainingAbort>(m, "TrainingAbort", PyExc_RuntimeError);

  m.def(
      "load_waveform",
      [](const std::filesystem::path& p, int64_t target_len) { return load_waveform(p, target_len).samples; },
      py::arg("path"), py::arg("target_len") = kDefaultTargetLength);

  m.def(
      "lfcc", [](const Array& w) { return to_array(lfcc(to_waveform(w)).values); }, py::arg("waveform"),
      "60 x frames LFCC with deltas (20 ms / 10 ms framing)");
  m.def(
      "sinc_frontend",
      [](const Array& w, const std::map<std::string, std::string>& cfg) {
        const ModelConfig mc = model_config_from_kv(kv_from_dict(cfg));
        SincFrontend fe(mc.sinc);
        NoGradGuard ng;
        return to_array(sinc_frontend(to_waveform(w), fe).values);
      },
      py::arg("waveform"), py::arg("config") = std::map<std::string, std::string>{});

  m.def("tsf_pool", [](const Array& h) {
    const TsfContext c = tsf_pool(batched(h));
    return py::make_tuple(unbatched(c.spectral), unbatched(c.temporal));
  });
  m.def("combine_attention", [](const Array& s, const Array& t) {
    return unbatched(combine_attention(batched(s), batched(t)));
  });
  m.def("apply_attention", [](const Array& a, const Array& h) {
    AttentionMap am;
    am.combined = batched(a);
    return unbatched(apply_attention(am, batched(h)));
  });

  m.def(
      "recon_loss",
      [](const Array& x_hat, const Array& x, const std::string& norm) {
        if (x_hat.ndim() != x.ndim() ||
            !std::equal(x_hat.shape(), x_hat.shape() + x_hat.ndim(), x.shape())) {
          throw ContractError("recon_loss: shape mismatch");
        }
        return recon_loss(std::span<const double>(x_hat.data(), x_hat.size()),
                          std::span<const double>(x.data(), x.size()), recon_norm_from_string(norm));
      },
      py::arg("x_hat"), py::arg("x"), py::arg("norm") = "l1");
  m.def(
      "wbce",
      [](const std::vector<double>& y_hat, const std::vector<double>& y, double w_pos, double w_neg) {
        return wbce(y_hat, y, w_pos, w_neg);
      },
      py::arg("y_hat"), py::arg("y"), py::arg("w_pos"), py::arg("w_neg"));
  m.def(
      "total_loss",
      [](double l1, double l2, double lcls, double alpha) {
        const LossBreakdown b = total_loss(l1, l2, lcls, alpha);
        py::dict d;
        d["l_recon_raw"] = b.l_recon_raw;
        d["l_recon_power"] = b.l_recon_power;
        d["l_cls"] = b.l_cls;
        d["alpha"] = b.alpha;
        d["total"] = b.total;
        return d;
      },
      py::arg("l1"), py::arg("l2"), py::arg("lcls"), py::arg("alpha") = 0.1);
  m.def("default_class_weights", [] {
    const ClassWeights w = default_class_weights();
    return py::make_tuple(w.bonafide, w.spoof);
  });

  m.def(
      "compute_eer",
      [](const std::vector<double>& bona, const std::vector<double>& spoof) {
        const EerResult r = compute_eer(records(bona, spoof));
        return py::make_tuple(r.eer, r.threshold);
      },
      py::arg("bonafide"), py::arg("spoof"));
  m.def(
      "compute_min_tdcf",
      [](const std::vector<double>& bona, const std::vector<double>& spoof,
         const std::map<std::string, std::string>& params) {
        const TdcfResult r = compute_min_tdcf(records(bona, spoof), tdcf_params_from_kv(kv_from_dict(params)));
        return py::make_tuple(r.min_tdcf, r.threshold);
      },
      py::arg("bonafide"), py::arg("spoof"), py::arg("params") = std::map<std::string, std::string>{});
  m.def(
      "per_attack_breakdown",
      [](const std::vector<std::tuple<double, std::string>>& trials) {
        std::vector<ScoreRecord> r;
        for (const auto& [s, a] : trials) r.push_back({"", s, a == "-" ? Label::kBonafide : Label::kSpoof, a});
        return per_attack_breakdown(r);
      },
      py::arg("trials"), "trials: (score, attack_id) pairs, attack '-' for bona fide");

  m.def("parse_protocol", [](const std::filesystem::path& p) {
    std::vector<std::tuple<std::string, std::string, std::string, std::string, std::string>> out;
    for (const auto& e : parse_protocol(p)) {
      out.emplace_back(e.speaker_id, e.utt_id, e.system_id, e.attack_id, to_string(e.key));
    }
    return out;
  });
  m.def("partition_stats", [](const std::filesystem::path& p) {
    const PartitionStats s = partition_stats(parse_protocol(p));
    py::dict d;
    d["bonafide"] = s.bonafide;
    d["spoof"] = s.spoof;
    d["per_attack"] = s.per_attack;
    return d;
  });
  m.def(
      "synth_toy_dataset",
      [](const std::filesystem::path& out_dir, uint64_t seed, const std::map<std::string, std::string>& cfg) {
        const auto parts = synth_toy_dataset(toy_config_from_kv(kv_from_dict(cfg)), seed, out_dir);
        std::map<std::string, std::filesystem::path> protocols;
        for (const auto& [p, man] : parts) {
          if (!man.entries.empty()) protocols[to_string(p)] = toy_protocol_path(out_dir, p);
        }
        return protocols;
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("config") = std::map<std::string, std::string>{});

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::map<std::string, std::string>& cfg) {
             return PyModel(std::make_unique<S2pecNet>(model_config_from_kv(kv_from_dict(cfg))));
           }),
           py::arg("config") = std::map<std::string, std::string>{})
      .def_static("load", [](const std::filesystem::path& p) { return PyModel(load_checkpoint(p).net); })
      .def("forward", &PyModel::forward, py::arg("waveforms"))
      .def("config", &PyModel::config)
      .def("parameter_count", &PyModel::parameter_count)
      .def("save", &PyModel::save);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr)");
}
