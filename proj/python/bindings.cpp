#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rfrl/checkpoint.hpp"
#include "rfrl/config.hpp"
#include "rfrl/explain.hpp"
#include "rfrl/gradcheck.hpp"
#include "rfrl/harness.hpp"
#include "rfrl/losses.hpp"
#include "rfrl/metrics.hpp"

namespace py = pybind11;
using namespace py::literals;

namespace {

using rfrl::Tensor;
using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FArray& a) {
    rfrl::Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
    py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict metrics_dict(const rfrl::Metrics& m) {
    return py::dict("accuracy"_a = m.accuracy, "sensitivity"_a = m.sensitivity, "specificity"_a = m.specificity,
                    "warnings"_a = m.warnings);
}

rfrl::LossSwitches switches(bool supervised, bool unsupervised, bool frs) { return {supervised, unsupervised, frs}; }

/// Model plus the experiment settings it was built from.
struct PyModel {
    rfrl::ExperimentConfig config;
    rfrl::RfrlModel<float> model;
};

PyModel build(const rfrl::ExperimentConfig& cfg, std::optional<std::uint64_t> seed) {
    cfg.validate();
    return {cfg, rfrl::build_model<float>(cfg.model, seed.value_or(cfg.seed))};
}

py::dict forward(const PyModel& m, const FArray& x, bool with_decoder) {
    rfrl::Tape<float> tape;
    const auto taps = rfrl::forward(m.model, tape, to_tensor(x), {.track_param_grads = false, .with_decoder = with_decoder});
    py::list enc, dec;
    for (const auto& v : taps.enc_feats) enc.append(to_array(v.value()));
    for (const auto& v : taps.dec_feats) dec.append(to_array(v.value()));
    py::dict out("logits"_a = to_array(taps.logits.value()), "probs"_a = to_array(taps.probs.value()),
                 "enc_feats"_a = enc, "dec_feats"_a = dec);
    out["recon"] = with_decoder ? py::object(to_array(taps.recon.value())) : py::none();
    return out;
}

py::dict loss_values(const PyModel& m, const FArray& x, const std::vector<std::size_t>& labels, bool supervised,
                     bool unsupervised, bool frs) {
    const Tensor<float> xt = to_tensor(x);
    if (xt.rank() != 4 || labels.size() != xt.dim(0)) {
        throw rfrl::ContractError("losses: need one label per image in x[B, C, H, W]");
    }
    std::vector<rfrl::Sample> samples;
    samples.reserve(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) samples.push_back({Tensor<float>({1}), labels[b]});
    auto [unused, y] = rfrl::make_batch<float>(samples, m.model.config.num_classes);
    (void)unused;
    rfrl::Tape<float> tape;
    const auto sw = switches(supervised, unsupervised, frs);
    const auto taps = rfrl::forward(m.model, tape, xt, {.track_param_grads = false, .with_decoder = sw.needs_decoder()});
    const auto rep = rfrl::total_loss(taps, tape.constant(y), sw, m.config.frs_norm);
    return py::dict("total"_a = rep.total_value, "l_sup"_a = rep.l_sup, "l_un"_a = rep.l_un, "l_frs"_a = rep.l_frs);
}

py::dict dataset_dict(const rfrl::Dataset& ds) {
    if (ds.size() == 0) return py::dict("images"_a = py::none(), "labels"_a = std::vector<std::size_t>{});
    rfrl::Shape shape{ds.size()};
    for (auto d : ds.samples.front().image.shape()) shape.push_back(d);
    Tensor<float> all(shape);
    const std::size_t per = ds.samples.front().image.size();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::copy(ds.samples[i].image.data().begin(), ds.samples[i].image.data().end(),
                  all.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return py::dict("images"_a = to_array(all), "labels"_a = ds.labels());
}

py::dict record_dict(const rfrl::RunRecord& rec) {
    py::list epochs;
    for (const auto& e : rec.epochs) {
        epochs.append(py::dict("epoch"_a = e.epoch, "lr"_a = e.lr, "train_total"_a = e.train.total,
                               "train_l_sup"_a = e.train.l_sup, "train_l_un"_a = e.train.l_un,
                               "train_l_frs"_a = e.train.l_frs, "train_acc"_a = e.train_acc,
                               "val_total"_a = e.val.total, "val_acc"_a = e.val_acc, "best"_a = e.best));
    }
    py::dict final_metrics;
    for (const auto& [split, m] : rec.final_metrics) final_metrics[py::str(split)] = metrics_dict(m);
    return py::dict("epochs"_a = epochs, "best_epoch"_a = rec.best_epoch, "metrics"_a = final_metrics);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Encoder-decoder classifier with feature similarity training";

    auto base = py::register_exception<rfrl::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<rfrl::ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<rfrl::ContractError>(m, "ContractError", base.ptr());
    py::register_exception<rfrl::NumericsError>(m, "NumericsError", base.ptr());
    py::register_exception<rfrl::ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<rfrl::FormatError>(m, "FormatError", base.ptr());
    py::register_exception<rfrl::DatasetError>(m, "DatasetError", base.ptr());

    py::class_<rfrl::ExperimentConfig>(m, "Config")
        .def(py::init<>())
        .def_static(
            "from_text", [](const std::string& text) { return rfrl::parse_config(text); }, "text"_a)
        .def_static("load", &rfrl::load_config, "path"_a)
        .def(
            "set",
            [](rfrl::ExperimentConfig& c, const std::string& key, const std::string& value) {
                rfrl::set_config_value(c, key, value);
            },
            "key"_a, "value"_a)
        .def("to_text", [](const rfrl::ExperimentConfig& c) { return rfrl::config_to_text(c); })
        .def("validate", &rfrl::ExperimentConfig::validate)
        .def_static("keys", &rfrl::config_keys)
        .def_readwrite("seed", &rfrl::ExperimentConfig::seed)
        .def_readwrite("epochs", &rfrl::ExperimentConfig::epochs)
        .def_readwrite("batch_size", &rfrl::ExperimentConfig::batch_size)
        .def("__repr__", [](const rfrl::ExperimentConfig& c) { return "<Config seed=" + std::to_string(c.seed) + ">"; });

    py::class_<PyModel>(m, "Model")
        .def(py::init(&build), "config"_a, "seed"_a = py::none())
        .def_static(
            "from_checkpoint",
            [](const std::string& path) {
                auto ck = rfrl::load_checkpoint(path);
                return PyModel{std::move(ck.config), std::move(ck.model)};
            },
            "path"_a)
        .def_readonly("config", &PyModel::config)
        .def("count_params", [](const PyModel& p) { return p.model.count_params(); })
        .def("parameters",
             [](const PyModel& p) {
                 py::dict out;
                 p.model.visit([&](const std::string& name, const Tensor<float>& t) { out[py::str(name)] = to_array(t); });
                 return out;
             })
        .def("forward", &forward, "x"_a, "with_decoder"_a = true)
        .def("losses", &loss_values, "x"_a, "labels"_a, "supervised"_a = true, "unsupervised"_a = true, "frs"_a = true)
        .def(
            "predict",
            [](const PyModel& p, const FArray& x) {
                rfrl::Tape<float> tape;
                const auto taps =
                    rfrl::forward(p.model, tape, to_tensor(x), {.track_param_grads = false, .with_decoder = false});
                const auto& probs = taps.probs.value();
                std::vector<std::size_t> out(probs.dim(0));
                for (std::size_t b = 0; b < out.size(); ++b) {
                    const float* row = probs.data().data() + b * probs.dim(1);
                    out[b] = static_cast<std::size_t>(std::max_element(row, row + probs.dim(1)) - row);
                }
                return out;
            },
            "x"_a)
        .def(
            "class_activation_map",
            [](const PyModel& p, const FArray& x, std::size_t class_idx, const std::string& stage,
               const std::string& method) {
                rfrl::CamMethod mth;
                if (method == "cam") {
                    mth = rfrl::CamMethod::gradcam;
                } else if (method == "campp") {
                    mth = rfrl::CamMethod::gradcam_pp;
                } else {
                    throw rfrl::ContractError("method must be 'cam' or 'campp', got '" + method + "'");
                }
                const auto model = p.model.cast<double>();
                const auto h = rfrl::class_activation_map(model, to_tensor(x).cast<double>(), class_idx,
                                                          rfrl::parse_cam_stage(stage), mth);
                return to_array(h.values);
            },
            "x"_a, "class_idx"_a, "stage"_a = "n", "method"_a = "cam");

    m.def(
        "confusion",
        [](const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels, std::size_t classes) {
            const auto cm = rfrl::confusion(preds, labels, classes);
            py::array_t<std::uint64_t> out({classes, classes});
            std::copy(cm.counts.begin(), cm.counts.end(), out.mutable_data());
            return out;
        },
        "preds"_a, "labels"_a, "classes"_a);
    m.def(
        "metrics",
        [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& cm) {
            if (cm.ndim() != 2 || cm.shape(0) != cm.shape(1)) throw rfrl::ContractError("metrics: need a square matrix");
            rfrl::ConfusionMatrix c{static_cast<std::size_t>(cm.shape(0)),
                                    std::vector<std::uint64_t>(cm.data(), cm.data() + cm.size())};
            return metrics_dict(rfrl::metrics(c));
        },
        "cm"_a);

    m.def(
        "synth",
        [](std::size_t per_class, std::uint64_t seed, bool ood, std::size_t image_size, double noise) {
            rfrl::SyntheticSpec spec;
            spec.per_class = per_class;
            spec.image_size = image_size;
            spec.noise = noise;
            spec.shift = ood ? rfrl::Shift::ood : rfrl::Shift::none;
            spec.validate();
            return dataset_dict(rfrl::synth_generate(spec, seed));
        },
        "per_class"_a, "seed"_a, "ood"_a = false, "image_size"_a = 32, "noise"_a = 0.05);

    m.def(
        "gradcheck",
        [](std::size_t seeds) {
            rfrl::GradcheckOptions opts;
            opts.seeds = seeds;
            py::list out;
            for (const auto& r : rfrl::run_gradcheck(rfrl::default_gradcheck_cases(), opts)) {
                out.append(py::dict("op"_a = r.op, "max_rel_err"_a = r.max_rel_err, "checked"_a = r.checked,
                                    "skipped"_a = r.skipped, "passed"_a = r.passed, "error"_a = r.error));
            }
            return out;
        },
        "seeds"_a = 20);

    m.def(
        "train",
        [](const rfrl::ExperimentConfig& cfg, const std::string& out_dir) {
            cfg.validate();
            rfrl::TrainOutcome outcome;
            {
                py::gil_scoped_release release;
                const auto data = rfrl::build_data(cfg);
                rfrl::TrainOptions opts;
                opts.out_dir = out_dir;
                outcome = rfrl::train_run(cfg, data, opts);
            }
            return py::make_tuple(PyModel{cfg, std::move(outcome.best_model)}, record_dict(outcome.record));
        },
        "config"_a, "out_dir"_a = "");
}
