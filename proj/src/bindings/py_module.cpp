#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "conformal_ts/calibrator.hpp"
#include "conformal_ts/commands.hpp"
#include "conformal_ts/errors.hpp"
#include "conformal_ts/metrics.hpp"
#include "conformal_ts/quantile_net.hpp"
#include "conformal_ts/stats.hpp"
#include "conformal_ts/synth.hpp"
#include "conformal_ts/tensor_io.hpp"

namespace py = pybind11;

namespace {

using cts::Tensor;

Tensor np_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() < 1 || a.ndim() > 8)
        throw cts::DimensionError("array rank must be 1..8");
    std::vector<std::size_t> dims(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t k = 0; k < a.ndim(); ++k) {
        if (a.shape(k) <= 0)
            throw cts::DimensionError("array dimensions must be positive");
        dims[static_cast<std::size_t>(k)] = static_cast<std::size_t>(a.shape(k));
    }
    Tensor t(dims);
    std::copy(a.data(), a.data() + a.size(), t.values().begin());
    return t;
}

py::array_t<double> tensor_to_np(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (std::size_t d : t.dims())
        shape.push_back(static_cast<py::ssize_t>(d));
    py::array_t<double> a(shape);
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
}

// Trace columns as [T][p][d1] arrays (covered stays -1 where unresolved).
py::dict trace_to_dict(const cts::Trace& trace, std::size_t p, std::size_t d1) {
    const std::size_t T = trace.size();
    const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(T),
                                         static_cast<py::ssize_t>(p),
                                         static_cast<py::ssize_t>(d1)};
    py::array_t<double> lo(shape), hi(shape), width(shape), a(shape);
    py::array_t<std::int8_t> empty(shape), covered(shape);
    for (std::size_t t = 0; t < T; ++t) {
        const auto& rec = trace[t];
        const std::size_t n = p * d1;
        std::copy(rec.lo.begin(), rec.lo.end(), lo.mutable_data() + t * n);
        std::copy(rec.hi.begin(), rec.hi.end(), hi.mutable_data() + t * n);
        std::copy(rec.width.begin(), rec.width.end(), width.mutable_data() + t * n);
        std::copy(rec.a.begin(), rec.a.end(), a.mutable_data() + t * n);
        std::copy(rec.empty.begin(), rec.empty.end(), empty.mutable_data() + t * n);
        std::copy(rec.covered.begin(), rec.covered.end(),
                  covered.mutable_data() + t * n);
    }
    py::dict out;
    out["lo"] = lo;
    out["hi"] = hi;
    out["width"] = width;
    out["a"] = a;
    out["empty"] = empty;
    out["covered"] = covered;
    return out;
}

cts::Trace trace_from_arrays(
    const py::array_t<std::int8_t, py::array::c_style | py::array::forcecast>& covered,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& width) {
    if (covered.ndim() != 3 || width.ndim() != 3)
        throw cts::DimensionError("covered/width must be [T][p][d1]");
    for (int k = 0; k < 3; ++k)
        if (covered.shape(k) != width.shape(k))
            throw cts::DimensionError("covered/width shape mismatch");
    const auto T = static_cast<std::size_t>(covered.shape(0));
    const auto p = static_cast<std::size_t>(covered.shape(1));
    const auto d1 = static_cast<std::size_t>(covered.shape(2));
    cts::Trace trace(T);
    const std::size_t n = p * d1;
    for (std::size_t t = 0; t < T; ++t) {
        auto& rec = trace[t];
        rec.t = t + 1;
        rec.lo.assign(n, 0.0);
        rec.hi.assign(n, 0.0);
        rec.a.assign(n, 0.0);
        rec.empty.assign(n, 0);
        rec.width.assign(width.data() + t * n, width.data() + (t + 1) * n);
        rec.covered.assign(covered.data() + t * n, covered.data() + (t + 1) * n);
    }
    return trace;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adaptive per-dimension, per-horizon confidence intervals for "
              "multivariate forecasts: fitted error-quantile nets plus lagged "
              "online coverage control, with conformal baselines.";

    py::register_exception<cts::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<cts::DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<cts::InternalError>(m, "InternalError",
                                               PyExc_RuntimeError);

    m.def("pinball_loss", &cts::pinball_loss, py::arg("s"), py::arg("q"),
          py::arg("alpha"));
    m.def("normal_quantile", &cts::normal_quantile, py::arg("p"));
    m.def("abs_normal_quantile", &cts::abs_normal_quantile, py::arg("beta"));
    m.def(
        "empirical_quantile_higher",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
           double level) {
            std::vector<double> data(v.data(), v.data() + v.size());
            return cts::empirical_quantile_higher(std::move(data), level);
        },
        py::arg("values"), py::arg("level"));
    m.def("theorem1_bound", &cts::theorem1_bound, py::arg("M"), py::arg("gamma"),
          py::arg("T"), py::arg("j"));
    m.def("mace_bound_rhs", &cts::mace_bound_rhs, py::arg("sigma_fit"),
          py::arg("M"), py::arg("j"), py::arg("T"), py::arg("c_scale"));
    m.def(
        "sigma_fit",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& qs,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& qh) {
            std::vector<double> a(qs.data(), qs.data() + qs.size());
            std::vector<double> b(qh.data(), qh.data() + qh.size());
            return cts::sigma_fit(a, b);
        },
        py::arg("qstar"), py::arg("qhat"));

    m.def(
        "align_targets",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& raw,
           std::size_t d1) { return tensor_to_np(cts::align_targets(np_to_tensor(raw), d1)); },
        py::arg("raw_series"), py::arg("d1"));

    m.def(
        "compute_errors",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& targ) {
            cts::PanelDataset panel;
            panel.predictions = np_to_tensor(pred);
            panel.targets = np_to_tensor(targ);
            if (panel.predictions.ndim() != 3)
                throw cts::DimensionError("predictions must be [T][p][d1]");
            panel.dims = {panel.predictions.dim(0), panel.predictions.dim(1),
                          panel.predictions.dim(2), 1};
            panel.features = Tensor({panel.dims.T, panel.dims.p, 1});
            return tensor_to_np(cts::compute_errors(panel).s);
        },
        py::arg("predictions"), py::arg("targets"));

    m.def(
        "generate_panel",
        [](std::size_t T, std::size_t p, std::size_t d1, std::size_t d2,
           const std::string& regime, double M, const std::vector<double>& w,
           double noise_base, std::size_t shift_step, double shift_kappa,
           double alpha, std::uint64_t seed) {
            cts::OracleConfig oc;
            oc.dims = {T, p, d1, d2};
            oc.regime = cts::parse_regime(regime);
            oc.M = M;
            oc.w = w;
            oc.noise_base = noise_base;
            oc.shift_step = shift_step;
            oc.shift_kappa = shift_kappa;
            oc.alpha = alpha;
            oc.seed = seed;
            const cts::OraclePanel panel = cts::generate(oc);
            py::dict out;
            out["predictions"] = tensor_to_np(panel.dataset.predictions);
            out["targets"] = tensor_to_np(panel.dataset.targets);
            out["features"] = tensor_to_np(panel.dataset.features);
            out["qstar"] = tensor_to_np(panel.qstar);
            out["oracle_coverage"] = cts::oracle_coverage_check(panel);
            return out;
        },
        py::arg("T"), py::arg("p"), py::arg("d1"), py::arg("d2"),
        py::arg("regime") = "stationary", py::arg("M") = 10.0,
        py::arg("w") = std::vector<double>(), py::arg("noise_base") = 1.0,
        py::arg("shift_step") = 0, py::arg("shift_kappa") = 1.0,
        py::arg("alpha") = 0.1, py::arg("seed") = 0);

    py::class_<cts::QuantileNet>(m, "QuantileNet")
        .def_property_readonly(
            "input_dim", [](const cts::QuantileNet& n) { return n.config.input_dim; })
        .def_property_readonly(
            "output_dim",
            [](const cts::QuantileNet& n) { return n.config.output_dim; })
        .def_property_readonly(
            "alpha", [](const cts::QuantileNet& n) { return n.config.alpha; })
        .def(
            "forward",
            [](const cts::QuantileNet& net,
               const py::array_t<double, py::array::c_style | py::array::forcecast>&
                   X) {
                if (X.ndim() != 2)
                    throw cts::DimensionError("forward expects [n][input_dim]");
                cts::MatRM Xe(X.shape(0), X.shape(1));
                std::copy(X.data(), X.data() + X.size(), Xe.data());
                const cts::MatRM Q = net.forward(Xe);
                py::array_t<double> out({X.shape(0),
                                         static_cast<py::ssize_t>(Q.cols())});
                std::copy(Q.data(), Q.data() + Q.size(), out.mutable_data());
                return out;
            },
            py::arg("features"))
        .def("save", [](const cts::QuantileNet& net,
                        const std::filesystem::path& dir) {
            cts::save_checkpoint(dir, net);
        });

    m.def("load_quantile_net", &cts::load_checkpoint, py::arg("directory"));

    m.def(
        "train_quantile_net",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& errors,
           const std::vector<std::size_t>& hidden, double alpha, double lr,
           std::size_t epochs, std::size_t patience, std::size_t batch,
           double split_fraction, std::uint64_t seed, double output_clip) {
            cts::NetConfig nc;
            nc.hidden_dims = hidden;
            nc.alpha = alpha;
            nc.learning_rate = lr;
            nc.max_epochs = epochs;
            nc.patience = patience;
            nc.batch_size = batch;
            nc.split_fraction = split_fraction;
            nc.seed = seed;
            nc.output_clip = output_clip;
            cts::TrainResult r = cts::train_quantile_net(
                np_to_tensor(features), cts::ErrorTensor{np_to_tensor(errors)}, nc);
            py::list log;
            for (const auto& e : r.log.epochs) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["train_loss"] = e.train_loss;
                row["val_loss"] = e.val_loss;
                log.append(row);
            }
            return py::make_tuple(std::move(r.net), log, r.log.best_epoch);
        },
        py::arg("features"), py::arg("errors"),
        py::arg("hidden") = std::vector<std::size_t>{512, 256},
        py::arg("alpha") = 0.1, py::arg("lr") = 1e-3, py::arg("epochs") = 100,
        py::arg("patience") = 5, py::arg("batch") = 256,
        py::arg("split_fraction") = 0.8, py::arg("seed") = 0,
        py::arg("output_clip") = 0.0);

    m.def(
        "constant_quantile_model",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& errors,
           double alpha) {
            const cts::MatRM q =
                cts::constant_quantile_model(cts::ErrorTensor{np_to_tensor(errors)},
                                             alpha);
            py::array_t<double> out({static_cast<py::ssize_t>(q.rows()),
                                     static_cast<py::ssize_t>(q.cols())});
            std::copy(q.data(), q.data() + q.size(), out.mutable_data());
            return out;
        },
        py::arg("errors"), py::arg("alpha"));

    m.def(
        "calibrate_panel",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& predictions,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& targets,
           std::size_t calib_count, const std::string& method,
           const py::object& qhat_test, double alpha, double gamma, double eci_c,
           bool aci_append, std::size_t aci_window) {
            const Tensor pred = np_to_tensor(predictions);
            const Tensor targ = np_to_tensor(targets);
            if (pred.ndim() != 3 || !pred.same_shape(targ))
                throw cts::DimensionError("predictions/targets must be equal [T][p][d1]");
            const std::size_t T = pred.dim(0), p = pred.dim(1), d1 = pred.dim(2);
            if (calib_count < 1 || calib_count + 2 > T)
                throw cts::InsufficientDataError(
                    "calib_count must leave at least 2 test steps");
            const std::size_t T_test = T - calib_count;

            cts::CalibratorConfig cc;
            cc.method = cts::parse_method(method);
            cc.alpha = alpha;
            cc.gamma = gamma;
            cc.eci_c = eci_c;
            cc.p = p;
            cc.d1 = d1;
            cc.aci_append = aci_append;
            cc.aci_window = aci_window;
            cts::Calibrator cal(cc);

            if (cts::method_uses_constant_quantile(cc.method)) {
                Tensor s({calib_count, p, d1});
                for (std::size_t t = 0; t < calib_count; ++t)
                    for (std::size_t i = 0; i < p; ++i)
                        for (std::size_t j = 0; j < d1; ++j)
                            s(t, i, j) = std::abs(targ(t, i, j) - pred(t, i, j));
                cal.set_calibration_errors(cts::ErrorTensor{std::move(s)});
            }

            Tensor qhat;
            const bool needs_net = cts::method_uses_net(cc.method);
            if (needs_net) {
                if (qhat_test.is_none())
                    throw cts::ConfigError("method " + method +
                                           " needs qhat_test [T_test][p][d1]");
                qhat = np_to_tensor(
                    qhat_test.cast<py::array_t<double, py::array::c_style |
                                                           py::array::forcecast>>());
                if (qhat.ndim() != 3 || qhat.dim(0) != T_test || qhat.dim(1) != p ||
                    qhat.dim(2) != d1)
                    throw cts::DimensionError("qhat_test must be [T_test][p][d1]");
            }

            cts::MatRM yhat(static_cast<Eigen::Index>(p),
                            static_cast<Eigen::Index>(d1));
            cts::MatRM qh;
            if (needs_net)
                qh = cts::MatRM(static_cast<Eigen::Index>(p),
                                static_cast<Eigen::Index>(d1));
            std::vector<double> y_now(p);
            for (std::size_t u = 1; u <= T_test; ++u) {
                const std::size_t r = calib_count + u - 1;
                for (std::size_t i = 0; i < p; ++i) {
                    for (std::size_t j = 0; j < d1; ++j) {
                        yhat(static_cast<Eigen::Index>(i),
                             static_cast<Eigen::Index>(j)) = pred(r, i, j);
                        if (needs_net)
                            qh(static_cast<Eigen::Index>(i),
                               static_cast<Eigen::Index>(j)) = qhat(u - 1, i, j);
                    }
                    y_now[i] = targ(r - 1, i, 0);
                }
                cal.step(yhat, qh, y_now.data());
            }
            return trace_to_dict(cal.trace(), p, d1);
        },
        py::arg("predictions"), py::arg("targets"), py::arg("calib_count"),
        py::arg("method"), py::arg("qhat_test") = py::none(),
        py::arg("alpha") = 0.1, py::arg("gamma") = 0.002, py::arg("eci_c") = 0.2,
        py::arg("aci_append") = false, py::arg("aci_window") = 0);

    m.def(
        "metrics_report",
        [](const py::array_t<std::int8_t, py::array::c_style | py::array::forcecast>&
               covered,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& width,
           std::size_t window, double alpha, bool sliding) {
            const cts::Trace trace = trace_from_arrays(covered, width);
            const auto p = static_cast<std::size_t>(covered.shape(1));
            const auto d1 = static_cast<std::size_t>(covered.shape(2));
            const cts::MetricsReport r =
                cts::compute_report(trace, p, d1, window, alpha, sliding);
            py::dict out;
            out["cov"] = r.coverage;
            out["mean_width"] = r.mean_width;
            out["min_d"] = r.min_dim_coverage;
            out["min_t"] = r.min_horizon_coverage;
            out["approx_mace"] = r.approx_mace;
            out["resolved_count"] = r.resolved_count;
            out["per_dim_cov"] = r.per_dim_coverage;
            out["per_horizon_cov"] = r.per_horizon_coverage;
            return out;
        },
        py::arg("covered"), py::arg("width"), py::arg("window") = 100,
        py::arg("alpha") = 0.1, py::arg("sliding") = false);

    m.def(
        "read_tensor",
        [](const std::filesystem::path& path) {
            return tensor_to_np(cts::read_tensor(path));
        },
        py::arg("path"));
    m.def(
        "write_tensor",
        [](const std::filesystem::path& path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const std::string& dtype) {
            if (dtype != "f32" && dtype != "f64")
                throw cts::ConfigError("dtype must be 'f32' or 'f64'");
            cts::write_tensor(path, np_to_tensor(a),
                              dtype == "f32" ? cts::DType::F32 : cts::DType::F64);
        },
        py::arg("path"), py::arg("array"), py::arg("dtype") = "f64");

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv;
        argv.push_back("conformal_ts");
        for (const auto& a : args)
            argv.push_back(a.c_str());
        return cts::run_cli(static_cast<int>(argv.size()), argv.data());
    });
}
