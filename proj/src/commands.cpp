#include "conformal_ts/commands.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/metrics.hpp"
#include "conformal_ts/stats.hpp"
#include "conformal_ts/synth.hpp"
#include "conformal_ts/tensor_io.hpp"

namespace cts {

namespace fs = std::filesystem;

std::size_t thread_budget() {
    if (const char* env = std::getenv("CONFORMAL_TS_THREADS")) {
        std::size_t n = 0;
        const std::string v(env);
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
        if (ec != std::errc() || ptr != v.data() + v.size() || n == 0)
            throw ConfigError("CONFORMAL_TS_THREADS must be a positive integer");
        return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void write_trace_csv(const fs::path& path, const Trace& trace, std::size_t p,
                     std::size_t d1) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot open for writing: " + path.string());
    out << "t,i,j,lo,hi,width,empty,covered,a\n";
    for (const auto& rec : trace) {
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < d1; ++j) {
                const std::size_t k = i * d1 + j;
                out << rec.t << ',' << i + 1 << ',' << j + 1 << ','
                    << format_double(rec.lo[k]) << ',' << format_double(rec.hi[k])
                    << ',' << format_double(rec.width[k]) << ','
                    << int(rec.empty[k]) << ',' << int(rec.covered[k]) << ','
                    << format_double(rec.a[k]) << '\n';
            }
        }
    }
    if (!out)
        throw FileError("failed writing: " + path.string());
}

LoadedTrace read_trace_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("empty trace file: " + path.string());
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "t,i,j,lo,hi,width,empty,covered,a")
        throw ParseError("unexpected trace header in " + path.string());

    struct Row {
        std::size_t t, i, j;
        double lo, hi, width, a;
        int empty, covered;
    };
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::array<std::string, 9> cells;
        std::size_t pos = 0, n_cells = 0;
        while (n_cells < 9) {
            const auto comma = line.find(',', pos);
            const auto end = comma == std::string::npos ? line.size() : comma;
            cells[n_cells++] = line.substr(pos, end - pos);
            if (comma == std::string::npos)
                break;
            pos = comma + 1;
        }
        if (n_cells != 9)
            throw ParseError("trace row with wrong arity at " + path.string() +
                             " line " + std::to_string(lineno));
        auto to_ll = [&](const std::string& s) {
            long long v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw ParseError("bad integer in " + path.string() + " line " +
                                 std::to_string(lineno));
            return v;
        };
        auto to_d = [&](const std::string& s) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw ParseError("bad number in " + path.string() + " line " +
                                 std::to_string(lineno));
            return v;
        };
        Row r;
        const long long t = to_ll(cells[0]), i = to_ll(cells[1]), j = to_ll(cells[2]);
        if (t < 1 || i < 1 || j < 1)
            throw ParseError("trace indices must be 1-based positive at line " +
                             std::to_string(lineno));
        r.t = static_cast<std::size_t>(t);
        r.i = static_cast<std::size_t>(i);
        r.j = static_cast<std::size_t>(j);
        r.lo = to_d(cells[3]);
        r.hi = to_d(cells[4]);
        r.width = to_d(cells[5]);
        r.empty = static_cast<int>(to_ll(cells[6]));
        r.covered = static_cast<int>(to_ll(cells[7]));
        r.a = to_d(cells[8]);
        if (r.empty != 0 && r.empty != 1)
            throw ParseError("empty flag must be 0/1 at line " + std::to_string(lineno));
        if (r.covered < -1 || r.covered > 1)
            throw ParseError("covered must be -1/0/1 at line " + std::to_string(lineno));
        rows.push_back(r);
    }
    if (rows.empty())
        throw ParseError("trace has no rows: " + path.string());

    LoadedTrace lt;
    std::size_t T = 0;
    for (const auto& r : rows) {
        T = std::max(T, r.t);
        lt.p = std::max(lt.p, r.i);
        lt.d1 = std::max(lt.d1, r.j);
    }
    if (rows.size() != T * lt.p * lt.d1)
        throw ParseError("trace is not a dense (t, i, j) grid: " + path.string());
    lt.trace.assign(T, IntervalRecord{});
    const std::size_t n = lt.p * lt.d1;
    for (std::size_t t = 0; t < T; ++t) {
        auto& rec = lt.trace[t];
        rec.t = t + 1;
        rec.lo.assign(n, 0.0);
        rec.hi.assign(n, 0.0);
        rec.width.assign(n, 0.0);
        rec.a.assign(n, 0.0);
        rec.empty.assign(n, 0);
        rec.covered.assign(n, -1);
    }
    for (const auto& r : rows) {
        auto& rec = lt.trace[r.t - 1];
        const std::size_t k = (r.i - 1) * lt.d1 + (r.j - 1);
        rec.lo[k] = r.lo;
        rec.hi[k] = r.hi;
        rec.width[k] = r.width;
        rec.a[k] = r.a;
        rec.empty[k] = static_cast<std::int8_t>(r.empty);
        rec.covered[k] = static_cast<std::int8_t>(r.covered);
    }
    return lt;
}

namespace {

void require_key(const RunConfig& cfg, const std::string& key,
                 const std::string& cmd) {
    if (!cfg.has(key))
        throw ConfigError(cmd + " requires " + key + "=<value>");
}

fs::path make_out_dir(const RunConfig& cfg, const std::string& cmd) {
    require_key(cfg, "out", cmd);
    const fs::path out = cfg.get_string("out");
    fs::create_directories(out);
    return out;
}

std::size_t checked_size(long long v, const std::string& key) {
    if (v < 1)
        throw ConfigError("key " + key + " must be >= 1");
    return static_cast<std::size_t>(v);
}

// Calibration split: first floor(calib_fraction * T) issuance rows.
std::size_t calib_rows(const RunConfig& cfg, std::size_t T, std::size_t d1) {
    const double f = cfg.get_double("calib_fraction");
    if (!(f > 0.0 && f < 1.0))
        throw ConfigError("calib_fraction must lie in (0,1)");
    const auto T_cal = static_cast<std::size_t>(
        std::floor(f * static_cast<double>(T)));
    if (T_cal < 1)
        throw InsufficientDataError("calibration split is empty");
    if (T - T_cal < d1 + 2)
        throw InsufficientDataError("test split needs at least d1 + 2 steps");
    return T_cal;
}

Tensor slice_rows(const Tensor& t, std::size_t lo, std::size_t hi) {
    if (t.ndim() != 3 || hi > t.dim(0) || lo >= hi)
        throw DimensionError("bad tensor row slice");
    Tensor out({hi - lo, t.dim(1), t.dim(2)});
    const std::size_t row = t.dim(1) * t.dim(2);
    std::copy(t.values().begin() + static_cast<long>(lo * row),
              t.values().begin() + static_cast<long>(hi * row),
              out.values().begin());
    return out;
}

NetConfig net_config_from(const RunConfig& cfg) {
    NetConfig nc;
    nc.hidden_dims = cfg.get_size_list("hidden");
    nc.alpha = cfg.get_double("alpha");
    nc.learning_rate = cfg.get_double("lr");
    nc.max_epochs = checked_size(cfg.get_int("epochs"), "epochs");
    nc.patience = checked_size(cfg.get_int("patience"), "patience");
    nc.batch_size = checked_size(cfg.get_int("batch"), "batch");
    nc.split_fraction = cfg.get_double("split_fraction");
    nc.seed = cfg.get_u64("seed");
    nc.output_clip = cfg.get_double("output_clip");
    return nc;
}

struct MethodRun {
    Method method;
    Trace trace;
};

struct CalibrationInputs {
    PanelDataset panel;
    std::size_t T_cal = 0, T_test = 0;
    ErrorTensor calib_errors;
    std::optional<QuantileNet> net;
    Tensor qhat_test;  // [T_test][p][d1] when net present
};

CalibrationInputs prepare_inputs(const RunConfig& cfg,
                                 const std::vector<Method>& methods,
                                 const std::string& cmd) {
    require_key(cfg, "dataset", cmd);
    CalibrationInputs in;
    in.panel = load_dataset_dir(cfg.get_string("dataset"));
    const auto& dims = in.panel.dims;
    in.T_cal = calib_rows(cfg, dims.T, dims.d1);
    in.T_test = dims.T - in.T_cal;

    const ErrorTensor all_errors = compute_errors(in.panel);
    in.calib_errors = ErrorTensor{slice_rows(all_errors.s, 0, in.T_cal)};

    const bool needs_net = std::any_of(methods.begin(), methods.end(),
                                       [](Method m) { return method_uses_net(m); });
    if (needs_net) {
        require_key(cfg, "checkpoint", cmd);
        in.net = load_checkpoint(cfg.get_string("checkpoint"));
        if (in.net->config.input_dim != dims.d2 ||
            in.net->config.output_dim != dims.d1)
            throw CheckpointError("checkpoint dims do not match the dataset");

        // Batched forward over the whole test segment.
        MatRM X(static_cast<Eigen::Index>(in.T_test * dims.p),
                static_cast<Eigen::Index>(dims.d2));
        for (std::size_t u = 0; u < in.T_test; ++u)
            for (std::size_t i = 0; i < dims.p; ++i)
                for (std::size_t k = 0; k < dims.d2; ++k)
                    X(static_cast<Eigen::Index>(u * dims.p + i),
                      static_cast<Eigen::Index>(k)) =
                        in.panel.features(in.T_cal + u, i, k);
        const MatRM Q = in.net->forward(X);
        in.qhat_test = Tensor({in.T_test, dims.p, dims.d1});
        for (std::size_t u = 0; u < in.T_test; ++u)
            for (std::size_t i = 0; i < dims.p; ++i)
                for (std::size_t j = 0; j < dims.d1; ++j)
                    in.qhat_test(u, i, j) =
                        Q(static_cast<Eigen::Index>(u * dims.p + i),
                          static_cast<Eigen::Index>(j));
    }
    return in;
}

CalibratorConfig calibrator_config_from(const RunConfig& cfg, Method m,
                                        const PanelDims& dims) {
    CalibratorConfig cc;
    cc.method = m;
    cc.alpha = cfg.get_double("alpha");
    cc.gamma = cfg.get_double("gamma");
    cc.eci_c = cfg.get_double("eci_c");
    cc.p = dims.p;
    cc.d1 = dims.d1;
    cc.aci_append = cfg.get_bool("aci_append");
    const long long aw = cfg.get_int("aci_window");
    if (aw < 0)
        throw ConfigError("aci_window must be >= 0");
    cc.aci_window = static_cast<std::size_t>(aw);
    return cc;
}

Trace run_one_method(const CalibrationInputs& in, const CalibratorConfig& cc) {
    const auto& dims = in.panel.dims;
    Calibrator cal(cc);
    if (method_uses_constant_quantile(cc.method))
        cal.set_calibration_errors(in.calib_errors);

    MatRM yhat(static_cast<Eigen::Index>(dims.p), static_cast<Eigen::Index>(dims.d1));
    MatRM qh;
    if (method_uses_net(cc.method))
        qh = MatRM(static_cast<Eigen::Index>(dims.p),
                   static_cast<Eigen::Index>(dims.d1));
    std::vector<double> y_now(dims.p);

    for (std::size_t u = 1; u <= in.T_test; ++u) {
        const std::size_t r = in.T_cal + u - 1;  // 0-based panel issuance row
        for (std::size_t i = 0; i < dims.p; ++i) {
            for (std::size_t j = 0; j < dims.d1; ++j) {
                yhat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    in.panel.predictions(r, i, j);
                if (method_uses_net(cc.method))
                    qh(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        in.qhat_test(u - 1, i, j);
            }
            // Realized value at this step's wall clock: the 1-step-ahead
            // target aligned at the previous issuance row.
            y_now[i] = in.panel.targets(r - 1, i, 0);
        }
        cal.step(yhat, qh, y_now.data());
    }
    return cal.take_trace();
}

// Runs the methods on worker threads (capped by thread_budget); results and
// errors are collected per method so output order stays deterministic.
std::vector<MethodRun> run_methods(const CalibrationInputs& in,
                                   const RunConfig& cfg,
                                   const std::vector<Method>& methods) {
    std::vector<MethodRun> runs(methods.size());
    std::vector<std::exception_ptr> errors(methods.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers =
        std::min<std::size_t>(std::max<std::size_t>(thread_budget(), 1),
                              methods.size());

    auto body = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= methods.size())
                return;
            try {
                runs[k].method = methods[k];
                runs[k].trace = run_one_method(
                    in, calibrator_config_from(cfg, methods[k], in.panel.dims));
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(body);
        for (auto& th : pool)
            th.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return runs;
}

std::vector<Method> parse_methods(const RunConfig& cfg) {
    std::vector<Method> out;
    for (const auto& name : cfg.get_string_list("methods"))
        out.push_back(parse_method(name));
    if (out.empty())
        throw ConfigError("methods list is empty");
    return out;
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
    std::map<std::string, std::string> kv;
    std::ifstream in(path);
    if (!in)
        return kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void write_local_cov_svg(const fs::path& path,
                         const std::vector<std::pair<std::string,
                                                     std::vector<double>>>& series,
                         double alpha) {
    const double W = 860, H = 400, ml = 60, mr = 20, mt = 24, mb = 44;
    const double pw = W - ml - mr, ph = H - mt - mb;
    std::size_t max_len = 1;
    for (const auto& [name, s] : series)
        max_len = std::max(max_len, s.size());
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                             "#ff7f0e", "#8c564b", "#17becf"};

    auto xpos = [&](std::size_t k) {
        return max_len == 1
                   ? ml + pw / 2
                   : ml + pw * static_cast<double>(k) /
                         static_cast<double>(max_len - 1);
    };
    auto ypos = [&](double cov) { return mt + ph * (1.0 - cov); };
    auto num = [](double v) { return format_double(std::round(v * 100.0) / 100.0); };

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot open for writing: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
        << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    // Axes and gridlines every 0.25.
    for (int g = 0; g <= 4; ++g) {
        const double cov = 0.25 * g;
        out << "<line x1=\"" << ml << "\" y1=\"" << ypos(cov) << "\" x2=\""
            << ml + pw << "\" y2=\"" << ypos(cov)
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << ypos(cov) + 4
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"#333333\">"
            << num(cov) << "</text>\n";
    }
    // Target coverage line.
    out << "<line x1=\"" << ml << "\" y1=\"" << ypos(1.0 - alpha) << "\" x2=\""
        << ml + pw << "\" y2=\"" << ypos(1.0 - alpha)
        << "\" stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";
    out << "<text x=\"" << ml + pw << "\" y=\"" << ypos(1.0 - alpha) - 6
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"#555555\">target "
        << format_double(1.0 - alpha) << "</text>\n";

    std::size_t ci = 0;
    for (const auto& [name, s] : series) {
        const char* color = palette[ci % (sizeof(palette) / sizeof(palette[0]))];
        if (!s.empty()) {
            out << "<polyline fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < s.size(); ++k)
                out << (k ? " " : "") << format_double(xpos(k)) << ','
                    << format_double(ypos(s[k]));
            out << "\"/>\n";
        }
        out << "<text x=\"" << ml + 10 + 130 * static_cast<double>(ci) << "\" y=\""
            << mt - 8 + 0 << "\" font-size=\"12\" fill=\"" << color << "\">" << name
            << "</text>\n";
        ++ci;
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10
        << "\" text-anchor=\"middle\" font-size=\"12\" fill=\"#333333\">"
           "local coverage window</text>\n";
    out << "</svg>\n";
    if (!out)
        throw FileError("failed writing: " + path.string());
}

} // namespace

void cmd_synth(const RunConfig& cfg) {
    const fs::path out = make_out_dir(cfg, "synth");
    OracleConfig oc;
    oc.dims.T = checked_size(cfg.get_int("T"), "T");
    oc.dims.p = checked_size(cfg.get_int("p"), "p");
    oc.dims.d1 = checked_size(cfg.get_int("d1"), "d1");
    oc.dims.d2 = checked_size(cfg.get_int("d2"), "d2");
    oc.regime = parse_regime(cfg.get_string("regime"));
    oc.M = cfg.get_double("M");
    oc.w = cfg.get_double_list("w");
    oc.noise_base = cfg.get_double("noise_base");
    const long long shift_step = cfg.get_int("shift_step");
    if (shift_step < 0)
        throw ConfigError("shift_step must be >= 0");
    oc.shift_step = static_cast<std::size_t>(shift_step);
    oc.shift_kappa = cfg.get_double("shift_kappa");
    oc.alpha = cfg.get_double("alpha");
    oc.seed = cfg.get_u64("seed");

    const OraclePanel panel = generate(oc);
    save_oracle_panel(out, panel);
    cfg.write_resolved(out / "resolved_config.txt");
}

void cmd_fit(const RunConfig& cfg) {
    const fs::path out = make_out_dir(cfg, "fit");
    require_key(cfg, "dataset", "fit");
    const PanelDataset panel = load_dataset_dir(cfg.get_string("dataset"));
    const std::size_t T_cal = calib_rows(cfg, panel.dims.T, panel.dims.d1);

    const ErrorTensor all_errors = compute_errors(panel);
    const ErrorTensor calib{slice_rows(all_errors.s, 0, T_cal)};
    const Tensor features = slice_rows(panel.features, 0, T_cal);

    const TrainResult result = train_quantile_net(features, calib, net_config_from(cfg));
    save_checkpoint(out, result.net);
    result.log.write_csv(out / "train_log.csv");
    cfg.write_resolved(out / "resolved_config.txt");
}

void cmd_calibrate(const RunConfig& cfg) {
    const fs::path out = make_out_dir(cfg, "calibrate");
    const std::vector<Method> methods = parse_methods(cfg);
    const CalibrationInputs in = prepare_inputs(cfg, methods, "calibrate");
    const std::vector<MethodRun> runs = run_methods(in, cfg, methods);

    for (const auto& run : runs)
        write_trace_csv(out / ("trace_" + method_name(run.method) + ".csv"),
                        run.trace, in.panel.dims.p, in.panel.dims.d1);
    if (in.net)
        write_tensor(out / "qhat.ctsb", in.qhat_test);
    const bool needs_const =
        std::any_of(methods.begin(), methods.end(),
                    [](Method m) { return method_uses_constant_quantile(m); });
    if (needs_const) {
        const MatRM qc = constant_quantile_model(in.calib_errors,
                                                 cfg.get_double("alpha"));
        Tensor qt({in.panel.dims.p, in.panel.dims.d1});
        for (std::size_t i = 0; i < in.panel.dims.p; ++i)
            for (std::size_t j = 0; j < in.panel.dims.d1; ++j)
                qt(i, j) = qc(static_cast<Eigen::Index>(i),
                              static_cast<Eigen::Index>(j));
        write_tensor(out / "qconst.ctsb", qt);
    }
    cfg.write_resolved(out / "resolved_config.txt");
}

void cmd_report(const RunConfig& cfg) {
    const fs::path out = make_out_dir(cfg, "report");
    require_key(cfg, "traces", "report");
    const fs::path traces_dir = cfg.get_string("traces");
    const std::vector<Method> methods = parse_methods(cfg);
    const double alpha = cfg.get_double("alpha");
    const double gamma = cfg.get_double("gamma");
    const auto window = static_cast<std::size_t>(
        checked_size(cfg.get_int("window"), "window"));
    const bool sliding = cfg.get_bool("sliding");

    // Optional oracle context from the dataset directory.
    std::optional<Tensor> qstar;
    double manifest_M = 0.0;
    bool have_M = false;
    if (cfg.has("dataset")) {
        const fs::path ds = cfg.get_string("dataset");
        if (fs::exists(ds / "qstar.ctsb"))
            qstar = read_tensor(ds / "qstar.ctsb");
        const auto manifest = read_manifest(ds / "manifest.txt");
        if (auto it = manifest.find("M"); it != manifest.end()) {
            manifest_M = std::stod(it->second);
            have_M = true;
        }
    }
    std::optional<Tensor> qhat;
    if (fs::exists(traces_dir / "qhat.ctsb"))
        qhat = read_tensor(traces_dir / "qhat.ctsb");
    std::optional<Tensor> qconst;
    if (fs::exists(traces_dir / "qconst.ctsb"))
        qconst = read_tensor(traces_dir / "qconst.ctsb");

    std::ofstream rep(out / "report.csv", std::ios::binary | std::ios::trunc);
    if (!rep)
        throw FileError("cannot write report.csv");
    rep << "method,metric,value\n";

    std::vector<std::pair<std::string, std::vector<double>>> svg_series;

    for (Method m : methods) {
        const std::string name = method_name(m);
        const LoadedTrace lt = read_trace_csv(traces_dir / ("trace_" + name + ".csv"));
        const MetricsReport r =
            compute_report(lt.trace, lt.p, lt.d1, window, alpha, sliding);

        auto row = [&](const std::string& metric, const std::string& value) {
            rep << name << ',' << metric << ',' << value << '\n';
        };
        row("cov", format_double(r.coverage));
        row("mean_width", format_double(r.mean_width));
        row("min_d", format_double(r.min_dim_coverage));
        row("min_t", format_double(r.min_horizon_coverage));
        row("approx_mace", format_double(r.approx_mace));
        row("resolved_count", std::to_string(r.resolved_count));
        for (std::size_t i = 0; i < r.per_dim_coverage.size(); ++i)
            row("per_dim_cov_" + std::to_string(i + 1),
                format_double(r.per_dim_coverage[i]));
        for (std::size_t j = 0; j < r.per_horizon_coverage.size(); ++j)
            row("per_horizon_cov_" + std::to_string(j + 1),
                format_double(r.per_horizon_coverage[j]));

        // sigma_fit against the oracle when both trajectories exist.
        if (qstar) {
            const std::size_t T_test = lt.trace.size();
            if (qstar->ndim() == 3 && qstar->dim(0) >= T_test &&
                qstar->dim(1) == lt.p && qstar->dim(2) == lt.d1) {
                const std::size_t off = qstar->dim(0) - T_test;
                std::vector<double> qs, qh;
                bool have = false;
                if (method_uses_net(m) && qhat && qhat->ndim() == 3 &&
                    qhat->dim(0) == T_test) {
                    for (std::size_t u = 0; u < T_test; ++u)
                        for (std::size_t i = 0; i < lt.p; ++i)
                            for (std::size_t j = 0; j < lt.d1; ++j) {
                                qs.push_back((*qstar)(off + u, i, j));
                                qh.push_back((*qhat)(u, i, j));
                            }
                    have = true;
                } else if ((m == Method::CP || m == Method::FFDCI_NO_FEATURE) &&
                           qconst && qconst->ndim() == 2) {
                    for (std::size_t u = 0; u < T_test; ++u)
                        for (std::size_t i = 0; i < lt.p; ++i)
                            for (std::size_t j = 0; j < lt.d1; ++j) {
                                qs.push_back((*qstar)(off + u, i, j));
                                qh.push_back((*qconst)(i, j));
                            }
                    have = true;
                }
                if (have)
                    row("sigma_fit", format_double(sigma_fit(qs, qh)));
            }
        }

        // Per-cell deviation bound audit, available when the generator
        // manifest provides the score bound M.
        if (have_M && gamma > 0.0) {
            std::ofstream audit(out / ("bound_audit_" + name + ".csv"),
                                std::ios::binary | std::ios::trunc);
            if (!audit)
                throw FileError("cannot write bound audit for " + name);
            audit << "i,j,coverage,deviation,bound,pass\n";
            for (std::size_t i = 0; i < lt.p; ++i) {
                for (std::size_t j = 0; j < lt.d1; ++j) {
                    std::size_t resolved = 0, hits = 0;
                    for (const auto& recd : lt.trace) {
                        const auto c = recd.covered[i * lt.d1 + j];
                        if (c != -1) {
                            ++resolved;
                            hits += c == 1 ? 1u : 0u;
                        }
                    }
                    if (resolved == 0)
                        continue;
                    const double cov = static_cast<double>(hits) /
                                       static_cast<double>(resolved);
                    const double dev = std::abs(cov - (1.0 - alpha));
                    const double bound =
                        theorem1_bound(manifest_M, gamma, lt.trace.size(), j);
                    audit << i + 1 << ',' << j + 1 << ',' << format_double(cov)
                          << ',' << format_double(dev) << ','
                          << format_double(bound) << ','
                          << (dev <= bound ? "PASS" : "FAIL") << '\n';
                }
            }
        }

        // Local-coverage series per cell, plus the pooled mean for the chart.
        std::vector<std::vector<double>> locals;
        std::size_t max_len = 0;
        for (std::size_t i = 0; i < lt.p; ++i)
            for (std::size_t j = 0; j < lt.d1; ++j) {
                locals.push_back(local_coverage(lt.trace, i, j, lt.d1, window, sliding));
                max_len = std::max(max_len, locals.back().size());
            }
        std::ofstream lc(out / ("local_cov_" + name + ".csv"),
                         std::ios::binary | std::ios::trunc);
        if (!lc)
            throw FileError("cannot write local coverage for " + name);
        lc << "window";
        for (std::size_t i = 0; i < lt.p; ++i)
            for (std::size_t j = 0; j < lt.d1; ++j)
                lc << ",cov_i" << i + 1 << "_j" << j + 1;
        lc << '\n';
        for (std::size_t wdx = 0; wdx < max_len; ++wdx) {
            lc << wdx + 1;
            for (const auto& s : locals) {
                lc << ',';
                if (wdx < s.size())
                    lc << format_double(s[wdx]);
            }
            lc << '\n';
        }

        std::vector<double> pooled(max_len, 0.0);
        std::vector<std::size_t> counts(max_len, 0);
        for (const auto& s : locals)
            for (std::size_t k = 0; k < s.size(); ++k) {
                pooled[k] += s[k];
                ++counts[k];
            }
        for (std::size_t k = 0; k < max_len; ++k)
            pooled[k] /= static_cast<double>(std::max<std::size_t>(counts[k], 1));
        svg_series.emplace_back(name, std::move(pooled));
    }

    rep.flush();
    if (!rep)
        throw FileError("failed writing report.csv");

    if (cfg.get_bool("svg"))
        write_local_cov_svg(out / "local_cov.svg", svg_series, alpha);
    cfg.write_resolved(out / "resolved_config.txt");
}

void cmd_ablate(const RunConfig& cfg) {
    const fs::path out = make_out_dir(cfg, "ablate");
    const std::vector<Method> methods = {Method::FFDCI, Method::FFDCI_NO_UPDATE,
                                         Method::FFDCI_NO_FEATURE};
    const CalibrationInputs in = prepare_inputs(cfg, methods, "ablate");
    const std::vector<MethodRun> runs = run_methods(in, cfg, methods);

    const double alpha = cfg.get_double("alpha");
    const auto window = static_cast<std::size_t>(
        checked_size(cfg.get_int("window"), "window"));

    std::vector<MetricsReport> reports;
    for (const auto& run : runs) {
        write_trace_csv(out / ("trace_" + method_name(run.method) + ".csv"),
                        run.trace, in.panel.dims.p, in.panel.dims.d1);
        reports.push_back(compute_report(run.trace, in.panel.dims.p,
                                         in.panel.dims.d1, window, alpha,
                                         cfg.get_bool("sliding")));
    }

    // Coverage loss in points and width increase in percent, both relative
    // to the full method.
    const double base_cov = reports[0].coverage;
    const double base_width = reports[0].mean_width;
    std::ofstream ab(out / "ablation.csv", std::ios::binary | std::ios::trunc);
    if (!ab)
        throw FileError("cannot write ablation.csv");
    ab << "method,cov,mean_width,min_d,min_t,c_loss,l_loss\n";
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = reports[k];
        const double c_loss = (base_cov - r.coverage) * 100.0;
        const double l_loss =
            base_width > 0.0 ? (r.mean_width - base_width) / base_width * 100.0 : 0.0;
        ab << method_name(runs[k].method) << ',' << format_double(r.coverage) << ','
           << format_double(r.mean_width) << ',' << format_double(r.min_dim_coverage)
           << ',' << format_double(r.min_horizon_coverage) << ','
           << format_double(c_loss) << ',' << format_double(l_loss) << '\n';
    }
    ab.flush();
    if (!ab)
        throw FileError("failed writing ablation.csv");
    cfg.write_resolved(out / "resolved_config.txt");
}

namespace {

const char* kUsage =
    "usage: conformal_ts <synth|fit|calibrate|report|ablate>"
    " [--config FILE] [--KEY VALUE ...]\n"
    "\n"
    "  synth      generate a synthetic oracle dataset (out=)\n"
    "  fit        train the error-quantile net (dataset=, out=)\n"
    "  calibrate  stream intervals over the test split (dataset=, out=,\n"
    "             checkpoint= for net methods, methods=...)\n"
    "  report     metrics, local coverage, bound audit (traces=, out=)\n"
    "  ablate     full vs no-update vs no-feature (dataset=, checkpoint=, out=)\n";

} // namespace

int run_cli(int argc, const char* const* argv) {
    try {
        if (argc < 2) {
            std::cerr << kUsage;
            throw ConfigError("missing subcommand");
        }
        const std::string sub = argv[1];
        if (sub == "--help" || sub == "-h" || sub == "help") {
            std::cout << kUsage;
            return 0;
        }
        RunConfig cfg;
        for (int k = 2; k < argc;) {
            const std::string arg = argv[k];
            if (arg.rfind("--", 0) != 0)
                throw ConfigError("unexpected argument: " + arg);
            if (k + 1 >= argc)
                throw ConfigError("missing value after " + arg);
            const std::string value = argv[k + 1];
            if (arg == "--config")
                cfg.load_file(value);
            else
                cfg.set(arg.substr(2), value);
            k += 2;
        }
        if (sub == "synth")
            cmd_synth(cfg);
        else if (sub == "fit")
            cmd_fit(cfg);
        else if (sub == "calibrate")
            cmd_calibrate(cfg);
        else if (sub == "report")
            cmd_report(cfg);
        else if (sub == "ablate")
            cmd_ablate(cfg);
        else {
            std::cerr << kUsage;
            throw ConfigError("unknown subcommand: " + sub);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}

} // namespace cts
