#include "conformal_ts/quantile_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/stats.hpp"
#include "conformal_ts/tensor_io.hpp"

namespace cts {

double pinball_loss(double s, double q, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("pinball_loss requires alpha in (0,1)");
    return std::max((1.0 - alpha) * (s - q), alpha * (q - s));
}

void NetConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("net alpha must lie in (0,1)");
    if (!(learning_rate > 0.0))
        throw ParameterError("learning rate must be positive");
    if (max_epochs < 1 || patience < 1)
        throw ParameterError("max_epochs and patience must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ParameterError("split_fraction must lie in (0,1)");
    if (batch_size < 1)
        throw ParameterError("batch_size must be >= 1");
    for (std::size_t h : hidden_dims)
        if (h == 0)
            throw ParameterError("hidden layer widths must be positive");
    if (output_clip < 0.0)
        throw ParameterError("output_clip must be >= 0");
}

std::vector<std::size_t> QuantileNet::layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(config.input_dim);
    for (std::size_t h : config.hidden_dims)
        dims.push_back(h);
    dims.push_back(config.output_dim);
    return dims;
}

namespace {

// Forward pass retaining pre-activations for backprop.
struct ForwardCache {
    std::vector<MatRM> act;  // act[0] = standardized input, act[l+1] = relu(pre[l])
    std::vector<MatRM> pre;  // linear outputs per layer
};

MatRM standardize(const QuantileNet& net, const MatRM& X) {
    if (static_cast<std::size_t>(X.cols()) != net.config.input_dim)
        throw DimensionError("feature row width " + std::to_string(X.cols()) +
                             " does not match net input_dim " +
                             std::to_string(net.config.input_dim));
    MatRM Xn = X;
    Xn.rowwise() -= net.norm_mean.transpose();
    Xn.array().rowwise() /= net.norm_std.transpose().array();
    return Xn;
}

ForwardCache run_forward(const QuantileNet& net, const MatRM& X) {
    ForwardCache cache;
    cache.act.push_back(standardize(net, X));
    const std::size_t L = net.weights.size();
    for (std::size_t l = 0; l < L; ++l) {
        MatRM pre = cache.act.back() * net.weights[l].transpose();
        pre.rowwise() += net.biases[l].transpose();
        cache.pre.push_back(pre);
        if (l + 1 < L)
            cache.act.push_back(pre.cwiseMax(0.0));
    }
    return cache;
}

MatRM clamp_output(const QuantileNet& net, const MatRM& raw) {
    MatRM out = raw.cwiseMax(0.0);
    if (net.config.output_clip > 0.0)
        out = out.cwiseMin(net.config.output_clip);
    return out;
}

} // namespace

MatRM QuantileNet::forward(const MatRM& X) const {
    ForwardCache cache = run_forward(*this, X);
    return clamp_output(*this, cache.pre.back());
}

VecD QuantileNet::forward_row(const VecD& x) const {
    MatRM X(1, x.size());
    X.row(0) = x.transpose();
    return forward(X).row(0).transpose();
}

double mean_pinball_loss(const MatRM& Q, const MatRM& S, double alpha) {
    if (Q.rows() != S.rows() || Q.cols() != S.cols())
        throw DimensionError("pinball batch shape mismatch");
    double total = 0.0;
    for (Eigen::Index r = 0; r < Q.rows(); ++r)
        for (Eigen::Index c = 0; c < Q.cols(); ++c)
            total += pinball_loss(S(r, c), Q(r, c), alpha);
    return total / static_cast<double>(Q.rows() * Q.cols());
}

Gradients backward(const QuantileNet& net, const MatRM& X, const MatRM& S) {
    const std::size_t L = net.weights.size();
    ForwardCache cache = run_forward(net, X);
    const MatRM& raw = cache.pre.back();
    if (raw.rows() != S.rows() || raw.cols() != S.cols())
        throw DimensionError("backward target shape mismatch");

    const double alpha = net.config.alpha;
    const double inv_n = 1.0 / static_cast<double>(S.rows() * S.cols());

    // dL/d(raw): pinball subgradient through the output clamp. Ties s == q
    // take the (1-alpha)(s-q) branch; the clamp passes gradient when
    // raw >= 0 (and, with an upper clip, raw <= clip).
    MatRM delta(raw.rows(), raw.cols());
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        for (Eigen::Index c = 0; c < raw.cols(); ++c) {
            const double rawv = raw(r, c);
            double q = std::max(rawv, 0.0);
            if (net.config.output_clip > 0.0)
                q = std::min(q, net.config.output_clip);
            const double dq = S(r, c) >= q ? -(1.0 - alpha) : alpha;
            double pass = rawv >= 0.0 ? 1.0 : 0.0;
            if (net.config.output_clip > 0.0 && rawv > net.config.output_clip)
                pass = 0.0;
            delta(r, c) = dq * pass * inv_n;
        }
    }

    Gradients g;
    g.weights.resize(L);
    g.biases.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        g.weights[l] = delta.transpose() * cache.act[l];
        g.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            MatRM next = delta * net.weights[l];
            // ReLU passes gradient on strictly positive pre-activations.
            next.array() *= (cache.pre[l - 1].array() > 0.0).cast<double>();
            delta = std::move(next);
        }
    }
    return g;
}

namespace {

struct AdamState {
    std::vector<MatRM> mw, vw;
    std::vector<VecD> mb, vb;
    std::size_t step = 0;
};

void adam_update(QuantileNet& net, const Gradients& g, AdamState& st) {
    const double lr = net.config.learning_rate;
    const double b1 = net.config.adam_beta1;
    const double b2 = net.config.adam_beta2;
    const double eps = net.config.adam_eps;
    ++st.step;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        st.mw[l] = b1 * st.mw[l] + (1.0 - b1) * g.weights[l];
        st.vw[l].array() =
            b2 * st.vw[l].array() + (1.0 - b2) * g.weights[l].array().square();
        st.mb[l] = b1 * st.mb[l] + (1.0 - b1) * g.biases[l];
        st.vb[l].array() =
            b2 * st.vb[l].array() + (1.0 - b2) * g.biases[l].array().square();
        net.weights[l].array() -=
            lr * (st.mw[l].array() / corr1) / ((st.vw[l].array() / corr2).sqrt() + eps);
        net.biases[l].array() -=
            lr * (st.mb[l].array() / corr1) / ((st.vb[l].array() / corr2).sqrt() + eps);
    }
}

} // namespace

TrainResult train_quantile_net(const Tensor& features, const ErrorTensor& errors,
                               NetConfig config) {
    if (features.ndim() != 3 || errors.s.ndim() != 3)
        throw DimensionError("training tensors must be 3-d");
    const std::size_t T = features.dim(0);
    const std::size_t p = features.dim(1);
    const std::size_t d2 = features.dim(2);
    const std::size_t d1 = errors.s.dim(2);
    if (errors.s.dim(0) != T || errors.s.dim(1) != p)
        throw DimensionError("features/errors row mismatch");
    config.input_dim = d2;
    config.output_dim = d1;
    config.validate();

    const std::size_t N = T * p;
    if (N < 10)
        throw InsufficientDataError("need at least 10 training rows, got " +
                                    std::to_string(N));

    // Flatten rows (t, i) deterministically.
    MatRM X(N, d2), S(N, d1);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < p; ++i) {
            const std::size_t r = t * p + i;
            for (std::size_t k = 0; k < d2; ++k)
                X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                    features(t, i, k);
            for (std::size_t j = 0; j < d1; ++j)
                S(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                    errors.s(t, i, j);
        }
    }

    std::mt19937_64 rng(config.seed);

    // Seeded row split.
    std::vector<std::size_t> perm(N);
    for (std::size_t r = 0; r < N; ++r)
        perm[r] = r;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(config.split_fraction * static_cast<double>(N)));
    n_train = std::clamp<std::size_t>(n_train, 1, N - 1);
    std::vector<std::size_t> train_idx(perm.begin(),
                                       perm.begin() + static_cast<long>(n_train));
    std::vector<std::size_t> val_idx(perm.begin() + static_cast<long>(n_train),
                                     perm.end());

    QuantileNet net;
    net.config = config;

    // Standardization statistics from the training split only.
    net.norm_mean = VecD::Zero(static_cast<Eigen::Index>(d2));
    net.norm_std = VecD::Zero(static_cast<Eigen::Index>(d2));
    for (std::size_t r : train_idx)
        net.norm_mean += X.row(static_cast<Eigen::Index>(r)).transpose();
    net.norm_mean /= static_cast<double>(n_train);
    for (std::size_t r : train_idx) {
        VecD diff = X.row(static_cast<Eigen::Index>(r)).transpose() - net.norm_mean;
        net.norm_std += diff.cwiseProduct(diff);
    }
    net.norm_std = (net.norm_std / static_cast<double>(n_train)).cwiseSqrt();
    net.norm_std = net.norm_std.cwiseMax(1e-8);

    // He-style init for the weights. Hidden biases start at zero; the output
    // bias warm-starts at the per-column empirical (1-alpha)-quantile of the
    // train split. The nonnegativity clamp passes no gradient once a raw
    // output goes negative on every input, so an output unit that starts in
    // that region would be stuck at zero forever; the warm start keeps every
    // unit live and begins training from the constant-quantile solution.
    const auto dims = net.layer_dims();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
        const auto cols = static_cast<Eigen::Index>(dims[l]);
        MatRM W(rows, cols);
        const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                W(r, c) = scale * gauss(rng);
        net.weights.push_back(std::move(W));
        net.biases.push_back(VecD::Zero(rows));
    }
    {
        VecD& out_bias = net.biases.back();
        std::vector<double> col(n_train);
        for (std::size_t j = 0; j < d1; ++j) {
            for (std::size_t r = 0; r < n_train; ++r)
                col[r] = S(static_cast<Eigen::Index>(train_idx[r]),
                           static_cast<Eigen::Index>(j));
            double q0 = empirical_quantile_higher(col, 1.0 - config.alpha);
            if (config.output_clip > 0.0)  // stay inside the live region
                q0 = std::min(q0, 0.5 * config.output_clip);
            out_bias[static_cast<Eigen::Index>(j)] = q0;
        }
    }

    AdamState adam;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        adam.mw.push_back(MatRM::Zero(net.weights[l].rows(), net.weights[l].cols()));
        adam.vw.push_back(MatRM::Zero(net.weights[l].rows(), net.weights[l].cols()));
        adam.mb.push_back(VecD::Zero(net.biases[l].size()));
        adam.vb.push_back(VecD::Zero(net.biases[l].size()));
    }

    auto gather = [&](const std::vector<std::size_t>& idx, std::size_t lo,
                      std::size_t hi, const MatRM& src) {
        MatRM out(static_cast<Eigen::Index>(hi - lo), src.cols());
        for (std::size_t r = lo; r < hi; ++r)
            out.row(static_cast<Eigen::Index>(r - lo)) =
                src.row(static_cast<Eigen::Index>(idx[r]));
        return out;
    };
    auto eval_loss = [&](const std::vector<std::size_t>& idx) {
        MatRM Q = net.forward(gather(idx, 0, idx.size(), X));
        return mean_pinball_loss(Q, gather(idx, 0, idx.size(), S), config.alpha);
    };

    TrainLog log;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<MatRM> best_w = net.weights;
    std::vector<VecD> best_b = net.biases;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        for (std::size_t lo = 0; lo < n_train; lo += config.batch_size) {
            const std::size_t hi = std::min(lo + config.batch_size, n_train);
            Gradients g = backward(net, gather(train_idx, lo, hi, X),
                                   gather(train_idx, lo, hi, S));
            adam_update(net, g, adam);
        }
        const double train_loss = eval_loss(train_idx);
        const double val_loss = eval_loss(val_idx);
        log.epochs.push_back({epoch, train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best_w = net.weights;
            best_b = net.biases;
            log.best_epoch = epoch;
            stale = 0;
        } else {
            ++stale;
            if (stale >= config.patience)
                break;
        }
    }

    net.weights = std::move(best_w);
    net.biases = std::move(best_b);
    return {std::move(net), std::move(log)};
}

MatRM constant_quantile_model(const ErrorTensor& errors, double alpha) {
    if (errors.s.ndim() != 3)
        throw DimensionError("error tensor must be 3-d");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0,1)");
    const std::size_t T = errors.s.dim(0);
    const std::size_t p = errors.s.dim(1);
    const std::size_t d1 = errors.s.dim(2);
    MatRM q(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d1));
    std::vector<double> column(T);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < d1; ++j) {
            for (std::size_t t = 0; t < T; ++t)
                column[t] = errors.s(t, i, j);
            q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                empirical_quantile_higher(column, 1.0 - alpha);
        }
    }
    return q;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot open for writing: " + path.string());
    out << "epoch,train_loss,val_loss\n";
    for (const auto& e : epochs)
        out << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.val_loss) << '\n';
    if (!out)
        throw FileError("failed writing: " + path.string());
}

namespace {
constexpr int kCheckpointVersion = 1;

Tensor vec_to_tensor(const VecD& v) {
    Tensor t({static_cast<std::size_t>(v.size())});
    for (Eigen::Index k = 0; k < v.size(); ++k)
        t(static_cast<std::size_t>(k)) = v(k);
    return t;
}

Tensor mat_to_tensor(const MatRM& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
    return t;
}

VecD tensor_to_vec(const Tensor& t, std::size_t want, const std::string& name) {
    if (t.ndim() != 1 || t.dim(0) != want)
        throw CheckpointError("checkpoint tensor " + name + " has wrong shape");
    VecD v(static_cast<Eigen::Index>(want));
    for (std::size_t k = 0; k < want; ++k)
        v(static_cast<Eigen::Index>(k)) = t(k);
    return v;
}

MatRM tensor_to_mat(const Tensor& t, std::size_t rows, std::size_t cols,
                    const std::string& name) {
    if (t.ndim() != 2 || t.dim(0) != rows || t.dim(1) != cols)
        throw CheckpointError("checkpoint tensor " + name + " has wrong shape");
    MatRM m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t(r, c);
    return m;
}
} // namespace

void save_checkpoint(const std::filesystem::path& dir, const QuantileNet& net) {
    if (net.weights.size() != net.biases.size() || net.weights.empty())
        throw CheckpointError("net has no layers to save");
    std::filesystem::create_directories(dir);

    nlohmann::json meta;
    meta["format_version"] = kCheckpointVersion;
    meta["input_dim"] = net.config.input_dim;
    meta["output_dim"] = net.config.output_dim;
    meta["hidden_dims"] = net.config.hidden_dims;
    meta["alpha"] = net.config.alpha;
    meta["output_clip"] = net.config.output_clip;
    meta["tensor_count"] = 2 + 2 * net.weights.size();
    std::ofstream mf(dir / "meta.json", std::ios::binary | std::ios::trunc);
    if (!mf)
        throw FileError("cannot write meta.json in " + dir.string());
    mf << meta.dump(2) << '\n';

    std::ofstream wf(dir / "weights.ctsb", std::ios::binary | std::ios::trunc);
    if (!wf)
        throw FileError("cannot write weights.ctsb in " + dir.string());
    write_tensor(wf, vec_to_tensor(net.norm_mean), DType::F64);
    write_tensor(wf, vec_to_tensor(net.norm_std), DType::F64);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        write_tensor(wf, mat_to_tensor(net.weights[l]), DType::F64);
        write_tensor(wf, vec_to_tensor(net.biases[l]), DType::F64);
    }
    wf.flush();
    if (!wf)
        throw FileError("failed writing weights.ctsb in " + dir.string());
}

QuantileNet load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "meta.json", std::ios::binary);
    if (!mf)
        throw FileError("cannot open checkpoint meta: " + (dir / "meta.json").string());
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("unparseable meta.json: " + std::string(e.what()));
    }

    QuantileNet net;
    try {
        if (meta.at("format_version").get<int>() != kCheckpointVersion)
            throw CheckpointError("unsupported checkpoint format_version");
        net.config.input_dim = meta.at("input_dim").get<std::size_t>();
        net.config.output_dim = meta.at("output_dim").get<std::size_t>();
        net.config.hidden_dims = meta.at("hidden_dims").get<std::vector<std::size_t>>();
        net.config.alpha = meta.at("alpha").get<double>();
        net.config.output_clip = meta.at("output_clip").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("meta.json missing fields: " + std::string(e.what()));
    }
    if (net.config.input_dim == 0 || net.config.output_dim == 0)
        throw CheckpointError("checkpoint dims must be positive");

    std::ifstream wf(dir / "weights.ctsb", std::ios::binary);
    if (!wf)
        throw FileError("cannot open checkpoint weights: " +
                        (dir / "weights.ctsb").string());
    net.norm_mean = tensor_to_vec(read_tensor(wf), net.config.input_dim, "norm_mean");
    net.norm_std = tensor_to_vec(read_tensor(wf), net.config.input_dim, "norm_std");
    const auto dims = net.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        net.weights.push_back(
            tensor_to_mat(read_tensor(wf), dims[l + 1], dims[l], "W" + std::to_string(l)));
        net.biases.push_back(
            tensor_to_vec(read_tensor(wf), dims[l + 1], "b" + std::to_string(l)));
    }
    if (wf.peek() != std::char_traits<char>::eof())
        throw CheckpointError("trailing bytes after checkpoint tensors");
    return net;
}

} // namespace cts
