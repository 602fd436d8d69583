#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "conformal_ts/panel.hpp"

namespace cts {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecD = Eigen::VectorXd;

// Pinball (quantile) loss at level 1 - alpha for an absolute error s and a
// predicted quantile q: max((1-alpha)(s-q), alpha(q-s)). Ties at s == q take
// the first branch, whose derivative in q is -(1-alpha).
double pinball_loss(double s, double q, double alpha);

struct NetConfig {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<std::size_t> hidden_dims{512, 256};
    double alpha = 0.1;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    double split_fraction = 0.8;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    // When positive, forward output is additionally clamped to [0, clip]
    // (bounded-score runs). Zero disables the upper clamp.
    double output_clip = 0.0;

    void validate() const;
};

// Fully connected ReLU net mapping a d2 feature row to d1 nonnegative
// quantile estimates: out = max(raw, 0) elementwise (then the optional upper
// clamp). Inputs are standardized with statistics frozen from the training
// split.
struct QuantileNet {
    NetConfig config;
    VecD norm_mean;              // [input_dim]
    VecD norm_std;               // [input_dim], entries >= tiny floor
    std::vector<MatRM> weights;  // layer l: [dims[l+1]][dims[l]]
    std::vector<VecD> biases;    // layer l: [dims[l+1]]

    // Layer widths including input and output.
    std::vector<std::size_t> layer_dims() const;

    // Forward pass on raw (unstandardized) feature rows X: [n][input_dim],
    // returns [n][output_dim].
    MatRM forward(const MatRM& X) const;
    VecD forward_row(const VecD& x) const;
};

// Mean pinball loss over a batch: rows of S are per-horizon targets.
double mean_pinball_loss(const MatRM& Q, const MatRM& S, double alpha);

// Parameter gradients of the mean pinball loss of net(X) against S.
struct Gradients {
    std::vector<MatRM> weights;
    std::vector<VecD> biases;
};
Gradients backward(const QuantileNet& net, const MatRM& X, const MatRM& S);

struct TrainLog {
    struct Epoch {
        std::size_t epoch = 0;  // 1-based
        double train_loss = 0.0;
        double val_loss = 0.0;
    };
    std::vector<Epoch> epochs;
    std::size_t best_epoch = 0;  // 1-based epoch whose weights were kept
    void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
    QuantileNet net;
    TrainLog log;
};

// Trains on rows (t, i): features[t][i][:] -> errors[t][i][:], with a seeded
// random split into train/validation, Adam, minibatches, and early stopping
// on validation pinball loss. Deterministic for a fixed seed.
TrainResult train_quantile_net(const Tensor& features, const ErrorTensor& errors,
                               NetConfig config);

// Per-cell constant (1-alpha) empirical quantiles of calibration errors,
// returned as a [p][d1] matrix.
MatRM constant_quantile_model(const ErrorTensor& errors, double alpha);

// Checkpoint directory: meta.json (dims, alpha, version) + weights.ctsb
// (norm_mean, norm_std, then W/b per layer as consecutive CTSB records).
// Round trips are bit-exact.
void save_checkpoint(const std::filesystem::path& dir, const QuantileNet& net);
QuantileNet load_checkpoint(const std::filesystem::path& dir);

} // namespace cts
