#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tabudrop/data.hpp"
#include "tabudrop/mask.hpp"
#include "tabudrop/matrix.hpp"
#include "tabudrop/rng.hpp"

namespace tabudrop {

struct DenseLayer {
    Matrix weights;             // out x in
    std::vector<double> bias;   // out

    DenseLayer() = default;
    DenseLayer(std::size_t out, std::size_t in)
        : weights(out, in), bias(out, 0.0) {}

    std::size_t in_width() const { return weights.cols(); }
    std::size_t out_width() const { return weights.rows(); }

    /// Uniform init in +-sqrt(6 / fan_in); biases zero.
    void init(Rng& rng);

    /// y = x W^T + b over a batch.
    Matrix forward(const Matrix& x) const;
};

struct LayerGrads {
    Matrix weights;
    std::vector<double> bias;
};

/// Parameter gradients for the three dense layers, first to last.
using Gradients = std::array<LayerGrads, 3>;

struct NetworkConfig {
    std::size_t input_width = 0;
    std::size_t hidden_width = 256;
    std::size_t classes = 10;
    DropoutConfig dropout;
    /// Default: a single dropout site between the two hidden layers.
    /// When set, each hidden activation gets its own site and ledger.
    bool dropout_after_each_hidden = false;
};

/// Row-wise log-softmax; each output row's exponentials sum to 1.
Matrix log_softmax(const Matrix& logits);

/// Mean over the batch of -log_probs[row, label].
double nll_loss(const Matrix& log_probs, const std::vector<int>& labels);

/// Fixed-shape classifier: dense -> relu -> [dropout] -> dense -> relu ->
/// [dropout] -> dense -> log-softmax. Owns its dropout sites and the forward
/// caches the backward pass consumes. One network plus its optimizer state
/// is a single-owner training context.
class Network {
public:
    Network(const NetworkConfig& cfg, Rng& init_rng);

    const NetworkConfig& config() const { return cfg_; }

    /// Log-probabilities for a batch. Training mode runs the dropout sites
    /// (advancing ledgers) and caches intermediates for backward(); eval
    /// mode is a pure function of the parameters.
    Matrix forward(const Matrix& batch, bool training, Rng& rng);

    /// Gradients of the mean NLL loss for the batch of the most recent
    /// training forward. Throws StateError without one.
    Gradients backward(const std::vector<int>& labels);

    /// Epoch boundary for per-epoch dropout ticks.
    void start_epoch();

    /// Adaptive tenure update across all sites.
    void set_tenure(std::uint64_t tenure);

    DenseLayer& layer(std::size_t i) { return layers_[i]; }
    const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
    static constexpr std::size_t layer_count = 3;

    std::vector<DropoutSite>& sites() { return sites_; }
    const std::vector<DropoutSite>& sites() const { return sites_; }

private:
    NetworkConfig cfg_;
    std::array<DenseLayer, 3> layers_;
    std::vector<DropoutSite> sites_;

    // Forward caches (training mode only).
    Matrix input_, pre1_, post1_, pre2_, post2_, log_probs_;
    bool cached_ = false;
};

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment estimates per parameter plus the step counter.
class AdamState {
public:
    AdamState(const Network& net, AdamConfig cfg);

    /// Standard bias-corrected Adam update, in place on the network.
    void step(Network& net, const Gradients& grads);

    std::uint64_t step_count() const { return steps_; }
    const AdamConfig& config() const { return cfg_; }
    const Gradients& first_moments() const { return m_; }
    const Gradients& second_moments() const { return v_; }

    friend void save_checkpoint(const Network&, const AdamState&,
                                const std::string&);
    friend void load_checkpoint(Network&, AdamState&, const std::string&);

private:
    AdamConfig cfg_;
    Gradients m_, v_;
    std::uint64_t steps_ = 0;
};

/// Fraction of examples whose argmax prediction differs from the label.
/// Runs in eval mode: no dropout, no scaling, no ledger ticks.
double evaluate(Network& net, const Dataset& dataset);

/// Mean NLL of a dataset in eval mode (reward-on-validation input).
double eval_mean_nll(Network& net, const Dataset& dataset);

/// Central-difference check of backward() against the loss surface, with
/// the dropout masks held fixed across probes. Returns the worst relative
/// error over every parameter; the denominator is floored at 1e-3 so
/// near-zero gradients are compared absolutely. Requires per-epoch tick
/// granularity when dropout is active (per-batch would resample the mask
/// on every probe).
double gradcheck_max_rel_error(Network& net, const Matrix& batch,
                               const std::vector<int>& labels, double step);

/// Binary checkpoint of parameters, Adam state and dropout ledgers.
/// Round-trips bit-exactly at 64-bit precision.
void save_checkpoint(const Network& net, const AdamState& adam,
                     const std::string& path);

/// Restores into a network/optimizer pair of the same configuration.
void load_checkpoint(Network& net, AdamState& adam, const std::string& path);

}  // namespace tabudrop
