#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msr/error.hpp"

namespace msr::nn {

enum class Activation { Identity, Tanh, Sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct LayerSpec {
    std::size_t input_size = 0;
    std::size_t output_size = 0;
    Activation activation = Activation::Identity;
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Builds a chain of specs from layer widths: hidden layers get `hidden`,
/// the last layer gets `output`.
std::vector<LayerSpec> chain(std::span<const std::size_t> widths, Activation hidden, Activation output);

struct DenseLayer {
    Eigen::MatrixXd weights;  // output_size x input_size
    Eigen::VectorXd bias;     // output_size
    Activation activation = Activation::Identity;
};

/// Per-layer pre- and post-activations of one forward pass; columns are samples.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> pre;   // pre[l] = W_l a_{l} + b_l
    std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = act(pre[l])
    std::uint64_t revision = 0;

    const Eigen::MatrixXd& output() const { return post.back(); }
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;

    Gradients& operator*=(double s);
    bool all_finite() const;
    double max_abs() const;
};

/// Fully connected feed-forward network. Parameters are zero on construction.
class Network {
public:
    Network() = default;
    explicit Network(std::vector<LayerSpec> specs);

    /// Uniform +/- sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    static Network glorot(std::vector<LayerSpec> specs, std::uint64_t seed);

    std::vector<LayerSpec> specs() const;
    std::size_t layer_count() const { return layers_.size(); }
    std::size_t input_size() const;
    std::size_t output_size() const;
    std::size_t parameter_count() const;

    const std::vector<DenseLayer>& layers() const { return layers_; }
    /// Mutable access; invalidates outstanding forward caches.
    std::vector<DenseLayer>& mutable_layers() {
        ++revision_;
        return layers_;
    }
    std::uint64_t revision() const { return revision_; }

    /// Columns of x are samples.
    ForwardCache forward(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd predict(const Eigen::VectorXd& x) const;
    /// Output of the first `count` layers only.
    Eigen::MatrixXd predict_prefix(const Eigen::MatrixXd& x, std::size_t count) const;

    /// Gradients of a loss with respect to every parameter, given dL/d(output).
    Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const;

    Gradients zero_gradients() const;
    bool all_finite() const;

    friend bool operator==(const Network& a, const Network& b);

private:
    void check_input(const Eigen::MatrixXd& x) const;

    std::vector<DenseLayer> layers_;
    std::uint64_t revision_ = 0;
};

/// (1/N) sum (target - pred)^2 over every element.
double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
double mse_loss(std::span<const double> pred, std::span<const double> target);
/// d mse / d pred.
Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_bias, v_bias;
    std::uint64_t step = 0;

    static AdamState fresh(const Network& net);
};

/// One bias-corrected ADAM update. Throws DivergenceError, leaving the network
/// and state untouched, if any gradient is non-finite.
void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr,
               const AdamParams& params = {});

struct TrainConfig {
    int epochs = 50;
    int batch_size = 128;
    double lr0 = 0.005;
    double decay = 0.5;
    int decay_every = 10;
    AdamParams adam;
    std::uint64_t seed = 0;
    /// false: one mini-batch update per epoch; true: one pass over a shuffled
    /// permutation of the training set per epoch.
    bool full_pass = false;

    void validate() const;
};

/// lr0 * decay^floor(epoch / decay_every), epoch counted from 0.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// Supervised pairs; column j of inputs maps to column j of targets.
struct Dataset {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;

    Eigen::Index size() const { return inputs.cols(); }
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> test_loss;  // empty when no test split was supplied
};

/// Called after every epoch with the epoch index and the current network.
using EpochObserver = std::function<void(int epoch, const Network& net)>;

/// MSE of net over a dataset, evaluated in chunks.
double evaluate_mse(const Network& net, const Dataset& data);

/// Trains in place; deterministic for a fixed cfg.seed. Losses are full-split
/// MSE evaluated after each epoch. When batch_size exceeds the training set,
/// each batch is drawn with replacement.
TrainHistory train(Network& net, const Dataset& train_set, const Dataset* test_set,
                   const TrainConfig& cfg, const EpochObserver& observer = {});

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kNetworkFormatVersion = 1;

/// Binary layout: "MSRNET\0\1" magic, u32 version, u32 layer count, per-layer
/// (u32 in, u32 out, u32 activation), then per layer the row-major weights
/// and bias as little-endian f64, then a u64 FNV-1a checksum of all
/// preceding bytes.
std::vector<std::uint8_t> encode_network(const Network& net);
Network decode_network(std::span<const std::uint8_t> bytes);

std::string layer_specs_json(const Network& net);

/// Writes `path` and the JSON sidecar `path` with extension ".json".
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace msr::nn
