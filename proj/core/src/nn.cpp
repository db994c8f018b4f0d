#include "msr/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <json.hpp>

#include "bytes.hpp"
#include "msr/random.hpp"

namespace msr::nn {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw ValidationError("unknown activation \"" + std::string(s) + "\"");
}

std::vector<LayerSpec> chain(std::span<const std::size_t> widths, Activation hidden, Activation output) {
    if (widths.size() < 2) throw ValidationError("chain: need at least input and output widths");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        specs.push_back({widths[i], widths[i + 1], i + 2 == widths.size() ? output : hidden});
    }
    return specs;
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& m) {
    switch (act) {
        case Activation::Identity: break;
        case Activation::Tanh: m = m.array().tanh().matrix(); break;
        case Activation::Sigmoid:
            m = (1.0 / (1.0 + (-m.array()).exp())).matrix();
            break;
    }
}

// Derivative expressed through the activation output.
void multiply_derivative(Activation act, const Eigen::MatrixXd& out, Eigen::MatrixXd& delta) {
    switch (act) {
        case Activation::Identity: break;
        case Activation::Tanh: delta.array() *= 1.0 - out.array().square(); break;
        case Activation::Sigmoid: delta.array() *= out.array() * (1.0 - out.array()); break;
    }
}

}  // namespace

Gradients& Gradients::operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : bias) b *= s;
    return *this;
}

bool Gradients::all_finite() const {
    return std::all_of(weights.begin(), weights.end(), [](const auto& w) { return w.allFinite(); }) &&
           std::all_of(bias.begin(), bias.end(), [](const auto& b) { return b.allFinite(); });
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& w : weights) m = std::max(m, w.cwiseAbs().maxCoeff());
    for (const auto& b : bias) m = std::max(m, b.cwiseAbs().maxCoeff());
    return m;
}

Network::Network(std::vector<LayerSpec> specs) {
    if (specs.empty()) throw ValidationError("network needs at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        if (s.input_size == 0 || s.output_size == 0) throw ValidationError("layer sizes must be positive");
        if (i > 0 && specs[i - 1].output_size != s.input_size) {
            throw ValidationError("layer " + std::to_string(i) + " input size " +
                                  std::to_string(s.input_size) + " does not chain with previous output " +
                                  std::to_string(specs[i - 1].output_size));
        }
        const auto out = static_cast<Eigen::Index>(s.output_size);
        const auto in = static_cast<Eigen::Index>(s.input_size);
        layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out), s.activation});
    }
}

Network Network::glorot(std::vector<LayerSpec> specs, std::uint64_t seed) {
    Network net(std::move(specs));
    Rng rng(seed);
    for (auto& layer : net.layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
        // Row-major fill order so the draw sequence does not depend on storage order.
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                layer.weights(r, c) = rng.uniform(-limit, limit);
            }
        }
    }
    return net;
}

std::vector<LayerSpec> Network::specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) {
        out.push_back({static_cast<std::size_t>(l.weights.cols()), static_cast<std::size_t>(l.weights.rows()),
                       l.activation});
    }
    return out;
}

std::size_t Network::input_size() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.cols());
}

std::size_t Network::output_size() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weights.rows());
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

void Network::check_input(const Eigen::MatrixXd& x) const {
    if (layers_.empty()) throw ValidationError("forward on an empty network");
    if (static_cast<std::size_t>(x.rows()) != input_size()) {
        throw ValidationError("input length " + std::to_string(x.rows()) + " does not match network input " +
                              std::to_string(input_size()));
    }
}

ForwardCache Network::forward(const Eigen::MatrixXd& x) const {
    check_input(x);
    ForwardCache cache;
    cache.revision = revision_;
    cache.pre.reserve(layers_.size());
    cache.post.reserve(layers_.size() + 1);
    cache.post.push_back(x);
    for (const auto& l : layers_) {
        Eigen::MatrixXd z = l.weights * cache.post.back();
        z.colwise() += l.bias;
        Eigen::MatrixXd a = z;
        apply_activation(l.activation, a);
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(a));
    }
    return cache;
}

Eigen::MatrixXd Network::predict_prefix(const Eigen::MatrixXd& x, std::size_t count) const {
    check_input(x);
    if (count > layers_.size()) throw ValidationError("predict_prefix: too many layers requested");
    Eigen::MatrixXd a = x;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& l = layers_[i];
        Eigen::MatrixXd z = l.weights * a;
        z.colwise() += l.bias;
        apply_activation(l.activation, z);
        a = std::move(z);
    }
    return a;
}

Eigen::MatrixXd Network::predict(const Eigen::MatrixXd& x) const { return predict_prefix(x, layers_.size()); }

Eigen::VectorXd Network::predict(const Eigen::VectorXd& x) const {
    return predict(Eigen::MatrixXd(x)).col(0);
}

Gradients Network::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_grad) const {
    if (cache.revision != revision_ || cache.post.size() != layers_.size() + 1 ||
        cache.pre.size() != layers_.size()) {
        throw ValidationError("backward: forward cache does not belong to this network state");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (cache.post[l].rows() != layers_[l].weights.cols() || cache.pre[l].rows() != layers_[l].weights.rows()) {
            throw ValidationError("backward: forward cache shape mismatch");
        }
    }
    const Eigen::MatrixXd& out = cache.output();
    if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
        throw ValidationError("backward: loss gradient shape does not match network output");
    }

    Gradients g;
    g.weights.resize(layers_.size());
    g.bias.resize(layers_.size());
    Eigen::MatrixXd delta = output_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto& l = layers_[i];
        multiply_derivative(l.activation, cache.post[i + 1], delta);
        g.weights[i].noalias() = delta * cache.post[i].transpose();
        g.bias[i] = delta.rowwise().sum();
        if (i > 0) {
            Eigen::MatrixXd prev = l.weights.transpose() * delta;
            delta = std::move(prev);
        }
    }
    return g;
}

Gradients Network::zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
        g.weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
        g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    return g;
}

bool Network::all_finite() const {
    return std::all_of(layers_.begin(), layers_.end(),
                       [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

bool operator==(const Network& a, const Network& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        const auto& x = a.layers_[i];
        const auto& y = b.layers_[i];
        if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
            x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.bias != y.bias) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------

double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.size() == 0) {
        throw ValidationError("mse_loss: shape mismatch or empty input");
    }
    return (target - pred).squaredNorm() / static_cast<double>(pred.size());
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw ValidationError("mse_loss: length mismatch or empty input");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = target[i] - pred[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.size() == 0) {
        throw ValidationError("mse_gradient: shape mismatch or empty input");
    }
    return (2.0 / static_cast<double>(pred.size())) * (pred - target);
}

AdamState AdamState::fresh(const Network& net) {
    AdamState s;
    for (const auto& l : net.layers()) {
        s.m_weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
        s.v_weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
        s.m_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
        s.v_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    return s;
}

namespace {

template <typename Param>
void adam_update(Param& theta, const Param& g, Param& m, Param& v, double lr, const AdamParams& p,
                 double bc1, double bc2) {
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + p.epsilon);
}

}  // namespace

void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr, const AdamParams& params) {
    const auto& layers = net.layers();
    if (grads.weights.size() != layers.size() || grads.bias.size() != layers.size() ||
        state.m_weights.size() != layers.size() || state.v_weights.size() != layers.size() ||
        state.m_bias.size() != layers.size() || state.v_bias.size() != layers.size()) {
        throw ValidationError("adam_step: gradient/state layer count mismatch");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
        if (!same(grads.weights[i], l.weights) || !same(grads.bias[i], l.bias) ||
            !same(state.m_weights[i], l.weights) || !same(state.v_weights[i], l.weights) ||
            !same(state.m_bias[i], l.bias) || !same(state.v_bias[i], l.bias)) {
            throw ValidationError("adam_step: shape mismatch in layer " + std::to_string(i));
        }
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("adam_step: learning rate must be >= 0");
    if (!grads.all_finite()) throw DivergenceError("adam_step: non-finite gradient; parameters left untouched");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(params.beta1, t);
    const double bc2 = 1.0 - std::pow(params.beta2, t);
    auto& mut = net.mutable_layers();
    for (std::size_t i = 0; i < mut.size(); ++i) {
        adam_update(mut[i].weights, grads.weights[i], state.m_weights[i], state.v_weights[i], lr, params, bc1, bc2);
        adam_update(mut[i].bias, grads.bias[i], state.m_bias[i], state.v_bias[i], lr, params, bc1, bc2);
    }
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (!(lr0 >= 0.0)) throw ValidationError("train: lr0 must be >= 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("train: decay must lie in (0, 1]");
    if (decay_every < 1) throw ValidationError("train: decay_every must be >= 1");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw ValidationError("lr_at_epoch: epoch must be >= 0");
    return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

double evaluate_mse(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw ValidationError("evaluate_mse: empty dataset");
    constexpr Eigen::Index kChunk = 256;
    double acc = 0.0;
    for (Eigen::Index start = 0; start < data.size(); start += kChunk) {
        const Eigen::Index n = std::min(kChunk, data.size() - start);
        const Eigen::MatrixXd pred = net.predict(Eigen::MatrixXd(data.inputs.middleCols(start, n)));
        acc += (data.targets.middleCols(start, n) - pred).squaredNorm();
    }
    return acc / static_cast<double>(data.targets.size());
}

namespace {

std::vector<Eigen::Index> permutation(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
    return idx;
}

std::vector<Eigen::Index> draw_batch(Eigen::Index n, int batch, Rng& rng) {
    std::vector<Eigen::Index> idx;
    if (batch > n) {
        for (int i = 0; i < batch; ++i) idx.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
        return idx;
    }
    // Partial Fisher-Yates: first `batch` entries of a random permutation.
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    for (int i = 0; i < batch; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
        std::swap(all[static_cast<std::size_t>(i)], all[j]);
    }
    all.resize(static_cast<std::size_t>(batch));
    return all;
}

void step_on(Network& net, AdamState& state, const Dataset& data, const std::vector<Eigen::Index>& idx,
             double lr, const AdamParams& adam) {
    const Eigen::MatrixXd x = data.inputs(Eigen::all, idx);
    const Eigen::MatrixXd y = data.targets(Eigen::all, idx);
    const ForwardCache cache = net.forward(x);
    const Gradients g = net.backward(cache, mse_gradient(cache.output(), y));
    adam_step(net, g, state, lr, adam);
}

}  // namespace

TrainHistory train(Network& net, const Dataset& train_set, const Dataset* test_set, const TrainConfig& cfg,
                   const EpochObserver& observer) {
    cfg.validate();
    if (train_set.size() == 0) throw ValidationError("train: empty training set");
    if (train_set.targets.cols() != train_set.size()) throw ValidationError("train: inputs/targets count mismatch");
    if (static_cast<std::size_t>(train_set.inputs.rows()) != net.input_size() ||
        static_cast<std::size_t>(train_set.targets.rows()) != net.output_size()) {
        throw ValidationError("train: dataset dimensions do not match the network");
    }

    Rng rng(cfg.seed);
    AdamState state = AdamState::fresh(net);
    TrainHistory history;
    const Eigen::Index n = train_set.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        if (!cfg.full_pass || cfg.batch_size > n) {
            step_on(net, state, train_set, draw_batch(n, cfg.batch_size, rng), lr, cfg.adam);
        } else {
            const auto perm = permutation(n, rng);
            for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
                const auto end = std::min<Eigen::Index>(n, start + cfg.batch_size);
                std::vector<Eigen::Index> idx(perm.begin() + start, perm.begin() + end);
                step_on(net, state, train_set, idx, lr, cfg.adam);
            }
        }

        const double train_loss = evaluate_mse(net, train_set);
        if (!std::isfinite(train_loss) || !net.all_finite()) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  " (train loss " + std::to_string(train_loss) + ")");
        }
        history.train_loss.push_back(train_loss);
        if (test_set != nullptr) {
            const double test_loss = evaluate_mse(net, *test_set);
            if (!std::isfinite(test_loss)) {
                throw DivergenceError("test loss became non-finite at epoch " + std::to_string(epoch));
            }
            history.test_loss.push_back(test_loss);
        }
        if (observer) observer(epoch, net);
    }
    return history;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[8] = {'M', 'S', 'R', 'N', 'E', 'T', 0, 1};

using detail::put_f64;
using detail::put_u32;
using detail::put_u64;

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> encode_network(const Network& net) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(64 + net.parameter_count() * 8);
    put_u32(out, kNetworkFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layer_count()));
    for (const auto& s : net.specs()) {
        put_u32(out, static_cast<std::uint32_t>(s.input_size));
        put_u32(out, static_cast<std::uint32_t>(s.output_size));
        put_u32(out, static_cast<std::uint32_t>(s.activation));
    }
    for (const auto& l : net.layers()) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put_f64(out, l.weights(r, c));
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f64(out, l.bias(r));
    }
    put_u64(out, fnv1a64(out));
    return out;
}

Network decode_network(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) + 16 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        throw FormatError("not a network file (bad magic)");
    }
    const auto body = bytes.first(bytes.size() - 8);
    detail::Reader tail(bytes.last(8), "network file");
    if (tail.u(8) != fnv1a64(body)) throw FormatError("network file checksum mismatch (file corrupted)");

    detail::Reader in(body, "network file");
    in.u(8);
    const std::uint32_t version = in.u32();
    if (version != kNetworkFormatVersion) {
        throw FormatError("unsupported network format version " + std::to_string(version));
    }
    const std::uint32_t count = in.u32();
    if (count == 0 || count > 1024) throw FormatError("implausible layer count");
    std::vector<LayerSpec> specs;
    for (std::uint32_t i = 0; i < count; ++i) {
        LayerSpec s;
        s.input_size = in.u32();
        s.output_size = in.u32();
        const std::uint32_t act = in.u32();
        if (act > static_cast<std::uint32_t>(Activation::Sigmoid)) throw FormatError("unknown activation code");
        s.activation = static_cast<Activation>(act);
        specs.push_back(s);
    }
    Network net(specs);
    auto& layers = net.mutable_layers();
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = in.f64();
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = in.f64();
    }
    if (in.pos() != body.size()) throw FormatError("network file has trailing bytes");
    return net;
}

std::string layer_specs_json(const Network& net) {
    nlohmann::ordered_json j;
    j["format"] = "msr-network";
    j["version"] = kNetworkFormatVersion;
    j["layers"] = nlohmann::ordered_json::array();
    for (const auto& s : net.specs()) {
        j["layers"].push_back({{"input_size", s.input_size},
                               {"output_size", s.output_size},
                               {"activation", std::string(to_string(s.activation))}});
    }
    return j.dump(2) + "\n";
}

void save_network(const std::filesystem::path& path, const Network& net) {
    detail::write_bytes(path, encode_network(net));
    auto sidecar = path;
    sidecar.replace_extension(".json");
    std::ofstream js(sidecar);
    js << layer_specs_json(net);
    if (!js) throw Error("write failed: " + sidecar.string());
}

Network load_network(const std::filesystem::path& path) {
    const auto bytes = detail::read_bytes(path, "model file");
    try {
        return decode_network(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace msr::nn
