#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "msr/error.hpp"
#include "msr/nn.hpp"
#include "msr/random.hpp"
#include "test_support.hpp"

using namespace msr;
using namespace msr::nn;

namespace {

Network single_layer(std::size_t in, std::size_t out, Activation a) {
    return Network({LayerSpec{in, out, a}});
}

double loss_of(const Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    return mse_loss(net.predict(x), y);
}

// Central differences over every parameter, h = 1e-5.
Gradients numeric_gradients(Network net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double h = 1e-5) {
    Gradients g = net.zero_gradients();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (Eigen::Index i = 0; i < g.weights[l].size(); ++i) {
            double& w = net.mutable_layers()[l].weights.data()[i];
            const double keep = w;
            w = keep + h;
            const double up = loss_of(net, x, y);
            net.mutable_layers()[l].weights.data()[i] = keep - h;
            const double down = loss_of(net, x, y);
            net.mutable_layers()[l].weights.data()[i] = keep;
            g.weights[l].data()[i] = (up - down) / (2 * h);
        }
        for (Eigen::Index i = 0; i < g.bias[l].size(); ++i) {
            double& b = net.mutable_layers()[l].bias[i];
            const double keep = b;
            b = keep + h;
            const double up = loss_of(net, x, y);
            net.mutable_layers()[l].bias[i] = keep - h;
            const double down = loss_of(net, x, y);
            net.mutable_layers()[l].bias[i] = keep;
            g.bias[l][i] = (up - down) / (2 * h);
        }
    }
    return g;
}

double max_relative_deviation(const Gradients& a, const Gradients& n) {
    double worst = 0.0;
    auto cmp = [&](double x, double y) {
        const double scale = std::max({std::abs(x), std::abs(y), 1e-8});
        worst = std::max(worst, std::abs(x - y) / scale);
    };
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < a.weights[l].size(); ++i) cmp(a.weights[l].data()[i], n.weights[l].data()[i]);
        for (Eigen::Index i = 0; i < a.bias[l].size(); ++i) cmp(a.bias[l][i], n.bias[l][i]);
    }
    return worst;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

}  // namespace

TEST(Forward, IdentityLayerPassesInputThrough) {
    Network net = single_layer(2, 2, Activation::Identity);
    net.mutable_layers()[0].weights = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd y = net.predict(Eigen::VectorXd(Eigen::Vector2d(1, 2)));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 2.0);
}

TEST(Forward, ZeroSigmoidLayerGivesHalf) {
    const Network net = single_layer(3, 4, Activation::Sigmoid);
    const Eigen::VectorXd y = net.predict(Eigen::VectorXd(Eigen::Vector3d(-7, 0.3, 12)));
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.5);
}

TEST(Forward, TanhSaturatesBelowOne) {
    Network net = single_layer(2, 3, Activation::Tanh);
    net.mutable_layers()[0].bias.setConstant(8.0);
    const Eigen::VectorXd y = net.predict(Eigen::VectorXd(Eigen::Vector2d(0.4, -1)));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        EXPECT_GT(y[i], 0.9999);
        EXPECT_LT(y[i], 1.0);
    }
}

TEST(Forward, WrongInputSizeIsRejected) {
    const Network net = single_layer(3, 1, Activation::Identity);
    EXPECT_THROW(net.predict(Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 4))), ValidationError);
}

TEST(Forward, ChainBuildsHiddenAndOutputActivations) {
    const std::vector<std::size_t> widths{4, 3, 2};
    const auto specs = chain(widths, Activation::Tanh, Activation::Sigmoid);
    ASSERT_EQ(specs.size(), 2u);
    EXPECT_EQ(specs[0], (LayerSpec{4, 3, Activation::Tanh}));
    EXPECT_EQ(specs[1], (LayerSpec{3, 2, Activation::Sigmoid}));
}

TEST(Loss, HandValues) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Constant(2, 3, 0.25);
    EXPECT_EQ(mse_loss(a, a), 0.0);
    EXPECT_DOUBLE_EQ(mse_loss(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Ones(2, 1)), 1.0);
    const std::vector<double> p{0.5}, t{0.1};
    EXPECT_NEAR(mse_loss(p, t), 0.16, 1e-15);
}

TEST(Loss, ShapeMismatchIsRejected) {
    EXPECT_THROW(mse_loss(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 3)), ValidationError);
}

TEST(Backprop, ZeroNetworkZeroLossGradient) {
    const Network net({LayerSpec{3, 4, Activation::Tanh}, LayerSpec{4, 2, Activation::Sigmoid}});
    const auto cache = net.forward(Eigen::MatrixXd::Ones(3, 5));
    const Gradients g = net.backward(cache, Eigen::MatrixXd::Zero(2, 5));
    EXPECT_EQ(g.max_abs(), 0.0);
}

TEST(Backprop, MatchesFiniteDifferencesOnRandomNetworks) {
    Rng rng(20240611);
    const Activation acts[] = {Activation::Identity, Activation::Tanh, Activation::Sigmoid};
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int depth = 1 + static_cast<int>(rng.below(3));
        std::vector<LayerSpec> specs;
        std::size_t in = 1 + rng.below(5);
        for (int l = 0; l < depth; ++l) {
            const std::size_t out = 1 + rng.below(5);
            specs.push_back({in, out, acts[rng.below(3)]});
            in = out;
        }
        const Network net = Network::glorot(specs, rng.next());
        const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.below(4));
        const Eigen::MatrixXd x = random_matrix(rng, static_cast<Eigen::Index>(specs.front().input_size), batch, -1, 1);
        const Eigen::MatrixXd y = random_matrix(rng, static_cast<Eigen::Index>(specs.back().output_size), batch, 0, 1);

        const auto cache = net.forward(x);
        const Gradients analytic = net.backward(cache, mse_gradient(cache.output(), y));
        const double dev = max_relative_deviation(analytic, numeric_gradients(net, x, y));
        worst = std::max(worst, dev);
        EXPECT_LT(dev, 1e-4) << "network " << trial;
    }
    RecordProperty("worst_relative_deviation", std::to_string(worst));
}

TEST(Backprop, LinearInLossGradient) {
    const Network net = Network::glorot({LayerSpec{3, 4, Activation::Tanh}, LayerSpec{4, 2, Activation::Sigmoid}}, 5);
    Rng rng(3);
    const auto cache = net.forward(random_matrix(rng, 3, 4, -1, 1));
    const Eigen::MatrixXd d = random_matrix(rng, 2, 4, -1, 1);
    const Gradients g1 = net.backward(cache, d);
    const Gradients g2 = net.backward(cache, 2.0 * d);
    for (std::size_t l = 0; l < g1.weights.size(); ++l) {
        EXPECT_EQ(g2.weights[l], (2.0 * g1.weights[l]).eval());
        EXPECT_EQ(g2.bias[l], (2.0 * g1.bias[l]).eval());
    }
}

TEST(Backprop, StaleCacheIsRejected) {
    Network net = Network::glorot({LayerSpec{2, 2, Activation::Tanh}}, 1);
    const auto cache = net.forward(Eigen::MatrixXd::Ones(2, 1));
    net.mutable_layers()[0].bias[0] = 0.3;
    EXPECT_THROW(net.backward(cache, Eigen::MatrixXd::Ones(2, 1)), ValidationError);
}

TEST(Adam, FirstStepHandExample) {
    Network net = single_layer(1, 1, Activation::Identity);
    net.mutable_layers()[0].weights(0, 0) = 1.0;
    Gradients g = net.zero_gradients();
    g.weights[0](0, 0) = 2.0;
    AdamState st = AdamState::fresh(net);
    adam_step(net, g, st, 0.005);

    // m = 0.2, v = 0.004; bias-corrected m^ = 2, v^ = 4.
    const double m_hat = (0.1 * 2.0) / (1 - 0.9);
    const double v_hat = (0.001 * 4.0) / (1 - 0.999);
    const double expected = 1.0 - 0.005 * m_hat / (std::sqrt(v_hat) + 1e-8);
    EXPECT_NEAR(net.layers()[0].weights(0, 0), 0.995, 1e-9);
    EXPECT_NEAR(net.layers()[0].weights(0, 0), expected, 1e-15);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientIsBitExactNoOp) {
    Network net = Network::glorot({LayerSpec{3, 5, Activation::Tanh}, LayerSpec{5, 2, Activation::Sigmoid}}, 9);
    net.mutable_layers()[1].bias.setConstant(-0.37);
    const Network before = net;
    AdamState st = AdamState::fresh(net);
    adam_step(net, net.zero_gradients(), st, 0.005);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto& a = net.layers()[l];
        const auto& b = before.layers()[l];
        EXPECT_EQ(std::memcmp(a.weights.data(), b.weights.data(), sizeof(double) * a.weights.size()), 0);
        EXPECT_EQ(std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()), 0);
    }
}

TEST(Adam, ConstantGradientApproachesSignStep) {
    Network net = single_layer(1, 1, Activation::Identity);
    Gradients g = net.zero_gradients();
    g.weights[0](0, 0) = 0.7;
    AdamState st = AdamState::fresh(net);
    const double lr = 0.01;
    double last_step = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double before = net.layers()[0].weights(0, 0);
        adam_step(net, g, st, lr);
        last_step = before - net.layers()[0].weights(0, 0);
    }
    EXPECT_NEAR(last_step, lr, 1e-6);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
    Network net = Network::glorot({LayerSpec{2, 2, Activation::Tanh}}, 4);
    const Network before = net;
    AdamState st = AdamState::fresh(net);
    Gradients g = net.zero_gradients();
    g.bias[0][1] = std::nan("");
    EXPECT_THROW(adam_step(net, g, st, 0.01), DivergenceError);
    EXPECT_TRUE(net == before);
    EXPECT_EQ(st.step, 0u);
}

TEST(Schedule, StepDecay) {
    TrainConfig cfg;
    EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 0), 0.005);
    EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 5), 0.005);
    EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 10), 0.0025);
    EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 25), 0.00125);
    EXPECT_THROW(lr_at_epoch(cfg, -1), ValidationError);
}

namespace {

Dataset one_sample() {
    Dataset d;
    d.inputs = Eigen::MatrixXd(2, 1);
    d.inputs << 0.3, -0.8;
    d.targets = Eigen::MatrixXd(3, 1);
    d.targets << 0.2, 0.7, 0.9;
    return d;
}

Network small_net(std::uint64_t seed) {
    return Network::glorot({LayerSpec{2, 6, Activation::Tanh}, LayerSpec{6, 3, Activation::Sigmoid}}, seed);
}

}  // namespace

TEST(Train, OverfitsOneSample) {
    Network net = small_net(1);
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.batch_size = 1;
    cfg.lr0 = 0.01;
    cfg.decay_every = 1000;
    const Dataset d = one_sample();
    const auto h = train(net, d, nullptr, cfg);
    ASSERT_EQ(h.train_loss.size(), 300u);
    EXPECT_TRUE(h.test_loss.empty());
    EXPECT_LT(h.train_loss.back(), 1e-3);
    // Monotone after a short warm-up.
    for (std::size_t i = 20; i + 1 < h.train_loss.size(); ++i) EXPECT_LE(h.train_loss[i + 1], h.train_loss[i] + 1e-12);
}

TEST(Train, SameSeedSameHistory) {
    Rng rng(8);
    Dataset d;
    d.inputs = random_matrix(rng, 2, 40, -1, 1);
    d.targets = random_matrix(rng, 3, 40, 0, 1);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.full_pass = true;
    cfg.seed = 77;
    Network a = small_net(2), b = small_net(2);
    EXPECT_EQ(train(a, d, &d, cfg).train_loss, train(b, d, &d, cfg).train_loss);
    EXPECT_TRUE(a == b);
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
    Network net = small_net(3);
    const Network before = net;
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.lr0 = 0.0;
    const auto h = train(net, one_sample(), nullptr, cfg);
    for (double v : h.train_loss) EXPECT_EQ(v, h.train_loss.front());
    EXPECT_TRUE(net == before);
}

TEST(Train, ZeroEpochsIsNoOp) {
    Network net = small_net(4);
    const Network before = net;
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto h = train(net, one_sample(), nullptr, cfg);
    EXPECT_TRUE(h.train_loss.empty());
    EXPECT_TRUE(net == before);
}

TEST(Train, ObserverSeesEveryEpoch) {
    Network net = small_net(5);
    TrainConfig cfg;
    cfg.epochs = 4;
    std::vector<int> seen;
    train(net, one_sample(), nullptr, cfg, [&](int e, const Network&) { seen.push_back(e); });
    EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Train, InvalidConfigIsRejected) {
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.decay = 0.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Serialization, RoundTripIsExact) {
    const Network net = small_net(6);
    const auto bytes = encode_network(net);
    EXPECT_TRUE(decode_network(bytes) == net);
    EXPECT_EQ(encode_network(decode_network(bytes)), bytes);
}

TEST(Serialization, CorruptionIsDetected) {
    auto bytes = encode_network(small_net(7));
    bytes[bytes.size() / 2] ^= 0x10;
    EXPECT_THROW(decode_network(bytes), FormatError);
    bytes = encode_network(small_net(7));
    bytes[0] = 'X';
    EXPECT_THROW(decode_network(bytes), FormatError);
    bytes.resize(10);
    EXPECT_THROW(decode_network(bytes), FormatError);
}

TEST(Serialization, FileRoundTripWritesSidecar) {
    const auto dir = test::scratch_dir("nn_files");
    const Network net = small_net(8);
    save_network(dir / "net.bin", net);
    EXPECT_TRUE(std::filesystem::exists(dir / "net.json"));
    EXPECT_TRUE(load_network(dir / "net.bin") == net);
    EXPECT_THROW(load_network(dir / "absent.bin"), MissingArtifactError);
}

TEST(Serialization, Fnv1aKnownVectors) {
    EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ULL);
    const std::uint8_t a[] = {'a'};
    EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cULL);
}
