#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "msr/appearance.hpp"
#include "msr/error.hpp"
#include "msr/novelty.hpp"
#include "msr/random.hpp"
#include "test_support.hpp"

using namespace msr;

namespace {

const EnvConfig kEnv{};
const FaceStyle kA = FaceStyle::preset(FaceStyleId::A);

nn::TrainConfig quick_train(int epochs) {
    nn::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.full_pass = true;
    cfg.seed = 5;
    return cfg;
}

const AppearanceDataset& shared_dataset() {
    static const AppearanceDataset d = build_dataset(kEnv, kA, 300, 17);
    return d;
}

}  // namespace

TEST(Dataset, DefaultSplit) {
    EXPECT_EQ(train_count(1300), 1040u);
    EXPECT_EQ(1300 - train_count(1300), 260u);
    const AppearanceDataset d = build_dataset(kEnv, kA, 50, 1);
    EXPECT_EQ(d.train.size(), 40u);
    EXPECT_EQ(d.test.size(), 10u);
}

TEST(Dataset, Deterministic) {
    const AppearanceDataset a = build_dataset(kEnv, kA, 10, 3);
    const AppearanceDataset b = build_dataset(kEnv, kA, 10, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].image, b.train[i].image);
        EXPECT_EQ(a.train[i].pose, b.train[i].pose);
    }
    for (std::size_t i = 0; i < a.test.size(); ++i) {
        EXPECT_EQ(a.test[i].marked, b.test[i].marked);
        EXPECT_EQ(a.test[i].truth.mark, b.test[i].truth.mark);
    }
}

TEST(Dataset, EveryTestImageCarriesOneMark) {
    for (const auto& t : shared_dataset().test) {
        EXPECT_EQ(count_differences(t.clean.image, t.marked), 196u);
        EXPECT_EQ(count_set(t.truth.mask), 196u);
    }
}

TEST(Dataset, ImagesLieOnEightBitGrid) {
    for (const auto& s : shared_dataset().train) EXPECT_EQ(quantize8(s.image), s.image);
}

TEST(Dataset, TooSmallIsRejected) {
    EXPECT_THROW(build_dataset(kEnv, kA, 5, 1), ValidationError);
}

TEST(Model, ZeroNetworkPredictsHalf) {
    const auto arch = Architecture::default_for(ModelKind::Decoder);
    std::vector<std::size_t> widths{2};
    widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
    widths.push_back(64 * 64);
    const GenerativeModel m = wrap_model(ModelKind::Decoder, 64, 64,
                                         nn::Network(nn::chain(widths, nn::Activation::Tanh, nn::Activation::Sigmoid)));
    for (double v : predict(m, HeadPose{1, 2}, nullptr).pixels()) EXPECT_EQ(v, 0.5);
}

TEST(Model, WrongShapesAreRejected) {
    EXPECT_THROW(wrap_model(ModelKind::Decoder, 64, 64, nn::Network({nn::LayerSpec{3, 4096, nn::Activation::Sigmoid}})),
                 ValidationError);
    EXPECT_THROW(wrap_model(ModelKind::Autoencoder, 8, 8, nn::Network({nn::LayerSpec{64, 63, nn::Activation::Sigmoid}})),
                 ValidationError);
    const GenerativeModel ae = make_model(ModelKind::Autoencoder, 8, 8, {{4}}, 1);
    EXPECT_THROW(predict(ae, std::nullopt, nullptr), ValidationError);
    const Image wrong(9, 8);
    EXPECT_THROW(predict(ae, std::nullopt, &wrong), ValidationError);
}

TEST(Model, MeanOutputBiasInitialization) {
    const auto& d = shared_dataset();
    GenerativeModel m = make_model(ModelKind::Decoder, d.height, d.width, Architecture::default_for(ModelKind::Decoder), 2);
    initialize_from_data(m, d.train, Architecture::default_for(ModelKind::Decoder));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.pixel_count()));
    for (const auto& s : d.train) mean += image_to_vector(s.image);
    mean /= static_cast<double>(d.train.size());
    const Eigen::VectorXd& b = m.net.layers().back().bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double p = std::clamp(mean[i], 1e-3, 1.0 - 1e-3);
        EXPECT_NEAR(1.0 / (1.0 + std::exp(-b[i])), p, 1e-9);
    }
    EXPECT_EQ(m.input_offset.size(), 0);
}

TEST(Training, ZeroEpochsKeepsInitialization) {
    const auto& d = shared_dataset();
    const auto arch = Architecture::default_for(ModelKind::Decoder);
    const auto t = train_appearance(ModelKind::Decoder, d, quick_train(0), arch, 9);
    GenerativeModel init = make_model(ModelKind::Decoder, d.height, d.width, arch, 9);
    initialize_from_data(init, d.train, arch);
    EXPECT_TRUE(t.model.net == init.net);
    EXPECT_TRUE(t.history.train_loss.empty());
    EXPECT_TRUE(t.history.test_loss.empty());
}

TEST(Training, DecoderFitsTrainingPoses) {
    const auto& d = shared_dataset();
    const auto t = train_appearance(ModelKind::Decoder, d, quick_train(15), Architecture::default_for(ModelKind::Decoder), 3);
    ASSERT_EQ(t.history.train_loss.size(), 15u);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& s = d.train[i];
        EXPECT_LT(image_mse(predict(t.model, s.pose, nullptr), s.image), 0.02);
    }
    EXPECT_LT(t.history.test_loss.back(), t.history.test_loss.front());
}

TEST(Training, AutoencoderPredictionSuppressesMark) {
    const auto& d = shared_dataset();
    const auto t = train_appearance(ModelKind::Autoencoder, d, quick_train(15),
                                    Architecture::default_for(ModelKind::Autoencoder), 4);
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (const auto& s : d.test) {
        const Image pred = predict(t.model, std::nullopt, &s.marked);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double e = std::abs(s.marked[i] - pred[i]);
            if (s.truth.mask[i]) {
                in_sum += e;
                ++in_n;
            } else {
                out_sum += e;
                ++out_n;
            }
        }
    }
    const double in_mean = in_sum / static_cast<double>(in_n), out_mean = out_sum / static_cast<double>(out_n);
    RecordProperty("mark_to_background_error_ratio", std::to_string(in_mean / out_mean));
    EXPECT_GT(in_mean, 3.0 * out_mean);
}

TEST(Training, ObserverSeesModelWithOffset) {
    const auto& d = shared_dataset();
    int calls = 0;
    train_appearance(ModelKind::Autoencoder, d, quick_train(2), {{16, 4, 16}}, 6, [&](int, const GenerativeModel& m) {
        ++calls;
        EXPECT_EQ(m.input_offset.size(), 64 * 64);
    });
    EXPECT_EQ(calls, 2);
}

TEST(Persistence, RoundTripAndSidecar) {
    const auto& d = shared_dataset();
    const auto t = train_appearance(ModelKind::Autoencoder, d, quick_train(1), {{16, 4, 16}}, 7);
    const auto bytes = encode_model(t.model);
    const GenerativeModel back = decode_model(bytes);
    EXPECT_EQ(back.kind, ModelKind::Autoencoder);
    EXPECT_TRUE(back.net == t.model.net);
    EXPECT_EQ(back.input_offset, t.model.input_offset);
    EXPECT_EQ(encode_model(back), bytes);

    const auto dir = test::scratch_dir("appearance_model");
    save_model(dir / "ae.bin", t.model);
    EXPECT_TRUE(std::filesystem::exists(dir / "ae.json"));
    EXPECT_EQ(encode_model(load_model(dir / "ae.bin")), bytes);
}

TEST(Persistence, CorruptionReportsChecksum) {
    const GenerativeModel m = make_model(ModelKind::Decoder, 8, 8, {{4}}, 1);
    auto bytes = encode_model(m);
    bytes[bytes.size() - 20] ^= 0x01;
    try {
        decode_model(bytes);
        FAIL() << "corrupted model decoded";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }
}

TEST(Latent, ConstantInputGivesIdenticalCodes) {
    const GenerativeModel m = make_model(ModelKind::Autoencoder, 16, 16, {{8, 3, 8}}, 2);
    AppearanceSample s;
    s.image = render_face({16, 16, 0.5, 0.01, 2, 0.0}, kA, {0, 0});
    const LatentProbe p = latent_probe(m, std::vector<AppearanceSample>(6, s));
    // Batched products may round columns differently in the last bit.
    for (const auto& z : p.latents) {
        ASSERT_EQ(z.size(), p.latents.front().size());
        for (std::size_t k = 0; k < z.size(); ++k) EXPECT_NEAR(z[k], p.latents.front()[k], 1e-12);
    }
    EXPECT_EQ(p.r2_yaw, 0.0);
    EXPECT_EQ(p.r2_pitch, 0.0);
}

TEST(Latent, RejectsDecoder) {
    const GenerativeModel m = make_model(ModelKind::Decoder, 8, 8, {{4}}, 1);
    EXPECT_THROW(latent_probe(m, shared_dataset().train), ValidationError);
}

TEST(Latent, R2AgainstNormalEquations) {
    Rng rng(12);
    const int n = 60;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);
        y[i] = 0.5 + 2 * x(i, 0) - x(i, 2) + 0.3 * rng.uniform(-1, 1);
    }
    // Oracle: solve (A^T A) beta = A^T y with an explicit intercept column.
    Eigen::MatrixXd a(n, 4);
    a << Eigen::VectorXd::Ones(n), x;
    const Eigen::VectorXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * y);
    const double ss_res = (y - a * beta).squaredNorm();
    const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
    EXPECT_NEAR(linear_r2(x, y), 1.0 - ss_res / ss_tot, 1e-10);

    Eigen::VectorXd exact = 3.0 * x.col(1);
    EXPECT_NEAR(linear_r2(x, exact), 1.0, 1e-12);
    const double r = linear_r2(x, y);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
}

TEST(Csv, LossHasOneRowPerEpoch) {
    nn::TrainHistory h{{0.1, 0.05, 0.02}, {0.2, 0.1, 0.04}};
    const std::string csv = loss_csv(h);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_mse,test_mse");
}

TEST(ModelKind, Names) {
    EXPECT_EQ(parse_model_kind("autoencoder"), ModelKind::Autoencoder);
    EXPECT_EQ(to_string(ModelKind::Decoder), "decoder");
    EXPECT_THROW(parse_model_kind("vae"), ValidationError);
}
