#include "msr/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "bytes.hpp"
#include "msr/random.hpp"

namespace msr {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::Autoencoder ? "autoencoder" : "decoder"; }

ModelKind parse_model_kind(std::string_view s) {
    if (s == "autoencoder") return ModelKind::Autoencoder;
    if (s == "decoder") return ModelKind::Decoder;
    throw ValidationError("model kind must be autoencoder or decoder, got \"" + std::string(s) + "\"");
}

std::size_t train_count(std::size_t n) { return (n * 4 + 2) / 5; }

AppearanceDataset build_dataset(const EnvConfig& env, const FaceStyle& style, std::size_t n, std::uint64_t seed) {
    if (n < kMinDatasetSize) {
        throw ValidationError("dataset size must be >= " + std::to_string(kMinDatasetSize) + ", got " +
                              std::to_string(n));
    }
    env.validate();

    std::vector<AppearanceSample> all;
    all.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        AppearanceSample s;
        s.id = i;
        s.pose = sample_pose(derive_seed(derive_seed(seed, "pose"), i));
        s.noise_seed = derive_seed(derive_seed(seed, "noise"), i);
        s.image = quantize8(render_face(env, style, s.pose, s.noise_seed));
        all.push_back(std::move(s));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const std::size_t n_train = train_count(n);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    AppearanceDataset data;
    data.height = env.height;
    data.width = env.width;
    data.style = style.id;
    for (std::size_t k = 0; k < n; ++k) {
        AppearanceSample& s = all[order[k]];
        if (k < n_train) {
            data.train.push_back(std::move(s));
            continue;
        }
        const MarkSpec mark = sample_mark(derive_seed(derive_seed(seed, "mark"), s.id), env.height, env.width,
                                          env.palette, env.mark_size, env.mark_size);
        auto [marked, truth] = inject_mark(s.image, mark);
        data.test.push_back({std::move(s), std::move(marked), std::move(truth)});
    }
    return data;
}

Architecture Architecture::default_for(ModelKind kind) {
    // A larger epsilon damps the per-weight step of the wide encoder once
    // gradients become small; without it the detection curve keeps jittering.
    if (kind == ModelKind::Autoencoder) return {{512, 32, 4, 32, 512}, true, true, 1e-5};
    return {{64, 512}};
}

namespace {

std::vector<std::size_t> widths_for(ModelKind kind, std::size_t pixels, const Architecture& arch) {
    std::vector<std::size_t> w;
    w.push_back(kind == ModelKind::Autoencoder ? pixels : 2);
    w.insert(w.end(), arch.hidden.begin(), arch.hidden.end());
    w.push_back(pixels);
    return w;
}

}  // namespace

GenerativeModel make_model(ModelKind kind, int height, int width, const Architecture& arch,
                           std::uint64_t init_seed) {
    const auto pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    const auto widths = widths_for(kind, pixels, arch);
    auto net = nn::Network::glorot(nn::chain(widths, nn::Activation::Tanh, nn::Activation::Sigmoid), init_seed);
    return wrap_model(kind, height, width, std::move(net));
}

GenerativeModel wrap_model(ModelKind kind, int height, int width, nn::Network net, Eigen::VectorXd input_offset) {
    const auto pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    const std::size_t expected_in = kind == ModelKind::Autoencoder ? pixels : 2;
    if (net.input_size() != expected_in || net.output_size() != pixels) {
        throw ValidationError(std::string(to_string(kind)) + " network must map " + std::to_string(expected_in) +
                              " -> " + std::to_string(pixels) + ", got " + std::to_string(net.input_size()) +
                              " -> " + std::to_string(net.output_size()));
    }
    if (input_offset.size() != 0 &&
        (kind != ModelKind::Autoencoder || static_cast<std::size_t>(input_offset.size()) != pixels)) {
        throw ValidationError("input offset must be empty or one value per pixel of an autoencoder");
    }
    return {kind, height, width, std::move(net), std::move(input_offset)};
}

void initialize_from_data(GenerativeModel& model, const std::vector<AppearanceSample>& train,
                          const Architecture& arch) {
    if (train.empty()) throw ValidationError("initialize_from_data: no training samples");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.pixel_count()));
    for (const auto& s : train) {
        if (s.image.height() != model.height || s.image.width() != model.width) {
            throw ValidationError("initialize_from_data: image dimensions do not match the model");
        }
        mean += image_to_vector(s.image);
    }
    mean /= static_cast<double>(train.size());
    if (arch.center_input && model.kind == ModelKind::Autoencoder) model.input_offset = mean;
    if (arch.mean_output_bias) {
        // Sigmoid output: start at the mean image instead of uniform grey.
        const Eigen::ArrayXd m = mean.array().max(1e-3).min(1.0 - 1e-3);
        model.net.mutable_layers().back().bias = (m / (1.0 - m)).log().matrix();
    }
}

Eigen::VectorXd encode_pose(const HeadPose& pose) {
    Eigen::VectorXd v(2);
    v << pose.yaw, pose.pitch;
    return v;
}

Eigen::VectorXd image_to_vector(const Image& img) {
    return Eigen::Map<const Eigen::VectorXd>(img.pixels().data(), static_cast<Eigen::Index>(img.size()));
}

Eigen::VectorXd encode_observation(const GenerativeModel& model, const Image& img) {
    if (model.input_offset.size() == 0) return image_to_vector(img);
    return image_to_vector(img) - model.input_offset;
}

Image vector_to_image(const Eigen::VectorXd& v, int height, int width) {
    return Image(height, width, std::vector<double>(v.data(), v.data() + v.size()));
}

std::vector<Image> predict_many(const GenerativeModel& model, const std::vector<HeadPose>& poses,
                                const std::vector<const Image*>& observed) {
    const std::size_t n = model.kind == ModelKind::Decoder ? poses.size() : observed.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(model.net.input_size()), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        if (model.kind == ModelKind::Decoder) {
            x.col(col) = encode_pose(poses[i]);
        } else {
            const Image* img = observed[i];
            if (img == nullptr) throw ValidationError("autoencoder prediction requires an observed image");
            if (img->height() != model.height || img->width() != model.width) {
                throw ValidationError("observed image dimensions do not match the model");
            }
            x.col(col) = encode_observation(model, *img);
        }
    }
    std::vector<Image> out;
    out.reserve(n);
    constexpr Eigen::Index kChunk = 256;
    for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
        const Eigen::Index m = std::min(kChunk, x.cols() - start);
        const Eigen::MatrixXd y = model.net.predict(Eigen::MatrixXd(x.middleCols(start, m)));
        for (Eigen::Index j = 0; j < m; ++j) out.push_back(vector_to_image(y.col(j), model.height, model.width));
    }
    return out;
}

Image predict(const GenerativeModel& model, std::optional<HeadPose> pose, const Image* observed) {
    if (model.kind == ModelKind::Decoder) {
        if (!pose) throw ValidationError("decoder prediction requires a head pose");
        return predict_many(model, {*pose}, {}).front();
    }
    if (observed == nullptr) throw ValidationError("autoencoder prediction requires an observed image");
    return predict_many(model, {}, {observed}).front();
}

namespace {

nn::Dataset pairs_from(const GenerativeModel& model, const std::vector<const AppearanceSample*>& samples) {
    const auto pixels = static_cast<Eigen::Index>(model.pixel_count());
    const auto n = static_cast<Eigen::Index>(samples.size());
    nn::Dataset d;
    d.targets.resize(pixels, n);
    for (Eigen::Index j = 0; j < n; ++j) d.targets.col(j) = image_to_vector(samples[static_cast<std::size_t>(j)]->image);
    if (model.kind == ModelKind::Autoencoder) {
        d.inputs.resize(pixels, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            d.inputs.col(j) = encode_observation(model, samples[static_cast<std::size_t>(j)]->image);
        }
    } else {
        d.inputs.resize(2, n);
        for (Eigen::Index j = 0; j < n; ++j) d.inputs.col(j) = encode_pose(samples[static_cast<std::size_t>(j)]->pose);
    }
    return d;
}

void check_dims(const GenerativeModel& model, const AppearanceDataset& data) {
    if (model.height != data.height || model.width != data.width) {
        throw ValidationError("dataset image dimensions do not match the model");
    }
}

}  // namespace

nn::Dataset training_pairs(const GenerativeModel& model, const AppearanceDataset& data) {
    check_dims(model, data);
    std::vector<const AppearanceSample*> ptrs;
    for (const auto& s : data.train) ptrs.push_back(&s);
    return pairs_from(model, ptrs);
}

nn::Dataset test_pairs(const GenerativeModel& model, const AppearanceDataset& data) {
    check_dims(model, data);
    std::vector<const AppearanceSample*> ptrs;
    for (const auto& s : data.test) ptrs.push_back(&s.clean);
    return pairs_from(model, ptrs);
}

AppearanceTraining train_appearance(ModelKind kind, const AppearanceDataset& data, const nn::TrainConfig& cfg,
                                    const Architecture& arch, std::uint64_t init_seed,
                                    const ModelObserver& observer) {
    if (data.train.empty()) throw ValidationError("train_appearance: dataset has no training samples");
    AppearanceTraining out{make_model(kind, data.height, data.width, arch, init_seed), {}};
    initialize_from_data(out.model, data.train, arch);
    const nn::Dataset train_set = training_pairs(out.model, data);
    nn::TrainConfig tc = cfg;
    if (arch.adam_epsilon > 0.0) tc.adam.epsilon = arch.adam_epsilon;
    nn::EpochObserver inner;
    if (observer) inner = [&](int epoch, const nn::Network&) { observer(epoch, out.model); };
    if (data.test.empty()) {
        out.history = nn::train(out.model.net, train_set, nullptr, tc, inner);
    } else {
        const nn::Dataset test_set = test_pairs(out.model, data);
        out.history = nn::train(out.model.net, train_set, &test_set, tc, inner);
    }
    return out;
}

namespace {

constexpr std::uint8_t kModelMagic[8] = {'M', 'S', 'R', 'A', 'P', 'M', 0, 1};
constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_model(const GenerativeModel& model) {
    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    detail::put_u32(out, kModelFormatVersion);
    detail::put_u32(out, model.kind == ModelKind::Autoencoder ? 0U : 1U);
    detail::put_u32(out, static_cast<std::uint32_t>(model.height));
    detail::put_u32(out, static_cast<std::uint32_t>(model.width));
    detail::put_u32(out, static_cast<std::uint32_t>(model.input_offset.size()));
    for (Eigen::Index i = 0; i < model.input_offset.size(); ++i) detail::put_f64(out, model.input_offset(i));
    const auto net = nn::encode_network(model.net);
    detail::put_u64(out, net.size());
    out.insert(out.end(), net.begin(), net.end());
    detail::put_u64(out, nn::fnv1a64(out));
    return out;
}

GenerativeModel decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kModelMagic) + 8 ||
        !std::equal(std::begin(kModelMagic), std::end(kModelMagic), bytes.begin())) {
        throw FormatError("not an appearance model file (bad magic)");
    }
    const auto body = bytes.first(bytes.size() - 8);
    detail::Reader tail(bytes.last(8), "model file");
    if (tail.u(8) != nn::fnv1a64(body)) throw FormatError("model file checksum mismatch (file corrupted)");

    detail::Reader in(body, "model file");
    in.u(8);
    const std::uint32_t version = in.u32();
    if (version != kModelFormatVersion) throw FormatError("unsupported model format version " + std::to_string(version));
    const std::uint32_t kind_code = in.u32();
    if (kind_code > 1) throw FormatError("unknown model kind code");
    const auto height = static_cast<int>(in.u32());
    const auto width = static_cast<int>(in.u32());
    const std::uint32_t offset_len = in.u32();
    Eigen::VectorXd offset(static_cast<Eigen::Index>(offset_len));
    for (std::uint32_t i = 0; i < offset_len; ++i) offset(static_cast<Eigen::Index>(i)) = in.f64();
    const auto net_len = static_cast<std::size_t>(in.u(8));
    nn::Network net = nn::decode_network(in.take(net_len));
    if (in.pos() != body.size()) throw FormatError("model file has trailing bytes");
    try {
        return wrap_model(kind_code == 0 ? ModelKind::Autoencoder : ModelKind::Decoder, height, width, std::move(net),
                          std::move(offset));
    } catch (const ValidationError& e) {
        throw FormatError(std::string("inconsistent model file: ") + e.what());
    }
}

std::string model_sidecar_json(const GenerativeModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "msr-appearance-model";
    j["version"] = kModelFormatVersion;
    j["kind"] = to_string(model.kind);
    j["height"] = model.height;
    j["width"] = model.width;
    j["input_offset"] = model.input_offset.size() != 0;
    j["network"] = nlohmann::ordered_json::parse(nn::layer_specs_json(model.net));
    return j.dump(2) + "\n";
}

void save_model(const std::filesystem::path& path, const GenerativeModel& model) {
    detail::write_bytes(path, encode_model(model));
    auto sidecar = path;
    sidecar.replace_extension(".json");
    std::ofstream js(sidecar);
    js << model_sidecar_json(model);
    if (!js) throw Error("write failed: " + sidecar.string());
}

GenerativeModel load_model(const std::filesystem::path& path) {
    const auto bytes = detail::read_bytes(path, "model file");
    try {
        return decode_model(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

double linear_r2(const Eigen::MatrixXd& features, const Eigen::VectorXd& y) {
    const Eigen::Index n = y.size();
    if (features.rows() != n || n == 0) throw ValidationError("linear_r2: row count mismatch");
    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    if (ss_tot <= 0.0) return 0.0;
    Eigen::MatrixXd a(n, features.cols() + 1);
    a << features, Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(y);
    const double ss_res = (a * beta - y).squaredNorm();
    return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

LatentProbe latent_probe(const GenerativeModel& model, const std::vector<AppearanceSample>& samples) {
    if (model.kind != ModelKind::Autoencoder) {
        throw ValidationError("latent_probe: decoder models expose no latent bottleneck");
    }
    if (samples.empty()) throw ValidationError("latent_probe: no samples");
    const auto specs = model.net.specs();
    std::size_t bottleneck = 0;
    for (std::size_t i = 1; i < specs.size(); ++i) {
        if (specs[i].output_size < specs[bottleneck].output_size) bottleneck = i;
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(model.pixel_count()), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = encode_observation(model, samples[j].image);
    const Eigen::MatrixXd z = model.net.predict_prefix(x, bottleneck + 1);

    LatentProbe probe;
    Eigen::VectorXd yaw(z.cols()), pitch(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const auto& s = samples[static_cast<std::size_t>(j)];
        probe.poses.push_back(s.pose);
        probe.latents.emplace_back(z.col(j).data(), z.col(j).data() + z.rows());
        yaw(j) = s.pose.yaw;
        pitch(j) = s.pose.pitch;
    }
    const Eigen::MatrixXd features = z.transpose();
    probe.r2_yaw = linear_r2(features, yaw);
    probe.r2_pitch = linear_r2(features, pitch);
    return probe;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string loss_csv(const nn::TrainHistory& history) {
    std::string out = "epoch,train_mse,test_mse\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        out += std::to_string(e) + "," + fmt(history.train_loss[e]) + "," +
               (e < history.test_loss.size() ? fmt(history.test_loss[e]) : std::string()) + "\n";
    }
    return out;
}

std::string latent_csv(const LatentProbe& probe) {
    std::string out = "yaw,pitch";
    const std::size_t dim = probe.latents.empty() ? 0 : probe.latents.front().size();
    for (std::size_t k = 0; k < dim; ++k) out += ",z" + std::to_string(k);
    out += "\n";
    for (std::size_t i = 0; i < probe.poses.size(); ++i) {
        out += fmt(probe.poses[i].yaw) + "," + fmt(probe.poses[i].pitch);
        for (double z : probe.latents[i]) out += "," + fmt(z);
        out += "\n";
    }
    return out;
}

}  // namespace msr
