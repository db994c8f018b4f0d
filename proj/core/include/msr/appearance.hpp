#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msr/image.hpp"
#include "msr/mirror_env.hpp"
#include "msr/nn.hpp"

namespace msr {

enum class ModelKind { Autoencoder, Decoder };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view s);

struct AppearanceSample {
    std::size_t id = 0;  // index in generation order
    HeadPose pose;
    std::uint64_t noise_seed = 0;
    Image image;  // clean (unmarked) observation
};

struct MarkedSample {
    AppearanceSample clean;
    Image marked;
    GroundTruth truth;
};

/// Seeded 80/20 split. Training images stay clean; every test image carries
/// one injected mark, with the clean render kept alongside for MSE curves.
struct AppearanceDataset {
    int height = 0;
    int width = 0;
    FaceStyleId style = FaceStyleId::A;
    std::vector<AppearanceSample> train;
    std::vector<MarkedSample> test;

    std::size_t size() const { return train.size() + test.size(); }
};

inline constexpr std::size_t kMinDatasetSize = 10;

/// Poses are uniform in [-5, 5]^2. Images are quantized to 8 bits so that a
/// PGM round trip reproduces them exactly; marks keep their exact intensity.
AppearanceDataset build_dataset(const EnvConfig& env, const FaceStyle& style, std::size_t n,
                                std::uint64_t seed);

/// Number of training samples for a dataset of size n.
std::size_t train_count(std::size_t n);

struct GenerativeModel {
    ModelKind kind = ModelKind::Decoder;
    int height = 0;
    int width = 0;
    nn::Network net;
    /// Subtracted from autoencoder inputs; empty for none.
    Eigen::VectorXd input_offset;

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
};

/// Inner layer widths (between input and output); tanh inside, sigmoid out.
struct Architecture {
    std::vector<std::size_t> hidden;
    /// Autoencoder only: center inputs on the mean training image.
    bool center_input = true;
    /// Start the output bias at the logit of the mean training image.
    bool mean_output_bias = true;
    /// ADAM epsilon for this model; 0 keeps the one in the training config.
    double adam_epsilon = 0.0;

    static Architecture default_for(ModelKind kind);
};

GenerativeModel make_model(ModelKind kind, int height, int width, const Architecture& arch,
                           std::uint64_t init_seed);
/// Wraps an existing network; validates input/output sizes for the kind.
GenerativeModel wrap_model(ModelKind kind, int height, int width, nn::Network net,
                           Eigen::VectorXd input_offset = {});

/// Data-dependent initialization from the training images, per `arch`.
void initialize_from_data(GenerativeModel& model, const std::vector<AppearanceSample>& train,
                          const Architecture& arch);

/// Decoder input vector for a pose: the angles in degrees.
Eigen::VectorXd encode_pose(const HeadPose& pose);
Eigen::VectorXd image_to_vector(const Image& img);
/// Autoencoder input vector for an observation.
Eigen::VectorXd encode_observation(const GenerativeModel& model, const Image& img);
Image vector_to_image(const Eigen::VectorXd& v, int height, int width);

/// Predicted appearance. Decoder needs `pose`; autoencoder needs `observed`.
Image predict(const GenerativeModel& model, std::optional<HeadPose> pose, const Image* observed);

/// Batched prediction for parallel arrays of poses and observations.
std::vector<Image> predict_many(const GenerativeModel& model, const std::vector<HeadPose>& poses,
                                const std::vector<const Image*>& observed);

struct AppearanceTraining {
    GenerativeModel model;
    nn::TrainHistory history;  // test curve uses clean renders of test poses
};

/// Sees the model under training (offset included) after every epoch.
using ModelObserver = std::function<void(int epoch, const GenerativeModel& model)>;

AppearanceTraining train_appearance(ModelKind kind, const AppearanceDataset& data, const nn::TrainConfig& cfg,
                                    const Architecture& arch, std::uint64_t init_seed,
                                    const ModelObserver& observer = {});

/// Training pairs for a model; the test variant uses clean test renders.
nn::Dataset training_pairs(const GenerativeModel& model, const AppearanceDataset& data);
nn::Dataset test_pairs(const GenerativeModel& model, const AppearanceDataset& data);

/// Binary model file: kind, image dims, input offset and the embedded network
/// bytes, with a trailing checksum. save_model also writes a JSON sidecar.
std::vector<std::uint8_t> encode_model(const GenerativeModel& model);
GenerativeModel decode_model(std::span<const std::uint8_t> bytes);
std::string model_sidecar_json(const GenerativeModel& model);
void save_model(const std::filesystem::path& path, const GenerativeModel& model);
GenerativeModel load_model(const std::filesystem::path& path);

struct LatentProbe {
    std::vector<HeadPose> poses;
    std::vector<std::vector<double>> latents;
    double r2_yaw = 0.0;
    double r2_pitch = 0.0;
};

/// Latent codes at the autoencoder bottleneck plus R^2 of a linear fit of
/// each pose angle on the code. R^2 is clamped to [0, 1]; a constant target
/// yields 0. Rejects decoder models.
LatentProbe latent_probe(const GenerativeModel& model, const std::vector<AppearanceSample>& samples);

/// Coefficient of determination of an affine least-squares fit y ~ X.
double linear_r2(const Eigen::MatrixXd& features, const Eigen::VectorXd& y);

std::string loss_csv(const nn::TrainHistory& history);
std::string latent_csv(const LatentProbe& probe);

}  // namespace msr
