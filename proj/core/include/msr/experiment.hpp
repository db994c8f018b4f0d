#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msr/appearance.hpp"
#include "msr/mirror_env.hpp"
#include "msr/nn.hpp"
#include "msr/novelty.hpp"
#include "msr/visuomotor.hpp"

namespace msr {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

std::string_view library_version();

struct TrialsConfig {
    int count = 100;
    int unmarked_count = 100;
    std::vector<int> mark_sizes{14, 18};
    ModelKind model = ModelKind::Decoder;
    double reach_tolerance_deg = 3.0;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    FaceStyleId face_style = FaceStyleId::A;
    EnvConfig env;
    std::size_t appearance_size = 1300;
    std::size_t reach_size = 500;
    nn::TrainConfig train;
    Architecture autoencoder;
    Architecture decoder;
    DetectorConfig detector;
    ReachNetConfig reach;
    TrialsConfig trials;
    /// Save a checkpoint after every k-th epoch (the last epoch always).
    int checkpoint_every = 1;
    /// Test samples whose saliency maps eval-novelty dumps.
    int saliency_dumps = 4;
    /// Epochs eval-novelty scores; empty means every checkpointed epoch.
    std::vector<int> eval_epochs;
    std::filesystem::path out_dir = "run";

    /// Harness defaults: full-pass epochs, 8-bit error scale, sigma divisor.
    static ExperimentConfig defaults();
    void validate() const;
    const Architecture& architecture(ModelKind kind) const;
};

/// Strict JSON: unknown keys and a wrong schema version are rejected, absent
/// keys keep their defaults.
ExperimentConfig config_from_json(std::string_view text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sub-seed for one purpose within one face style.
std::uint64_t style_seed(std::uint64_t master, FaceStyleId style, std::string_view purpose);

/// Fixed layout of a run directory.
class RunLayout {
public:
    explicit RunLayout(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path config() const { return root_ / "config.json"; }
    std::filesystem::path report() const { return root_ / "report.json"; }
    std::filesystem::path timings() const { return root_ / "metrics" / "timings.jsonl"; }

    std::filesystem::path data(FaceStyleId s) const;
    std::filesystem::path image(FaceStyleId s, std::size_t id) const;
    std::filesystem::path manifest(FaceStyleId s, bool test) const;
    std::filesystem::path reach_data(FaceStyleId s) const;

    std::filesystem::path model(FaceStyleId s, ModelKind k) const;
    std::filesystem::path checkpoint(FaceStyleId s, ModelKind k, int epoch) const;
    std::filesystem::path reach_model(FaceStyleId s) const;

    std::filesystem::path metrics(FaceStyleId s) const;
    std::filesystem::path loss_csv(FaceStyleId s, ModelKind k) const;
    std::filesystem::path latent_csv(FaceStyleId s) const;
    std::filesystem::path precision_csv(FaceStyleId s, ModelKind k) const;
    std::filesystem::path reach_metrics(FaceStyleId s) const;
    std::filesystem::path reach_loss_csv(FaceStyleId s) const;
    std::filesystem::path trials(FaceStyleId s) const;
    std::filesystem::path msr_summary(FaceStyleId s) const;
    std::filesystem::path plots(FaceStyleId s) const;
    std::filesystem::path saliency(FaceStyleId s, ModelKind k) const;

private:
    std::filesystem::path root_;
};

/// Writes `bytes` unless the file already holds exactly them. Differing
/// content raises ArtifactConflictError: results are never overwritten.
/// Returns false when the identical file was already present.
bool write_artifact(const std::filesystem::path& path, std::string_view bytes);

/// Records config.json for the run, or checks compatibility with the one
/// present (face style and output directory may differ).
void bind_config(const RunLayout& layout, const ExperimentConfig& cfg);

/// Reads the dataset back from the PGMs and manifests; marks are re-injected
/// from their specs. Missing files are named in the error.
AppearanceDataset load_appearance_dataset(const RunLayout& layout, FaceStyleId style);
std::vector<ReachSample> load_reach_dataset(const RunLayout& layout, FaceStyleId style);

struct GenDataResult {
    std::size_t train = 0;
    std::size_t test = 0;
    std::size_t reach = 0;
    std::size_t files_written = 0;
};
GenDataResult cmd_gen_data(const ExperimentConfig& cfg, const RunLayout& layout);

struct TrainResult {
    nn::TrainHistory history;
    double seconds = 0.0;
    std::optional<LatentProbe> probe;
};
TrainResult cmd_train(const ExperimentConfig& cfg, const RunLayout& layout, ModelKind kind);

struct PrecisionCurve {
    std::vector<int> epochs;
    std::vector<double> weighted;    // empty when the variant was not evaluated
    std::vector<double> unweighted;  // empty when the variant was not evaluated
    std::size_t count = 0;           // test samples averaged per point
};

/// Scores every checkpoint; the weighted variant uses cfg.detector, the
/// unweighted one the same detector with Sigma = diag(1).
PrecisionCurve cmd_eval_novelty(const ExperimentConfig& cfg, const RunLayout& layout, ModelKind kind,
                                bool weighted, bool unweighted);

struct ReachResult {
    ReachTraining training;
    std::vector<double> grid_rms_per_joint;
    double grid_rms = 0.0;
};
ReachResult cmd_train_reach(const ExperimentConfig& cfg, const RunLayout& layout);

struct MsrSummary {
    FaceStyleId style = FaceStyleId::A;
    ModelKind model = ModelKind::Decoder;
    std::size_t trials = 0;
    std::size_t detected = 0;
    std::size_t reached = 0;
    double detection_rate = 0.0;
    double mean_precision = 0.0;
    std::size_t joint_error_count = 0;
    double mean_joint_error_deg = 0.0;
    std::size_t unmarked_trials = 0;
    std::size_t false_positives = 0;
    double false_positive_rate = 0.0;
    double seconds = 0.0;
};

struct MsrResult {
    std::vector<MsrSummary> styles;
    std::vector<std::string> warnings;
};

/// Runs the trials for every face style with trained models; styles missing
/// a model are skipped with a warning. A zero trial count yields empty
/// record files and zero-count summaries.
MsrResult cmd_run_msr(const ExperimentConfig& cfg, const RunLayout& layout, std::optional<ModelKind> kind = {});

/// Consolidated report JSON of whatever artifacts exist (missing sections get
/// status "absent"), plus curve plots. Deterministic in the artifacts.
std::string build_report(const RunLayout& layout);
std::string cmd_report(const RunLayout& layout);

/// Parses a CSV written by the harness into columns by header name.
std::vector<std::vector<double>> read_csv_columns(const std::filesystem::path& path,
                                                  const std::vector<std::string>& names);

}  // namespace msr
