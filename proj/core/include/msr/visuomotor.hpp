#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msr/appearance.hpp"
#include "msr/image.hpp"
#include "msr/mirror_env.hpp"
#include "msr/nn.hpp"
#include "msr/novelty.hpp"

namespace msr {

struct ReachSample {
    PointF c;  // mark centroid (row, col), pixels
    JointVector q;
};

struct ReachNetConfig {
    std::size_t hidden = 10;
    double lr = 0.01;
    /// Full-batch ADAM updates.
    int iterations = 10000;
    double holdout_frac = 0.2;
    nn::AdamParams adam;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Affine maps between physical and unit-interval coordinates: centroids over
/// [0, H-1] x [0, W-1], joints over their limit intervals.
class ReachNormalizer {
public:
    ReachNormalizer() = default;
    ReachNormalizer(int height, int width, JointLimits limits);

    Eigen::VectorXd normalize_centroid(const PointF& c) const;
    PointF denormalize_centroid(const Eigen::VectorXd& u) const;
    Eigen::VectorXd normalize_joints(const JointVector& q) const;
    JointVector denormalize_joints(const Eigen::VectorXd& u) const;

    int height() const { return height_; }
    int width() const { return width_; }
    const JointLimits& limits() const { return limits_; }

private:
    int height_ = 0;
    int width_ = 0;
    JointLimits limits_;
};

/// Centroids uniform over the head outline of the canonical (zero pose) face;
/// q from the analytic oracle.
std::vector<ReachSample> build_reach_dataset(const EnvConfig& env, const FaceStyle& style, std::size_t n,
                                             std::uint64_t seed);

struct ReachModel {
    nn::Network net;
    ReachNormalizer norm;
    /// Region the map was trained on; queries outside it are extrapolations.
    Mask trained_region;
};

struct ReachOutput {
    JointVector q;
    bool extrapolated = false;
};

ReachModel make_reach_model(const EnvConfig& env, const FaceStyle& style, const ReachNetConfig& cfg);

/// Throws RangeError if c is outside the image.
ReachOutput reach(const ReachModel& model, const PointF& c);
ReachOutput reach(const ReachModel& model, const Region& detected);

/// sqrt(mean_k (a_k - b_k)^2), degrees.
double joint_rms(const JointVector& a, const JointVector& b);

struct ReachTraining {
    ReachModel model;
    std::vector<double> train_loss;  // normalized MSE per iteration
    double final_mse = 0.0;          // normalized, training split
    std::vector<double> holdout_rms_per_joint;  // degrees
    double holdout_rms = 0.0;                   // degrees, all joints pooled
    std::size_t train_count = 0;
    std::size_t holdout_count = 0;
};

/// Seeded split, then full-batch ADAM on the normalized pairs. With an empty
/// hold-out (tiny datasets) the errors are reported on the training split.
ReachTraining train_reach(const EnvConfig& env, const FaceStyle& style, const std::vector<ReachSample>& data,
                          const ReachNetConfig& cfg);

/// RMS joint error per joint (degrees) of the model against the oracle on a
/// regular grid of step `step` pixels inside the trained region.
std::vector<double> grid_rms_per_joint(const EnvConfig& env, const ReachModel& model, int step);

struct TrialSpec {
    HeadPose pose;
    std::uint64_t noise_seed = 0;
    std::optional<MarkSpec> mark;
};

struct TrialRecord {
    std::size_t index = 0;
    TrialSpec spec;
    bool any_region = false;  // winner-take-all produced a region
    bool detected = false;    // picked centroid inside the mark box
    bool reached = false;     // joint RMS < tolerance
    double precision = 0.0;
    std::optional<PointF> centroid;
    std::optional<double> centroid_error_px;
    std::optional<JointVector> q;
    std::optional<double> joint_error_deg;
    bool extrapolated = false;
};

struct TrialContext {
    EnvConfig env;
    FaceStyle style;
    const GenerativeModel* appearance = nullptr;
    const ErrorStats* stats = nullptr;
    DetectorConfig detector;
    const ReachModel* reach = nullptr;
    double reach_tolerance_deg = 3.0;
};

/// Renders the (optionally marked) frame, detects the winning region and
/// reaches for its centroid. No region, no reach.
TrialRecord simulate_reach_trial(const TrialContext& ctx, const TrialSpec& spec, std::size_t index = 0);

}  // namespace msr
