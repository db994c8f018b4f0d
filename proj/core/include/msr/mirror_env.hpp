#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msr/image.hpp"

namespace msr {

/// Head motor state in degrees.
struct HeadPose {
    double yaw = 0.0;
    double pitch = 0.0;
    friend bool operator==(const HeadPose&, const HeadPose&) = default;
};

/// Training range for both head angles, in degrees.
inline constexpr double kPoseLimitDeg = 5.0;

struct MarkSpec {
    Pixel top_left;
    int height = 14;
    int width = 14;
    double intensity = 0.9;

    /// Geometric center of the rectangle in sub-pixel coordinates.
    PointF center() const {
        return {top_left.row + (height - 1) / 2.0, top_left.col + (width - 1) / 2.0};
    }
    friend bool operator==(const MarkSpec&, const MarkSpec&) = default;
};

struct GroundTruth {
    MarkSpec mark;
    Mask mask;
};

enum class FaceStyleId { A, B };

std::string_view to_string(FaceStyleId id);
FaceStyleId parse_face_style(std::string_view s);

enum class EyeShape { Round, Bar };

/// Geometry and albedo of one synthetic face. Offsets are relative to the head
/// center, in pixels; "parallax" scales how far inner features move per degree
/// relative to the outline.
struct FaceStyle {
    FaceStyleId id = FaceStyleId::A;
    double background = 0.08;
    double skin = 0.5;
    double head_radius_row = 20.0;
    double head_radius_col = 16.0;

    EyeShape eye_shape = EyeShape::Round;
    double eye_offset_row = -4.0;
    double eye_offset_col = 7.0;
    double eye_radius_row = 4.0;
    double eye_radius_col = 4.0;
    double eye_intensity = 0.92;
    double pupil_radius = 1.8;
    double pupil_intensity = 0.1;
    /// Max seeded displacement of the pupils (gaze), pixels.
    double pupil_jitter = 1.5;
    /// Max seeded change of eye brightness (LED flicker).
    double eye_flicker = 0.0;

    double mouth_offset_row = 9.0;
    double mouth_half_width = 6.0;
    double mouth_half_height = 1.5;
    double mouth_intensity = 0.2;

    /// Darker band across the forehead; zero height disables it.
    double band_offset_row = 0.0;
    double band_half_height = 0.0;
    double band_intensity = 0.0;

    double feature_parallax = 1.15;

    static FaceStyle preset(FaceStyleId id);
};

struct EnvConfig {
    int height = 64;
    int width = 64;
    /// Outline translation gain (pixels per degree of yaw/pitch).
    double pixels_per_degree = 2.0;
    /// Half-width of the uniform additive noise applied when a seed is given.
    double noise_amplitude = 0.01;
    /// Sub-samples per pixel side for anti-aliased primitives.
    int supersample = 4;
    /// Optical point-spread (Gaussian sigma, pixels) applied before noise.
    double blur_sigma = 2.0;
    std::vector<double> palette{0.1, 0.35, 0.65, 0.9};
    int mark_size = 14;

    void validate() const;
};

/// Throws RangeError if either angle is outside [-5, 5] degrees.
void check_pose(const HeadPose& pose);

/// Center of the head outline for a pose, in pixel coordinates.
PointF head_center(const EnvConfig& env, const HeadPose& pose);

/// Renders the face. Pure function of (env, style, pose, seed). With a seed,
/// pupil gaze / eye flicker are drawn from it and uniform noise of
/// env.noise_amplitude is added, then clamped to [0, 1].
Image render_face(const EnvConfig& env, const FaceStyle& style, const HeadPose& pose,
                  std::optional<std::uint64_t> noise_seed = std::nullopt);

/// Separable Gaussian blur with clamped borders; sigma <= 0 returns a copy.
Image gaussian_blur(const Image& img, double sigma);

/// Pixels whose centers lie inside the head outline.
Mask face_mask(const EnvConfig& env, const FaceStyle& style, const HeadPose& pose);

/// Intensity-independent centroid of a mask; throws on an empty mask.
PointF mask_centroid(const Mask& m);

/// Sets the mark rectangle to mark.intensity. Throws RangeError if the
/// rectangle is not fully inside the image.
std::pair<Image, GroundTruth> inject_mark(const Image& img, const MarkSpec& mark);

void check_mark_bounds(const MarkSpec& mark, int height, int width);

/// Top-left uniform over all valid positions, intensity uniform over palette.
MarkSpec sample_mark(std::uint64_t seed, int height, int width, std::span<const double> palette,
                     int mark_height = 14, int mark_width = 14);

/// As sample_mark, but the whole rectangle lies within the head outline at pose.
MarkSpec sample_face_mark(std::uint64_t seed, const EnvConfig& env, const FaceStyle& style,
                          const HeadPose& pose, int mark_height, int mark_width);

/// Uniform pose in the training range.
HeadPose sample_pose(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reach ground truth
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultJointCount = 5;

struct JointLimits {
    std::vector<std::string> names;
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t size() const { return names.size(); }
    void validate() const;
    static JointLimits nao_left_arm();
};

using JointVector = std::vector<double>;

/// Upper bound on |dq| / |dc| (degrees per pixel, Euclidean norms) for
/// ground_truth_reach.
inline constexpr double kReachLipschitzBound = 1.5;

/// Posture at the image center.
JointVector reach_center_posture();

/// Analytic centroid -> posture map: affine term plus bounded sinusoids in the
/// normalized image coordinates u = (col - cx) / cx, v = (row - cy) / cy.
/// Throws RangeError if c is outside the image.
JointVector ground_truth_reach(const EnvConfig& env, const PointF& c);

}  // namespace msr
