#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "msr/appearance.hpp"
#include "msr/image.hpp"
#include "msr/mirror_env.hpp"

namespace msr {

/// Per-pixel mean and (n-1)-normalized variance of the absolute prediction
/// error over a calibration set; variance floored at `floor`.
struct ErrorStats {
    Raster<double> mu;
    Raster<double> sigma2;
    std::size_t n_t = 0;
    double floor = 0.0;
};

/// Streaming (Welford) accumulator for ErrorStats.
class ErrorStatsAccumulator {
public:
    void add(const Raster<double>& abs_error);
    std::size_t count() const { return n_; }
    /// Throws ValidationError with fewer than 2 images.
    ErrorStats finish(double epsilon_var) const;

private:
    std::size_t n_ = 0;
    Raster<double> mean_;
    Raster<double> m2_;
};

/// |a - b| pixel-wise.
Raster<double> absolute_error(const Image& a, const Image& b);

enum class SaliencyDivisor { Variance, StdDev, None };

struct DetectorConfig {
    double threshold_frac = 0.018;
    /// Maximal pixel value of the grey scale in which errors are expressed.
    /// Images are scaled by this before saliency and thresholding.
    double max_pixel_value = 1.0;
    int min_area = 30;
    double epsilon_var = 1e-4;
    /// false selects the identity covariance (Sigma = diag(1)).
    bool use_variance = true;
    /// With use_variance, divide by sigma^2 (as printed) or by sigma.
    SaliencyDivisor divisor = SaliencyDivisor::Variance;
    int connectivity = 8;
    /// Observation-conditioned models only: after each prediction, pixels
    /// above threshold are replaced by their prediction and the model is
    /// queried again, so an occluder does not steer the reconstruction.
    int refine_passes = 0;

    double threshold() const { return threshold_frac * max_pixel_value; }
    SaliencyDivisor effective_divisor() const { return use_variance ? divisor : SaliencyDivisor::None; }
    void validate() const;
};

using SaliencyMap = Raster<double>;

struct BoundingBox {
    int top = 0;
    int left = 0;
    int bottom = 0;  // inclusive
    int right = 0;   // inclusive

    bool contains(const PointF& p) const {
        return p.row >= top && p.row <= bottom && p.col >= left && p.col <= right;
    }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Region {
    std::vector<Pixel> pixels;  // raster order
    std::size_t area = 0;
    BoundingBox bbox;
    PointF centroid;
    double total_saliency = 0.0;
};

struct OverlapAreas {
    std::size_t a_i = 0;  // detected and mark
    std::size_t a_d = 0;  // detected, not mark
    std::size_t a_p = 0;  // mark, not detected
};

struct PrecisionResult {
    double score = 0.0;
    OverlapAreas areas;
};

ErrorStats calibrate_stats(const GenerativeModel& model, const std::vector<AppearanceSample>& calibration,
                           double epsilon_var);
ErrorStats calibrate_stats(std::span<const Raster<double>> abs_errors, double epsilon_var);

/// Pixel-wise (|I - Î| - mu) / sigma^2 in the configured grey scale; the
/// divisor follows cfg (sigma^2, sigma, or 1).
SaliencyMap saliency(const Image& observed, const Image& predicted, const ErrorStats& stats,
                     const DetectorConfig& cfg = {});

/// Pixels strictly above the threshold.
Mask binarize(const SaliencyMap& s, const DetectorConfig& cfg);

/// Connected components of a binary mask in raster order of their first pixel.
std::vector<std::vector<Pixel>> connected_components(const Mask& m, int connectivity);

/// Components of the binarized map with area >= min_area, sorted by total
/// saliency (descending), ties by bbox top-left then first pixel.
std::vector<Region> detect_regions(const SaliencyMap& s, const DetectorConfig& cfg);

/// Strict-weak order used for detection output and winner-take-all.
bool region_precedes(const Region& a, const Region& b);

/// Winner-take-all: the most salient region, or none.
std::optional<Region> pick_mark(const std::vector<Region>& regions);

/// a_i / (a_i + a_d); an empty or missing detection scores 0.
PrecisionResult precision(const std::vector<Pixel>& detected, const GroundTruth& truth);
PrecisionResult precision(const std::optional<Region>& detected, const GroundTruth& truth);

Mask region_mask(const Region& r, int height, int width);

struct TemplateMatch {
    Image crop;
    Pixel offset;
    double score = 0.0;
};

/// Zero-mean normalized cross-correlation search over every offset; window
/// or template with zero variance scores 0. Ties keep the first offset in
/// raster order, so a constant frame returns offset (0,0) with score 0.
/// Rejects a template larger than the frame in either dimension.
TemplateMatch crop_by_template(const Image& frame, const Image& templ);

struct Detection {
    Image predicted;
    SaliencyMap saliency;
    std::vector<Region> regions;
    std::optional<Region> picked;
};

/// Prediction (with cfg.refine_passes for autoencoders) of every frame.
std::vector<Image> predict_for_detection(const GenerativeModel& model, const ErrorStats& stats,
                                         const std::vector<HeadPose>& poses,
                                         const std::vector<const Image*>& observed, const DetectorConfig& cfg);

/// Full single-frame pipeline. `pose` feeds decoders; autoencoders ignore it.
Detection detect(const GenerativeModel& model, const ErrorStats& stats, const Image& observed,
                 const HeadPose& pose, const DetectorConfig& cfg);

struct DetectionRecord {
    std::size_t id = 0;
    std::size_t region_count = 0;
    std::optional<Region> picked;
    PrecisionResult precision;
};

struct NoveltyEvaluation {
    double mean_precision = 0.0;
    std::size_t count = 0;
    std::vector<DetectionRecord> records;
};

/// Predicts every marked test image, scores saliency against `stats` and
/// averages the precision of the winner-take-all region.
NoveltyEvaluation evaluate_novelty(const GenerativeModel& model, const ErrorStats& stats,
                                   const std::vector<MarkedSample>& test, const DetectorConfig& cfg);

}  // namespace msr
