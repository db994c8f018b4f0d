#include "msr/mirror_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "msr/random.hpp"

namespace msr {

std::string_view to_string(FaceStyleId id) { return id == FaceStyleId::A ? "A" : "B"; }

FaceStyleId parse_face_style(std::string_view s) {
    if (s == "A" || s == "a") return FaceStyleId::A;
    if (s == "B" || s == "b") return FaceStyleId::B;
    throw ValidationError("face style must be \"A\" or \"B\", got \"" + std::string(s) + "\"");
}

FaceStyle FaceStyle::preset(FaceStyleId id) {
    FaceStyle s;
    s.id = id;
    if (id == FaceStyleId::A) return s;

    // B: bright backdrop, dark wide head with a cover band, LED bar eyes.
    s.background = 0.8;
    s.skin = 0.22;
    s.head_radius_row = 21.0;
    s.head_radius_col = 19.0;
    s.eye_shape = EyeShape::Bar;
    s.eye_offset_row = -4.0;
    s.eye_offset_col = 8.0;
    s.eye_radius_row = 1.5;
    s.eye_radius_col = 4.0;
    s.eye_intensity = 0.85;
    s.pupil_radius = 0.0;
    s.pupil_jitter = 1.0;
    s.eye_flicker = 0.12;
    s.mouth_offset_row = 9.0;
    s.mouth_half_width = 7.0;
    s.mouth_half_height = 1.0;
    s.mouth_intensity = 0.7;
    s.band_offset_row = -13.0;
    s.band_half_height = 2.5;
    s.band_intensity = 0.4;
    s.feature_parallax = 1.1;
    return s;
}

void EnvConfig::validate() const {
    if (height <= 0 || width <= 0) throw ValidationError("env: image dimensions must be positive");
    if (pixels_per_degree <= 0.0) throw ValidationError("env: pixels_per_degree must be positive");
    if (noise_amplitude < 0.0) throw ValidationError("env: noise_amplitude must be >= 0");
    if (!(blur_sigma >= 0.0)) throw ValidationError("env: blur_sigma must be >= 0");
    if (supersample < 1) throw ValidationError("env: supersample must be >= 1");
    if (palette.empty()) throw ValidationError("env: palette must be nonempty");
    for (double p : palette) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("env: palette intensities must lie in [0,1]");
    }
    if (mark_size <= 0 || mark_size > height || mark_size > width) {
        throw ValidationError("env: mark_size must fit inside the image");
    }
}

void check_pose(const HeadPose& pose) {
    auto ok = [](double a) { return std::isfinite(a) && a >= -kPoseLimitDeg && a <= kPoseLimitDeg; };
    if (!ok(pose.yaw) || !ok(pose.pitch)) {
        throw RangeError("head pose outside [-5, 5] deg: yaw=" + std::to_string(pose.yaw) +
                         " pitch=" + std::to_string(pose.pitch));
    }
}

PointF head_center(const EnvConfig& env, const HeadPose& pose) {
    return {(env.height - 1) / 2.0 + env.pixels_per_degree * pose.pitch,
            (env.width - 1) / 2.0 + env.pixels_per_degree * pose.yaw};
}

namespace {

struct Gaze {
    double drow = 0.0;
    double dcol = 0.0;
    double flicker = 0.0;
};

inline bool in_ellipse(double dr, double dc, double rr, double rc) {
    const double a = dr / rr;
    const double b = dc / rc;
    return a * a + b * b <= 1.0;
}

inline bool in_rect(double dr, double dc, double half_r, double half_c) {
    return std::abs(dr) <= half_r && std::abs(dc) <= half_c;
}

class FaceShader {
public:
    FaceShader(const EnvConfig& env, const FaceStyle& style, const HeadPose& pose, const Gaze& gaze)
        : style_(style), gaze_(gaze) {
        head_ = head_center(env, pose);
        const double k = env.pixels_per_degree * style.feature_parallax;
        features_ = {(env.height - 1) / 2.0 + k * pose.pitch, (env.width - 1) / 2.0 + k * pose.yaw};
    }

    double operator()(double row, double col) const {
        const double hr = row - head_.row;
        const double hc = col - head_.col;
        if (!in_ellipse(hr, hc, style_.head_radius_row, style_.head_radius_col)) {
            return style_.background;
        }
        double v = style_.skin;
        if (style_.band_half_height > 0.0 &&
            std::abs(hr - style_.band_offset_row) <= style_.band_half_height) {
            v = style_.band_intensity;
        }
        const double fr = row - features_.row;
        const double fc = col - features_.col;
        for (double side : {-1.0, 1.0}) {
            const double er = fr - style_.eye_offset_row;
            const double ec = fc - side * style_.eye_offset_col;
            const bool inside =
                style_.eye_shape == EyeShape::Round
                    ? in_ellipse(er, ec, style_.eye_radius_row, style_.eye_radius_col)
                    : in_rect(er - gaze_.drow, ec - gaze_.dcol, style_.eye_radius_row,
                              style_.eye_radius_col);
            if (!inside) continue;
            v = std::clamp(style_.eye_intensity + gaze_.flicker, 0.0, 1.0);
            if (style_.pupil_radius > 0.0 &&
                in_ellipse(er - gaze_.drow, ec - gaze_.dcol, style_.pupil_radius, style_.pupil_radius)) {
                v = style_.pupil_intensity;
            }
        }
        if (in_rect(fr - style_.mouth_offset_row, fc, style_.mouth_half_height, style_.mouth_half_width)) {
            v = style_.mouth_intensity;
        }
        return v;
    }

private:
    const FaceStyle& style_;
    Gaze gaze_;
    PointF head_;
    PointF features_;
};

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
    if (!(sigma > 0.0)) return img;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * i * i / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (double& w : kernel) w /= total;
    // Clamp-to-edge borders.
    auto pass = [&](const Image& src, bool horizontal) {
        Image dst(src.height(), src.width());
        for (int r = 0; r < src.height(); ++r) {
            for (int c = 0; c < src.width(); ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int rr = horizontal ? r : std::clamp(r + i, 0, src.height() - 1);
                    const int cc = horizontal ? std::clamp(c + i, 0, src.width() - 1) : c;
                    acc += kernel[static_cast<std::size_t>(i + radius)] * src(rr, cc);
                }
                dst(r, c) = acc;
            }
        }
        return dst;
    };
    return pass(pass(img, true), false);
}

Image render_face(const EnvConfig& env, const FaceStyle& style, const HeadPose& pose,
                  std::optional<std::uint64_t> noise_seed) {
    check_pose(pose);
    env.validate();

    Gaze gaze;
    if (noise_seed) {
        Rng rng(derive_seed(*noise_seed, "gaze"));
        gaze.drow = rng.uniform(-style.pupil_jitter, style.pupil_jitter);
        gaze.dcol = rng.uniform(-style.pupil_jitter, style.pupil_jitter);
        gaze.flicker = rng.uniform(-style.eye_flicker, style.eye_flicker);
    }
    const FaceShader shade(env, style, pose, gaze);

    const int s = env.supersample;
    const double inv = 1.0 / static_cast<double>(s * s);
    Image img(env.height, env.width);
    for (int r = 0; r < env.height; ++r) {
        for (int c = 0; c < env.width; ++c) {
            double acc = 0.0;
            for (int i = 0; i < s; ++i) {
                const double sr = r + (i + 0.5) / s - 0.5;
                for (int j = 0; j < s; ++j) {
                    acc += shade(sr, c + (j + 0.5) / s - 0.5);
                }
            }
            img(r, c) = acc * inv;
        }
    }

    if (env.blur_sigma > 0.0) img = gaussian_blur(img, env.blur_sigma);

    if (noise_seed && env.noise_amplitude > 0.0) {
        Rng rng(derive_seed(*noise_seed, "pixel-noise"));
        for (double& v : img.pixels()) {
            v = std::clamp(v + rng.uniform(-env.noise_amplitude, env.noise_amplitude), 0.0, 1.0);
        }
    }
    return img;
}

Mask face_mask(const EnvConfig& env, const FaceStyle& style, const HeadPose& pose) {
    const PointF h = head_center(env, pose);
    Mask m(env.height, env.width);
    for (int r = 0; r < env.height; ++r) {
        for (int c = 0; c < env.width; ++c) {
            m(r, c) = in_ellipse(r - h.row, c - h.col, style.head_radius_row, style.head_radius_col);
        }
    }
    return m;
}

PointF mask_centroid(const Mask& m) {
    double sr = 0.0;
    double sc = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) {
            if (!m(r, c)) continue;
            sr += r;
            sc += c;
            ++n;
        }
    }
    if (n == 0) throw ValidationError("mask_centroid: empty mask");
    return {sr / static_cast<double>(n), sc / static_cast<double>(n)};
}

void check_mark_bounds(const MarkSpec& mark, int height, int width) {
    if (mark.height <= 0 || mark.width <= 0) throw RangeError("mark size must be positive");
    if (mark.top_left.row < 0 || mark.top_left.col < 0 || mark.top_left.row + mark.height > height ||
        mark.top_left.col + mark.width > width) {
        throw RangeError("mark rectangle at (" + std::to_string(mark.top_left.row) + "," +
                         std::to_string(mark.top_left.col) + ") size " + std::to_string(mark.height) +
                         "x" + std::to_string(mark.width) + " leaves the " + std::to_string(height) +
                         "x" + std::to_string(width) + " image");
    }
}

std::pair<Image, GroundTruth> inject_mark(const Image& img, const MarkSpec& mark) {
    check_mark_bounds(mark, img.height(), img.width());
    if (!(mark.intensity >= 0.0 && mark.intensity <= 1.0)) {
        throw RangeError("mark intensity must lie in [0,1]");
    }
    Image out = img;
    GroundTruth truth{mark, Mask(img.height(), img.width())};
    for (int r = mark.top_left.row; r < mark.top_left.row + mark.height; ++r) {
        for (int c = mark.top_left.col; c < mark.top_left.col + mark.width; ++c) {
            out(r, c) = mark.intensity;
            truth.mask(r, c) = 1;
        }
    }
    return {std::move(out), std::move(truth)};
}

MarkSpec sample_mark(std::uint64_t seed, int height, int width, std::span<const double> palette,
                     int mark_height, int mark_width) {
    if (palette.empty()) throw ValidationError("sample_mark: palette must be nonempty");
    if (mark_height <= 0 || mark_width <= 0 || height < mark_height || width < mark_width) {
        throw RangeError("sample_mark: image smaller than mark");
    }
    Rng rng(seed);
    MarkSpec m;
    m.height = mark_height;
    m.width = mark_width;
    m.top_left.row = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - mark_height + 1)));
    m.top_left.col = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - mark_width + 1)));
    m.intensity = palette[rng.below(palette.size())];
    return m;
}

MarkSpec sample_face_mark(std::uint64_t seed, const EnvConfig& env, const FaceStyle& style,
                          const HeadPose& pose, int mark_height, int mark_width) {
    const PointF h = head_center(env, pose);
    auto inside = [&](double r, double c) {
        return in_ellipse(r - h.row, c - h.col, style.head_radius_row, style.head_radius_col);
    };
    Rng rng(seed);
    for (int attempt = 0; attempt < 100000; ++attempt) {
        MarkSpec m = sample_mark(rng.next(), env.height, env.width, env.palette, mark_height, mark_width);
        const double r0 = m.top_left.row;
        const double c0 = m.top_left.col;
        const double r1 = r0 + mark_height - 1;
        const double c1 = c0 + mark_width - 1;
        if (inside(r0, c0) && inside(r0, c1) && inside(r1, c0) && inside(r1, c1)) return m;
    }
    throw RangeError("sample_face_mark: mark does not fit inside the face");
}

HeadPose sample_pose(std::uint64_t seed) {
    Rng rng(seed);
    HeadPose p;
    p.yaw = rng.uniform(-kPoseLimitDeg, kPoseLimitDeg);
    p.pitch = rng.uniform(-kPoseLimitDeg, kPoseLimitDeg);
    return p;
}

// ---------------------------------------------------------------------------

void JointLimits::validate() const {
    if (names.empty() || names.size() != lower.size() || names.size() != upper.size()) {
        throw ValidationError("joint limits: names/lower/upper must be nonempty and equal length");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!(lower[i] < upper[i])) throw ValidationError("joint limits: lower >= upper for " + names[i]);
    }
}

JointLimits JointLimits::nao_left_arm() {
    return {{"HeadYaw", "HeadPitch", "LShoulderPitch", "LShoulderRoll", "LElbowRoll"},
            {-40.0, -38.5, -30.0, -18.0, -88.5},
            {40.0, 29.5, 60.0, 76.0, -2.0}};
}

JointVector reach_center_posture() { return {0.0, -4.0, 15.0, 25.0, -55.0}; }

JointVector ground_truth_reach(const EnvConfig& env, const PointF& c) {
    if (!(c.row >= 0.0 && c.col >= 0.0 && c.row <= env.height - 1 && c.col <= env.width - 1)) {
        throw RangeError("ground_truth_reach: centroid outside the image");
    }
    constexpr double pi = std::numbers::pi;
    const double cy = (env.height - 1) / 2.0;
    const double cx = (env.width - 1) / 2.0;
    const double u = (c.col - cx) / cx;
    const double v = (c.row - cy) / cy;
    JointVector q = reach_center_posture();
    q[0] += -14.0 * u + 1.5 * std::sin(pi * v);
    q[1] += 11.0 * v + 1.5 * std::sin(pi * u);
    q[2] += -22.0 * v + 2.5 * std::sin(pi * (u + v) / 2.0);
    q[3] += 14.0 * u + 2.0 * std::sin(pi * v);
    q[4] += -12.0 * u + 7.0 * v + 2.0 * std::sin(pi * u * v);
    return q;
}

}  // namespace msr
