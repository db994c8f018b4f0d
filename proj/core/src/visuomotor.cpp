#include "msr/visuomotor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msr/error.hpp"
#include "msr/random.hpp"

namespace msr {

void ReachNetConfig::validate() const {
    if (hidden < 1) throw ValidationError("reach: hidden must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("reach: lr must be finite and >= 0");
    if (iterations < 0) throw ValidationError("reach: iterations must be >= 0");
    if (!(holdout_frac >= 0.0 && holdout_frac < 1.0)) throw ValidationError("reach: holdout_frac must be in [0, 1)");
}

ReachNormalizer::ReachNormalizer(int height, int width, JointLimits limits)
    : height_(height), width_(width), limits_(std::move(limits)) {
    if (height < 2 || width < 2) throw ValidationError("reach: image must be at least 2x2");
    limits_.validate();
}

namespace {

double unit(double v, double lo, double hi, const char* what) {
    if (!(v >= lo && v <= hi)) {
        throw RangeError(std::string(what) + " value " + std::to_string(v) + " outside [" + std::to_string(lo) +
                         ", " + std::to_string(hi) + "]");
    }
    return (v - lo) / (hi - lo);
}

double from_unit(double u, double lo, double hi, const char* what) {
    if (!(u >= 0.0 && u <= 1.0)) throw RangeError(std::string(what) + " normalized value outside [0, 1]");
    return lo + u * (hi - lo);
}

}  // namespace

Eigen::VectorXd ReachNormalizer::normalize_centroid(const PointF& c) const {
    Eigen::VectorXd u(2);
    u << unit(c.row, 0.0, height_ - 1.0, "centroid row"), unit(c.col, 0.0, width_ - 1.0, "centroid col");
    return u;
}

PointF ReachNormalizer::denormalize_centroid(const Eigen::VectorXd& u) const {
    if (u.size() != 2) throw ValidationError("reach: centroid vector must have 2 components");
    return {from_unit(u(0), 0.0, height_ - 1.0, "centroid row"), from_unit(u(1), 0.0, width_ - 1.0, "centroid col")};
}

Eigen::VectorXd ReachNormalizer::normalize_joints(const JointVector& q) const {
    if (q.size() != limits_.size()) throw ValidationError("reach: joint vector has wrong dimension");
    Eigen::VectorXd u(static_cast<Eigen::Index>(q.size()));
    for (std::size_t k = 0; k < q.size(); ++k) {
        u(static_cast<Eigen::Index>(k)) = unit(q[k], limits_.lower[k], limits_.upper[k], limits_.names[k].c_str());
    }
    return u;
}

JointVector ReachNormalizer::denormalize_joints(const Eigen::VectorXd& u) const {
    if (static_cast<std::size_t>(u.size()) != limits_.size()) {
        throw ValidationError("reach: joint vector has wrong dimension");
    }
    JointVector q(limits_.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        q[k] = from_unit(u(static_cast<Eigen::Index>(k)), limits_.lower[k], limits_.upper[k], limits_.names[k].c_str());
    }
    return q;
}

std::vector<ReachSample> build_reach_dataset(const EnvConfig& env, const FaceStyle& style, std::size_t n,
                                             std::uint64_t seed) {
    if (n < 10) throw ValidationError("reach dataset needs at least 10 samples, got " + std::to_string(n));
    const Mask face = face_mask(env, style, {});
    int top = env.height, bottom = -1, left = env.width, right = -1;
    for (int r = 0; r < env.height; ++r) {
        for (int c = 0; c < env.width; ++c) {
            if (!face(r, c)) continue;
            top = std::min(top, r);
            bottom = std::max(bottom, r);
            left = std::min(left, c);
            right = std::max(right, c);
        }
    }
    if (bottom < 0) throw ValidationError("reach: canonical face covers no pixels");

    // Uniform over the union of face pixel cells, so rounding lands in the mask.
    Rng rng(derive_seed(seed, "reach-centroids"));
    std::vector<ReachSample> out;
    out.reserve(n);
    while (out.size() < n) {
        const PointF c{rng.uniform(top - 0.5, bottom + 0.5), rng.uniform(left - 0.5, right + 0.5)};
        const int r = std::clamp(static_cast<int>(std::lround(c.row)), 0, env.height - 1);
        const int k = std::clamp(static_cast<int>(std::lround(c.col)), 0, env.width - 1);
        if (!face(r, k)) continue;
        const PointF inside{std::clamp(c.row, 0.0, env.height - 1.0), std::clamp(c.col, 0.0, env.width - 1.0)};
        out.push_back({inside, ground_truth_reach(env, inside)});
    }
    return out;
}

ReachModel make_reach_model(const EnvConfig& env, const FaceStyle& style, const ReachNetConfig& cfg) {
    cfg.validate();
    const JointLimits limits = JointLimits::nao_left_arm();
    const std::vector<std::size_t> widths{2, cfg.hidden, limits.size()};
    ReachModel m;
    m.net = nn::Network::glorot(nn::chain(widths, nn::Activation::Sigmoid, nn::Activation::Sigmoid),
                                derive_seed(cfg.seed, "reach-init"));
    m.norm = ReachNormalizer(env.height, env.width, limits);
    m.trained_region = face_mask(env, style, {});
    return m;
}

ReachOutput reach(const ReachModel& model, const PointF& c) {
    const Eigen::VectorXd y = model.net.predict(model.norm.normalize_centroid(c));
    ReachOutput out;
    out.q = model.norm.denormalize_joints(y);
    const int r = std::clamp(static_cast<int>(std::lround(c.row)), 0, model.norm.height() - 1);
    const int k = std::clamp(static_cast<int>(std::lround(c.col)), 0, model.norm.width() - 1);
    out.extrapolated = model.trained_region.empty() || !model.trained_region(r, k);
    return out;
}

ReachOutput reach(const ReachModel& model, const Region& detected) { return reach(model, detected.centroid); }

double joint_rms(const JointVector& a, const JointVector& b) {
    if (a.size() != b.size() || a.empty()) throw ValidationError("joint_rms: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

namespace {

nn::Dataset reach_pairs(const ReachNormalizer& norm, const std::vector<const ReachSample*>& samples) {
    nn::Dataset d;
    d.inputs.resize(2, static_cast<Eigen::Index>(samples.size()));
    d.targets.resize(static_cast<Eigen::Index>(norm.limits().size()), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        d.inputs.col(static_cast<Eigen::Index>(j)) = norm.normalize_centroid(samples[j]->c);
        d.targets.col(static_cast<Eigen::Index>(j)) = norm.normalize_joints(samples[j]->q);
    }
    return d;
}

std::vector<double> rms_per_joint(const ReachModel& model, const std::vector<const ReachSample*>& samples) {
    std::vector<double> acc(model.norm.limits().size(), 0.0);
    for (const ReachSample* s : samples) {
        const JointVector q = reach(model, s->c).q;
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (q[k] - s->q[k]) * (q[k] - s->q[k]);
    }
    for (double& v : acc) v = std::sqrt(v / static_cast<double>(samples.size()));
    return acc;
}

double pooled(const std::vector<double>& per_joint) {
    double s = 0.0;
    for (double v : per_joint) s += v * v;
    return std::sqrt(s / static_cast<double>(per_joint.size()));
}

}  // namespace

ReachTraining train_reach(const EnvConfig& env, const FaceStyle& style, const std::vector<ReachSample>& data,
                          const ReachNetConfig& cfg) {
    if (data.size() < 10) throw ValidationError("reach training needs at least 10 samples, got " + std::to_string(data.size()));
    ReachTraining out;
    out.model = make_reach_model(env, style, cfg);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, "reach-split"));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_frac * static_cast<double>(data.size())));
    std::vector<const ReachSample*> train_set, hold_set;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_hold ? hold_set : train_set).push_back(&data[order[i]]);

    const nn::Dataset pairs = reach_pairs(out.model.norm, train_set);
    nn::AdamState state = nn::AdamState::fresh(out.model.net);
    out.train_loss.reserve(static_cast<std::size_t>(cfg.iterations));
    for (int it = 0; it < cfg.iterations; ++it) {
        const nn::ForwardCache cache = out.model.net.forward(pairs.inputs);
        const double loss = nn::mse_loss(cache.output(), pairs.targets);
        if (!std::isfinite(loss)) throw DivergenceError("reach training diverged at iteration " + std::to_string(it));
        out.train_loss.push_back(loss);
        nn::adam_step(out.model.net, out.model.net.backward(cache, nn::mse_gradient(cache.output(), pairs.targets)),
                      state, cfg.lr, cfg.adam);
    }
    out.final_mse = nn::evaluate_mse(out.model.net, pairs);
    if (!std::isfinite(out.final_mse)) throw DivergenceError("reach training produced non-finite parameters");

    out.train_count = train_set.size();
    out.holdout_count = hold_set.size();
    out.holdout_rms_per_joint = rms_per_joint(out.model, hold_set.empty() ? train_set : hold_set);
    out.holdout_rms = pooled(out.holdout_rms_per_joint);
    return out;
}

std::vector<double> grid_rms_per_joint(const EnvConfig& env, const ReachModel& model, int step) {
    if (step < 1) throw ValidationError("grid step must be >= 1");
    std::vector<ReachSample> grid;
    for (int r = 0; r < env.height; r += step) {
        for (int c = 0; c < env.width; c += step) {
            if (!model.trained_region(r, c)) continue;
            const PointF p{static_cast<double>(r), static_cast<double>(c)};
            grid.push_back({p, ground_truth_reach(env, p)});
        }
    }
    if (grid.empty()) throw ValidationError("grid has no points inside the trained region");
    std::vector<const ReachSample*> ptrs;
    for (const auto& g : grid) ptrs.push_back(&g);
    return rms_per_joint(model, ptrs);
}

TrialRecord simulate_reach_trial(const TrialContext& ctx, const TrialSpec& spec, std::size_t index) {
    if (ctx.appearance == nullptr || ctx.stats == nullptr || ctx.reach == nullptr) {
        throw ValidationError("simulate_reach_trial: appearance model, statistics and reach model are required");
    }
    TrialRecord rec;
    rec.index = index;
    rec.spec = spec;

    Image frame = render_face(ctx.env, ctx.style, spec.pose, spec.noise_seed);
    std::optional<GroundTruth> truth;
    if (spec.mark) {
        auto [marked, gt] = inject_mark(frame, *spec.mark);
        frame = std::move(marked);
        truth = std::move(gt);
    }

    const Detection det = detect(*ctx.appearance, *ctx.stats, frame, spec.pose, ctx.detector);
    if (!det.picked) return rec;
    rec.any_region = true;
    rec.centroid = det.picked->centroid;

    const ReachOutput out = reach(*ctx.reach, *det.picked);
    rec.q = out.q;
    rec.extrapolated = out.extrapolated;
    if (truth) {
        rec.precision = precision(det.picked, *truth).score;
        const PointF center = truth->mark.center();
        rec.centroid_error_px = std::hypot(rec.centroid->row - center.row, rec.centroid->col - center.col);
        const BoundingBox box{truth->mark.top_left.row, truth->mark.top_left.col,
                              truth->mark.top_left.row + truth->mark.height - 1,
                              truth->mark.top_left.col + truth->mark.width - 1};
        rec.detected = box.contains(*rec.centroid);
        rec.joint_error_deg = joint_rms(out.q, ground_truth_reach(ctx.env, center));
        rec.reached = rec.detected && *rec.joint_error_deg < ctx.reach_tolerance_deg;
    }
    return rec;
}

}  // namespace msr
