#include "msr/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace msr {

void ErrorStatsAccumulator::add(const Raster<double>& abs_error) {
    if (n_ == 0) {
        mean_ = Raster<double>(abs_error.height(), abs_error.width());
        m2_ = Raster<double>(abs_error.height(), abs_error.width());
    } else if (!abs_error.same_shape(mean_)) {
        throw ValidationError("error statistics: image dimensions differ within the calibration set");
    }
    ++n_;
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < abs_error.size(); ++i) {
        const double x = abs_error[i];
        const double delta = x - mean_[i];
        mean_[i] += delta * inv_n;
        m2_[i] += delta * (x - mean_[i]);
    }
}

ErrorStats ErrorStatsAccumulator::finish(double epsilon_var) const {
    if (n_ < 2) throw ValidationError("error statistics need at least 2 calibration images, got " + std::to_string(n_));
    if (!(epsilon_var >= 0.0)) throw ValidationError("epsilon_var must be >= 0");
    ErrorStats s{mean_, m2_, n_, epsilon_var};
    const double denom = static_cast<double>(n_ - 1);
    for (std::size_t i = 0; i < s.sigma2.size(); ++i) s.sigma2[i] = std::max(m2_[i] / denom, epsilon_var);
    return s;
}

Raster<double> absolute_error(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ValidationError("absolute_error: dimension mismatch");
    Raster<double> e(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) e[i] = std::abs(a[i] - b[i]);
    return e;
}

ErrorStats calibrate_stats(std::span<const Raster<double>> abs_errors, double epsilon_var) {
    ErrorStatsAccumulator acc;
    for (const auto& e : abs_errors) acc.add(e);
    return acc.finish(epsilon_var);
}

ErrorStats calibrate_stats(const GenerativeModel& model, const std::vector<AppearanceSample>& calibration,
                           double epsilon_var) {
    if (calibration.size() < 2) {
        throw ValidationError("calibration set needs at least 2 images, got " + std::to_string(calibration.size()));
    }
    ErrorStatsAccumulator acc;
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < calibration.size(); start += kChunk) {
        const std::size_t end = std::min(calibration.size(), start + kChunk);
        std::vector<HeadPose> poses;
        std::vector<const Image*> images;
        for (std::size_t i = start; i < end; ++i) {
            poses.push_back(calibration[i].pose);
            images.push_back(&calibration[i].image);
        }
        const auto predicted = predict_many(model, poses, images);
        for (std::size_t i = start; i < end; ++i) acc.add(absolute_error(calibration[i].image, predicted[i - start]));
    }
    return acc.finish(epsilon_var);
}

void DetectorConfig::validate() const {
    if (!(threshold_frac > 0.0)) throw ValidationError("detector: threshold_frac must be > 0");
    if (!(max_pixel_value > 0.0)) throw ValidationError("detector: max_pixel_value must be > 0");
    if (min_area < 1) throw ValidationError("detector: min_area must be >= 1");
    if (!(epsilon_var >= 0.0)) throw ValidationError("detector: epsilon_var must be >= 0");
    if (connectivity != 4 && connectivity != 8) throw ValidationError("detector: connectivity must be 4 or 8");
    if (refine_passes < 0) throw ValidationError("detector: refine_passes must be >= 0");
}

SaliencyMap saliency(const Image& observed, const Image& predicted, const ErrorStats& stats,
                     const DetectorConfig& cfg) {
    if (!observed.same_shape(predicted) || !observed.same_shape(stats.mu) || !observed.same_shape(stats.sigma2)) {
        throw ValidationError("saliency: dimension mismatch between images and error statistics");
    }
    const double k = cfg.max_pixel_value;
    const SaliencyDivisor divisor = cfg.effective_divisor();
    SaliencyMap out(observed.height(), observed.width());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double numerator = k * (std::abs(observed[i] - predicted[i]) - stats.mu[i]);
        switch (divisor) {
            case SaliencyDivisor::Variance: out[i] = numerator / (k * k * stats.sigma2[i]); break;
            case SaliencyDivisor::StdDev: out[i] = numerator / (k * std::sqrt(stats.sigma2[i])); break;
            case SaliencyDivisor::None: out[i] = numerator; break;
        }
        if (!std::isfinite(out[i])) throw ValidationError("saliency: non-finite value (sigma^2 must be > 0)");
    }
    return out;
}

Mask binarize(const SaliencyMap& s, const DetectorConfig& cfg) {
    const double tau = cfg.threshold();
    Mask m(s.height(), s.width());
    for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i] > tau;
    return m;
}

std::vector<std::vector<Pixel>> connected_components(const Mask& m, int connectivity) {
    if (connectivity != 4 && connectivity != 8) throw ValidationError("connectivity must be 4 or 8");
    static constexpr int kDr[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
    static constexpr int kDc[8] = {0, 0, -1, 1, -1, 1, -1, 1};
    Mask seen(m.height(), m.width());
    std::vector<std::vector<Pixel>> out;
    std::deque<Pixel> queue;
    for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) {
            if (!m(r, c) || seen(r, c)) continue;
            std::vector<Pixel> comp;
            seen(r, c) = 1;
            queue.push_back({r, c});
            while (!queue.empty()) {
                const Pixel p = queue.front();
                queue.pop_front();
                comp.push_back(p);
                for (int k = 0; k < connectivity; ++k) {
                    const int nr = p.row + kDr[k];
                    const int nc = p.col + kDc[k];
                    if (m.contains(nr, nc) && m(nr, nc) && !seen(nr, nc)) {
                        seen(nr, nc) = 1;
                        queue.push_back({nr, nc});
                    }
                }
            }
            std::sort(comp.begin(), comp.end());
            out.push_back(std::move(comp));
        }
    }
    return out;
}

bool region_precedes(const Region& a, const Region& b) {
    if (a.total_saliency != b.total_saliency) return a.total_saliency > b.total_saliency;
    if (a.bbox.top != b.bbox.top) return a.bbox.top < b.bbox.top;
    if (a.bbox.left != b.bbox.left) return a.bbox.left < b.bbox.left;
    if (a.pixels.empty() || b.pixels.empty()) return a.pixels.size() > b.pixels.size();
    return a.pixels.front() < b.pixels.front();
}

std::vector<Region> detect_regions(const SaliencyMap& s, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<Region> regions;
    for (auto& comp : connected_components(binarize(s, cfg), cfg.connectivity)) {
        if (comp.size() < static_cast<std::size_t>(cfg.min_area)) continue;
        Region r;
        r.area = comp.size();
        r.bbox = {comp.front().row, comp.front().col, comp.front().row, comp.front().col};
        double sr = 0.0;
        double sc = 0.0;
        for (const Pixel& p : comp) {
            r.bbox.top = std::min(r.bbox.top, p.row);
            r.bbox.bottom = std::max(r.bbox.bottom, p.row);
            r.bbox.left = std::min(r.bbox.left, p.col);
            r.bbox.right = std::max(r.bbox.right, p.col);
            sr += p.row;
            sc += p.col;
            r.total_saliency += s(p.row, p.col);
        }
        r.centroid = {sr / static_cast<double>(r.area), sc / static_cast<double>(r.area)};
        r.pixels = std::move(comp);
        regions.push_back(std::move(r));
    }
    std::sort(regions.begin(), regions.end(), region_precedes);
    return regions;
}

std::optional<Region> pick_mark(const std::vector<Region>& regions) {
    if (regions.empty()) return std::nullopt;
    const auto best = std::min_element(regions.begin(), regions.end(), region_precedes);
    return *best;
}

PrecisionResult precision(const std::vector<Pixel>& detected, const GroundTruth& truth) {
    PrecisionResult res;
    std::size_t inside = 0;
    for (const Pixel& p : detected) {
        if (!truth.mask.contains(p.row, p.col)) throw ValidationError("precision: detected pixel outside the image");
        inside += truth.mask(p.row, p.col) ? 1 : 0;
    }
    const std::size_t mark_area = count_set(truth.mask);
    res.areas.a_i = inside;
    res.areas.a_d = detected.size() - inside;
    res.areas.a_p = mark_area - inside;
    const std::size_t denom = res.areas.a_i + res.areas.a_d;
    res.score = denom == 0 ? 0.0 : static_cast<double>(res.areas.a_i) / static_cast<double>(denom);
    return res;
}

PrecisionResult precision(const std::optional<Region>& detected, const GroundTruth& truth) {
    if (!detected) {
        PrecisionResult res;
        res.areas.a_p = count_set(truth.mask);
        return res;
    }
    return precision(detected->pixels, truth);
}

Mask region_mask(const Region& r, int height, int width) {
    Mask m(height, width);
    for (const Pixel& p : r.pixels) m(p.row, p.col) = 1;
    return m;
}

TemplateMatch crop_by_template(const Image& frame, const Image& templ) {
    if (templ.empty() || frame.empty()) throw ValidationError("crop_by_template: empty image");
    if (templ.height() > frame.height() || templ.width() > frame.width()) {
        throw ValidationError("crop_by_template: template larger than frame");
    }
    const int th = templ.height();
    const int tw = templ.width();
    const double n = static_cast<double>(templ.size());
    double t_mean = 0.0;
    for (double v : templ.pixels()) t_mean += v;
    t_mean /= n;
    double t_ss = 0.0;
    for (double v : templ.pixels()) t_ss += (v - t_mean) * (v - t_mean);

    TemplateMatch best;
    best.score = -2.0;
    for (int r = 0; r + th <= frame.height(); ++r) {
        for (int c = 0; c + tw <= frame.width(); ++c) {
            double w_mean = 0.0;
            for (int i = 0; i < th; ++i) {
                for (int j = 0; j < tw; ++j) w_mean += frame(r + i, c + j);
            }
            w_mean /= n;
            double cross = 0.0;
            double w_ss = 0.0;
            for (int i = 0; i < th; ++i) {
                for (int j = 0; j < tw; ++j) {
                    const double dw = frame(r + i, c + j) - w_mean;
                    cross += dw * (templ(i, j) - t_mean);
                    w_ss += dw * dw;
                }
            }
            constexpr double kTiny = 1e-24;
            const double score = (w_ss <= kTiny || t_ss <= kTiny) ? 0.0 : cross / std::sqrt(w_ss * t_ss);
            if (score > best.score) {
                best.score = score;
                best.offset = {r, c};
            }
        }
    }
    best.crop = Image(th, tw);
    for (int i = 0; i < th; ++i) {
        for (int j = 0; j < tw; ++j) best.crop(i, j) = frame(best.offset.row + i, best.offset.col + j);
    }
    return best;
}

std::vector<Image> predict_for_detection(const GenerativeModel& model, const ErrorStats& stats,
                                         const std::vector<HeadPose>& poses,
                                         const std::vector<const Image*>& observed, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<Image> predicted = predict_many(model, poses, observed);
    if (model.kind != ModelKind::Autoencoder || cfg.refine_passes == 0) return predicted;
    std::vector<Image> inputs(observed.size());
    std::vector<const Image*> ptrs(observed.size());
    for (int pass = 0; pass < cfg.refine_passes; ++pass) {
        for (std::size_t i = 0; i < observed.size(); ++i) {
            const Mask hot = binarize(saliency(*observed[i], predicted[i], stats, cfg), cfg);
            inputs[i] = *observed[i];
            for (std::size_t p = 0; p < hot.size(); ++p) {
                if (hot[p]) inputs[i][p] = predicted[i][p];
            }
            ptrs[i] = &inputs[i];
        }
        predicted = predict_many(model, poses, ptrs);
    }
    return predicted;
}

Detection detect(const GenerativeModel& model, const ErrorStats& stats, const Image& observed,
                 const HeadPose& pose, const DetectorConfig& cfg) {
    Detection d;
    d.predicted = std::move(predict_for_detection(model, stats, {pose}, {&observed}, cfg).front());
    d.saliency = saliency(observed, d.predicted, stats, cfg);
    d.regions = detect_regions(d.saliency, cfg);
    d.picked = pick_mark(d.regions);
    return d;
}

NoveltyEvaluation evaluate_novelty(const GenerativeModel& model, const ErrorStats& stats,
                                   const std::vector<MarkedSample>& test, const DetectorConfig& cfg) {
    NoveltyEvaluation eval;
    std::vector<HeadPose> poses;
    std::vector<const Image*> images;
    for (const auto& t : test) {
        poses.push_back(t.clean.pose);
        images.push_back(&t.marked);
    }
    const auto predicted = predict_for_detection(model, stats, poses, images, cfg);
    double sum = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto regions = detect_regions(saliency(test[i].marked, predicted[i], stats, cfg), cfg);
        DetectionRecord rec;
        rec.id = test[i].clean.id;
        rec.region_count = regions.size();
        rec.picked = pick_mark(regions);
        rec.precision = precision(rec.picked, test[i].truth);
        sum += rec.precision.score;
        eval.records.push_back(std::move(rec));
    }
    eval.count = test.size();
    eval.mean_precision = test.empty() ? 0.0 : sum / static_cast<double>(test.size());
    return eval;
}

}  // namespace msr
