#include "msr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msr/error.hpp"

namespace msr {

namespace {

constexpr int kMargin = 8;

void draw_line(Image& img, double r0, double c0, double r1, double c1, double v, bool dashed) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(r1 - r0), std::abs(c1 - c0)))) + 1;
    for (int i = 0; i <= steps; ++i) {
        if (dashed && (i / 3) % 2 == 1) continue;
        const double t = static_cast<double>(i) / steps;
        const int r = static_cast<int>(std::lround(r0 + t * (r1 - r0)));
        const int c = static_cast<int>(std::lround(c0 + t * (c1 - c0)));
        if (img.contains(r, c)) img(r, c) = v;
    }
}

}  // namespace

Image line_plot(const std::vector<PlotSeries>& series, int height, int width) {
    if (height < 4 * kMargin || width < 4 * kMargin) throw ValidationError("plot too small");
    Image img(height, width);
    std::fill(img.pixels().begin(), img.pixels().end(), 0.05);

    const int top = kMargin, left = kMargin, bottom = height - 1 - kMargin, right = width - 1 - kMargin;
    for (int c = left; c <= right; ++c) img(top, c) = img(bottom, c) = 0.35;
    for (int r = top; r <= bottom; ++r) img(r, left) = img(r, right) = 0.35;

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.y.size());
        for (double v : s.y) {
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(lo <= hi)) return img;
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double span_x = longest > 1 ? static_cast<double>(longest - 1) : 1.0;
    auto row_of = [&](double v) { return bottom - 2 - (v - lo) / (hi - lo) * (bottom - top - 4); };
    auto col_of = [&](std::size_t i) { return left + 2 + static_cast<double>(i) / span_x * (right - left - 4); };

    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            if (i + 1 < s.y.size() && std::isfinite(s.y[i + 1])) {
                draw_line(img, row_of(s.y[i]), col_of(i), row_of(s.y[i + 1]), col_of(i + 1), s.intensity, s.dashed);
            } else {
                const int r = static_cast<int>(std::lround(row_of(s.y[i])));
                const int c = static_cast<int>(std::lround(col_of(i)));
                if (img.contains(r, c)) img(r, c) = s.intensity;
            }
        }
    }
    return img;
}

}  // namespace msr
