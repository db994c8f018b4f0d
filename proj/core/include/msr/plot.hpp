#pragma once

#include <vector>

#include "msr/image.hpp"

namespace msr {

struct PlotSeries {
    std::vector<double> y;  // x is the index
    double intensity = 1.0;
    bool dashed = false;
};

/// Line plot on a dark background with a frame; all series share one y range
/// (padded when flat). Non-finite points break the line.
Image line_plot(const std::vector<PlotSeries>& series, int height = 180, int width = 320);

}  // namespace msr
