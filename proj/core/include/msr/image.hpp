#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msr/error.hpp"

namespace msr {

/// Integer pixel coordinate, (row, col).
struct Pixel {
    int row = 0;
    int col = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Sub-pixel coordinate, (row, col).
struct PointF {
    double row = 0.0;
    double col = 0.0;
};

/// Dense row-major 2-D grid.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int height, int width, T fill = T{}) : height_(height), width_(width) {
        if (height <= 0 || width <= 0) {
            throw ValidationError("raster dimensions must be positive, got " +
                                  std::to_string(height) + "x" + std::to_string(width));
        }
        data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
    }
    Raster(int height, int width, std::vector<T> data) : Raster(height, width) {
        if (data.size() != data_.size()) {
            throw ValidationError("raster data length " + std::to_string(data.size()) +
                                  " does not match " + std::to_string(height) + "x" +
                                  std::to_string(width));
        }
        data_ = std::move(data);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool contains(int row, int col) const {
        return row >= 0 && col >= 0 && row < height_ && col < width_;
    }
    bool same_shape(const Raster& o) const { return height_ == o.height_ && width_ == o.width_; }
    template <typename U>
    bool same_shape(const Raster<U>& o) const { return height_ == o.height() && width_ == o.width(); }

    T& operator()(int row, int col) { return data_[index(row, col)]; }
    const T& operator()(int row, int col) const { return data_[index(row, col)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> pixels() & { return data_; }
    std::span<const T> pixels() const& { return data_; }
    // Temporaries hand over their storage so range-for over them stays valid.
    std::vector<T> pixels() && { return std::move(data_); }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(col);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

/// Grayscale image; intensities live in [0, 1].
using Image = Raster<double>;
/// Boolean mask (0 or 1).
using Mask = Raster<std::uint8_t>;

/// Throws ValidationError unless every intensity is finite and in [0, 1].
void check_intensity_range(const Image& img);

/// Mean squared difference between two same-shape images.
double image_mse(const Image& a, const Image& b);

/// Number of pixels that differ (exact comparison).
std::size_t count_differences(const Image& a, const Image& b);

std::size_t count_set(const Mask& m);

/// Binary PGM (P5, maxval 255, intensity = round(v * 255)).
std::vector<std::uint8_t> encode_pgm(const Image& img);
Image decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// Quantizes to the 8-bit grid that a PGM round trip produces.
Image quantize8(const Image& img);

/// Linear min-max stretch into [0, 1]; constant input maps to 0.
Image normalize_minmax(const Raster<double>& values);

Image mask_to_image(const Mask& m);

}  // namespace msr
