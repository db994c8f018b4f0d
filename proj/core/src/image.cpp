#include "msr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace msr {

void check_intensity_range(const Image& img) {
    for (double v : img.pixels()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ValidationError("image intensity outside [0,1]: " + std::to_string(v));
        }
    }
}

double image_mse(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.empty()) throw ValidationError("image_mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

std::size_t count_differences(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ValidationError("count_differences: shape mismatch");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += (a[i] != b[i]);
    return n;
}

std::size_t count_set(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.pixels().begin(), m.pixels().end(),
                                                   [](std::uint8_t v) { return v != 0; }));
}

static std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> encode_pgm(const Image& img) {
    check_intensity_range(img);
    const std::string header =
        "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.size());
    for (double v : img.pixels()) out.push_back(to_byte(v));
    return out;
}

Image decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_space();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
            if (v > 1'000'000) throw FormatError("pgm: header value too large");
        }
        if (!any) throw FormatError("pgm: malformed header");
        return static_cast<int>(v);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("pgm: not a P5 file");
    pos = 2;
    const int width = read_int();
    const int height = read_int();
    const int maxval = read_int();
    if (maxval != 255) throw FormatError("pgm: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("pgm: malformed header");
    ++pos;
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (width <= 0 || height <= 0 || bytes.size() - pos != n) throw FormatError("pgm: truncated pixel data");
    Image img(height, width);
    for (std::size_t i = 0; i < n; ++i) img[i] = bytes[pos + i] / 255.0;
    return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
    const auto bytes = encode_pgm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing image file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes);
}

Image quantize8(const Image& img) {
    Image out = img;
    for (double& v : out.pixels()) v = to_byte(v) / 255.0;
    return out;
}

Image normalize_minmax(const Raster<double>& values) {
    Image out(values.height(), values.width());
    const auto [lo, hi] = std::minmax_element(values.pixels().begin(), values.pixels().end());
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = span > 0.0 ? (values[i] - *lo) / span : 0.0;
    }
    return out;
}

Image mask_to_image(const Mask& m) {
    Image out(m.height(), m.width());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
    return out;
}

}  // namespace msr
