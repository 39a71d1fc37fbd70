#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mapose/core.hpp"

namespace mapose {

/// Grayscale image, intensities in [0, 1], row-major.
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    ImageF() = default;
    ImageF(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }

    bool contains(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
    }

    /// Bilinear sample with clamp-to-edge behavior outside the grid.
    float sample(double x, double y) const {
        x = std::clamp(x, 0.0, static_cast<double>(width - 1));
        y = std::clamp(y, 0.0, static_cast<double>(height - 1));
        const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
        const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
        const int x1 = std::min(x0 + 1, width - 1);
        const int y1 = std::min(y0 + 1, height - 1);
        const double ax = x - x0;
        const double ay = y - y0;
        const double top = (1.0 - ax) * at(x0, y0) + ax * at(x1, y0);
        const double bottom = (1.0 - ax) * at(x0, y1) + ax * at(x1, y1);
        return static_cast<float>((1.0 - ay) * top + ay * bottom);
    }
};

/// Writes binary 8-bit PGM (P5, maxval 255).
inline void write_pgm(const ImageF& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pgm: cannot open " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<size_t>(img.width));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float v = std::clamp(img.at(x, y), 0.0f, 1.0f);
            row[static_cast<size_t>(x)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError("write_pgm: write failure on " + path.string());
}

namespace detail {
inline int pgm_next_int(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comment lines between header tokens
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw MalformedFile("read_pgm: bad header in " + path);
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}
}  // namespace detail

inline ImageF read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pgm: cannot open " + path.string());
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw MalformedFile("read_pgm: not a P5 file: " + path.string());
    const int width = detail::pgm_next_int(in, path.string());
    const int height = detail::pgm_next_int(in, path.string());
    const int maxval = detail::pgm_next_int(in, path.string());
    if (width <= 0 || height <= 0 || maxval != 255) throw MalformedFile("read_pgm: unsupported header in " + path.string());
    ImageF img(width, height);
    std::vector<std::uint8_t> raw(static_cast<size_t>(width) * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) throw MalformedFile("read_pgm: truncated pixel data in " + path.string());
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

}  // namespace mapose
