#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "mapose/core.hpp"

namespace mapose {

/// Gaussian heatmap encoding parameters. The elliptical law is
///   sigma_major = min(sigma_base + elongation_gain * |d|,
///                     max_elongation * sigma_base),
///   sigma_minor = sigma_base,
/// with the major axis along the displacement direction. Displacements are
/// measured in heatmap pixels.
struct MotionEncodingParams {
    double sigma_base = 2.0;
    double elongation_gain = 0.5;
    double max_elongation = 3.0;
    double static_threshold = 1.0;  // heatmap pixels
    int heatmap_size = 64;
    int image_size = 256;

    void validate() const {
        if (!(sigma_base > 0.0)) throw std::invalid_argument("MotionEncodingParams: sigma_base must be positive");
        if (elongation_gain < 0.0) throw std::invalid_argument("MotionEncodingParams: negative elongation_gain");
        if (max_elongation < 1.0) throw std::invalid_argument("MotionEncodingParams: max_elongation must be >= 1");
        if (static_threshold < 0.0) throw std::invalid_argument("MotionEncodingParams: negative static_threshold");
        if (heatmap_size <= 0 || image_size <= 0 || image_size % heatmap_size != 0)
            throw std::invalid_argument("MotionEncodingParams: image_size must be a multiple of heatmap_size");
    }
};

/// Per-keypoint confidence grid. Values live in [0, 1]; an encoded map has
/// its grid maximum normalized to exactly 1.
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<float> values;
    float peak_amplitude = 0.0f;

    static Heatmap zeros(int w, int h) {
        Heatmap hm;
        hm.width = w;
        hm.height = h;
        hm.values.assign(static_cast<size_t>(w) * h, 0.0f);
        return hm;
    }

    float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    float& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
};

inline Vec2 to_heatmap_coords(const Vec2& image_px, const MotionEncodingParams& params) {
    const double scale = static_cast<double>(params.heatmap_size) / params.image_size;
    return image_px * scale;
}

inline Vec2 to_image_coords(const Vec2& heatmap_px, const MotionEncodingParams& params) {
    const double scale = static_cast<double>(params.image_size) / params.heatmap_size;
    return heatmap_px * scale;
}

namespace detail {

/// Evaluates exp(-q(p - center)) for the quadratic form with principal axes
/// (sigma_major along dir, sigma_minor across), then normalizes the grid
/// maximum to 1. Out-of-bounds centers produce the all-zero (invisible) map.
inline Heatmap encode_gaussian(const Vec2& kp, double sigma_major, double sigma_minor, const Vec2& major_dir,
                               const MotionEncodingParams& params) {
    const int size = params.heatmap_size;
    Heatmap hm = Heatmap::zeros(size, size);
    if (!(kp.x() >= 0.0 && kp.x() < size && kp.y() >= 0.0 && kp.y() < size)) return hm;

    const double inv_major = 1.0 / (2.0 * sigma_major * sigma_major);
    const double inv_minor = 1.0 / (2.0 * sigma_minor * sigma_minor);
    std::vector<double> dense(static_cast<size_t>(size) * size);
    double max_value = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - kp.x();
            const double dy = y - kp.y();
            const double along = dx * major_dir.x() + dy * major_dir.y();
            const double across = -dx * major_dir.y() + dy * major_dir.x();
            const double v = std::exp(-(along * along * inv_major + across * across * inv_minor));
            dense[static_cast<size_t>(y) * size + x] = v;
            max_value = std::max(max_value, v);
        }
    }
    const double norm = max_value > 0.0 ? 1.0 / max_value : 0.0;
    for (size_t i = 0; i < dense.size(); ++i) hm.values[i] = static_cast<float>(dense[i] * norm);
    hm.peak_amplitude = max_value > 0.0 ? 1.0f : 0.0f;
    return hm;
}

}  // namespace detail

/// Standard circular Gaussian heatmap (no motion encoding).
inline Heatmap encode_circular(const Vec2& kp, const MotionEncodingParams& params) {
    params.validate();
    return detail::encode_gaussian(kp, params.sigma_base, params.sigma_base, Vec2{1.0, 0.0}, params);
}

/// Motion-aware elliptical heatmap: the Gaussian is elongated along the
/// displacement direction theta = atan2(d_y, d_x) with magnitude-driven
/// sigma_major. Displacements below static_threshold fall back to the
/// circular encoding (bitwise-identical path).
inline Heatmap encode_motion_aware(const Vec2& kp, const Vec2& displacement, const MotionEncodingParams& params) {
    params.validate();
    const double mag = displacement.norm();
    if (mag < params.static_threshold) return encode_circular(kp, params);
    const double sigma_major =
        std::min(params.sigma_base + params.elongation_gain * mag, params.max_elongation * params.sigma_base);
    const Vec2 dir = displacement / mag;
    return detail::encode_gaussian(kp, sigma_major, params.sigma_base, dir, params);
}

/// Pixelwise geometric mean, renormalized so the maximum is 1 when nonzero.
/// Same-center Gaussians keep their common mode under this fusion.
inline Heatmap fuse(const Heatmap& h_prev, const Heatmap& h_next) {
    if (h_prev.width != h_next.width || h_prev.height != h_next.height)
        throw DimensionMismatch("fuse: heatmap dimensions differ");
    Heatmap out = Heatmap::zeros(h_prev.width, h_prev.height);
    std::vector<double> dense(out.values.size());
    double max_value = 0.0;
    for (size_t i = 0; i < dense.size(); ++i) {
        const double v = std::sqrt(static_cast<double>(h_prev.values[i]) * h_next.values[i]);
        dense[i] = v;
        max_value = std::max(max_value, v);
    }
    const double norm = max_value > 0.0 ? 1.0 / max_value : 0.0;
    for (size_t i = 0; i < dense.size(); ++i) out.values[i] = static_cast<float>(dense[i] * norm);
    out.peak_amplitude = max_value > 0.0 ? 1.0f : 0.0f;
    return out;
}

/// Decoded keypoint with its peak confidence.
struct Detection {
    Vec2 position{0.0, 0.0};
    double confidence = 0.0;
};

namespace detail {

// 1D log-parabolic offset from three positive samples; 0 when non-concave.
inline double parabolic_offset_1d(double left, double center, double right) {
    if (left <= 0.0 || center <= 0.0 || right <= 0.0) return 0.0;
    const double l = std::log(left), c = std::log(center), r = std::log(right);
    const double denom = l + r - 2.0 * c;
    if (denom >= 0.0) return 0.0;
    return std::clamp((l - r) / (2.0 * denom), -0.5, 0.5);
}

}  // namespace detail

namespace detail {

// Least-squares log-paraboloid over the 3x3 neighborhood of (cx, cy).
// Returns false when the stencil touches zero, the border, or the fitted
// surface is not concave. Offsets are the unclamped mode of the fit.
inline bool paraboloid_offset(const Heatmap& hm, int cx, int cy, double& off_x, double& off_y) {
    if (cx <= 0 || cy <= 0 || cx >= hm.width - 1 || cy >= hm.height - 1) return false;
    double s = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const float v = hm.at(cx + dx, cy + dy);
            if (v <= 0.0f) return false;
            const double lv = std::log(static_cast<double>(v));
            s += lv;
            sx += dx * lv;
            sy += dy * lv;
            sxx += dx * dx * lv;
            syy += dy * dy * lv;
            sxy += dx * dy * lv;
        }
    // quadratic a*x^2 + b*y^2 + c*xy + d*x + e*y + f on the stencil;
    // x, y and xy are orthogonal to the remaining basis functions
    const double d = sx / 6.0;
    const double e = sy / 6.0;
    const double c = sxy / 4.0;
    const double a = (-2.0 * s + 3.0 * sxx) / 6.0;
    const double b = (-2.0 * s + 3.0 * syy) / 6.0;
    const double det = 4.0 * a * b - c * c;
    if (!(a < 0.0) || !(det > 0.0)) return false;
    off_x = -(2.0 * b * d - c * e) / det;
    off_y = -(2.0 * a * e - c * d) / det;
    return true;
}

}  // namespace detail

/// Sub-pixel decode: integer argmax (row-major first on ties) refined by a
/// least-squares log-paraboloid over the 3x3 neighborhood, offsets clamped
/// to +-0.5 per axis relative to the fitted cell. When the fit saturates
/// the clamp the mode lies outside the argmax cell (elongated Gaussians
/// slide the grid argmax along their major axis), so the fit re-centers on
/// the neighboring cell, at most three times. All-zero maps decode to
/// nullopt (not detected).
inline std::optional<Detection> decode(const Heatmap& hm) {
    if (hm.width <= 0 || hm.height <= 0 || hm.values.empty()) return std::nullopt;
    int bx = 0, by = 0;
    float best = hm.values[0];
    for (int y = 0; y < hm.height; ++y)
        for (int x = 0; x < hm.width; ++x)
            if (hm.at(x, y) > best) {
                best = hm.at(x, y);
                bx = x;
                by = y;
            }
    if (best <= 0.0f) return std::nullopt;

    int cx = bx, cy = by;
    for (int iter = 0; iter < 3; ++iter) {
        double off_x = 0.0, off_y = 0.0;
        if (!detail::paraboloid_offset(hm, cx, cy, off_x, off_y)) break;
        const int step_x = off_x > 0.5 ? 1 : (off_x < -0.5 ? -1 : 0);
        const int step_y = off_y > 0.5 ? 1 : (off_y < -0.5 ? -1 : 0);
        if ((step_x == 0 && step_y == 0) || iter == 2)
            return Detection{{cx + std::clamp(off_x, -0.5, 0.5), cy + std::clamp(off_y, -0.5, 0.5)},
                             static_cast<double>(best)};
        const int nx = cx + step_x, ny = cy + step_y;
        if (nx <= 0 || ny <= 0 || nx >= hm.width - 1 || ny >= hm.height - 1)
            return Detection{{cx + std::clamp(off_x, -0.5, 0.5), cy + std::clamp(off_y, -0.5, 0.5)},
                             static_cast<double>(best)};
        cx = nx;
        cy = ny;
    }
    // paraboloid unavailable: fall back to per-axis log-parabolas
    double off_x = 0.0, off_y = 0.0;
    if (cx > 0 && cx < hm.width - 1)
        off_x = detail::parabolic_offset_1d(hm.at(cx - 1, cy), hm.at(cx, cy), hm.at(cx + 1, cy));
    if (cy > 0 && cy < hm.height - 1)
        off_y = detail::parabolic_offset_1d(hm.at(cx, cy - 1), hm.at(cx, cy), hm.at(cx, cy + 1));
    return Detection{{cx + off_x, cy + off_y}, static_cast<double>(best)};
}

// --- MAHM heatmap tensor file ------------------------------------------
// magic "MAHM", then u32 LE: version=1, K, H, W, then K*H*W f32 LE values,
// row-major within each map, keypoint-major across maps.

inline constexpr std::uint32_t kHeatmapFileVersion = 1;

inline void write_heatmap_stack(const std::vector<Heatmap>& maps, const std::filesystem::path& path) {
    if (maps.empty()) throw EmptyInput("write_heatmap_stack: no heatmaps");
    const int h = maps.front().height, w = maps.front().width;
    for (const Heatmap& m : maps)
        if (m.width != w || m.height != h) throw DimensionMismatch("write_heatmap_stack: inconsistent dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_heatmap_stack: cannot open " + path.string());
    out.write("MAHM", 4);
    const std::uint32_t header[3] = {kHeatmapFileVersion, static_cast<std::uint32_t>(maps.size()),
                                     static_cast<std::uint32_t>(h)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    const std::uint32_t width32 = static_cast<std::uint32_t>(w);
    out.write(reinterpret_cast<const char*>(&width32), sizeof(width32));
    for (const Heatmap& m : maps)
        out.write(reinterpret_cast<const char*>(m.values.data()),
                  static_cast<std::streamsize>(m.values.size() * sizeof(float)));
    if (!out) throw IoError("write_heatmap_stack: write failure on " + path.string());
}

inline std::vector<Heatmap> read_heatmap_stack(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_heatmap_stack: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MAHM", 4) != 0)
        throw MalformedFile("read_heatmap_stack: bad magic in " + path.string());
    std::uint32_t header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in) throw MalformedFile("read_heatmap_stack: truncated header in " + path.string());
    const auto [version, count, height, width] = std::tuple{header[0], header[1], header[2], header[3]};
    if (version != kHeatmapFileVersion)
        throw MalformedFile("read_heatmap_stack: unsupported version in " + path.string());
    if (count == 0 || height == 0 || width == 0 || count > 4096 || height > 65536 || width > 65536)
        throw MalformedFile("read_heatmap_stack: implausible dimensions in " + path.string());
    std::vector<Heatmap> maps;
    maps.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        Heatmap m = Heatmap::zeros(static_cast<int>(width), static_cast<int>(height));
        in.read(reinterpret_cast<char*>(m.values.data()),
                static_cast<std::streamsize>(m.values.size() * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != m.values.size() * sizeof(float))
            throw MalformedFile("read_heatmap_stack: truncated payload in " + path.string());
        m.peak_amplitude = m.values.empty() ? 0.0f : *std::max_element(m.values.begin(), m.values.end());
        maps.push_back(std::move(m));
    }
    return maps;
}

}  // namespace mapose
