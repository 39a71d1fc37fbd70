#pragma once

#include <cmath>
#include <vector>

#include "mapose/image.hpp"

namespace mapose {

struct FlowParams {
    int pyramid_levels = 3;
    int window_radius = 7;  // 15x15 window
    int max_iterations = 10;
    double convergence_epsilon = 0.01;   // pixels
    double min_eigen_threshold = 1e-4;   // intensity^2 / px^2, per window pixel

    void validate() const {
        if (pyramid_levels < 1) throw std::invalid_argument("FlowParams: pyramid_levels must be >= 1");
        if (window_radius < 2) throw std::invalid_argument("FlowParams: window_radius must be >= 2");
        if (max_iterations < 1) throw std::invalid_argument("FlowParams: max_iterations must be >= 1");
    }
};

enum class TrackStatus { tracked, lost };

struct FlowResult {
    Vec2 displacement{0.0, 0.0};
    TrackStatus status = TrackStatus::lost;
    double residual = 0.0;  // mean absolute intensity error in the final window
};

/// 2x2 box-filter pyramid; level 0 is the input image.
inline std::vector<ImageF> build_pyramid(const ImageF& img, int levels) {
    std::vector<ImageF> pyr;
    pyr.reserve(static_cast<size_t>(levels));
    pyr.push_back(img);
    for (int level = 1; level < levels; ++level) {
        const ImageF& src = pyr.back();
        ImageF dst(src.width / 2, src.height / 2);
        for (int y = 0; y < dst.height; ++y)
            for (int x = 0; x < dst.width; ++x)
                dst.at(x, y) = 0.25f * (src.at(2 * x, 2 * y) + src.at(2 * x + 1, 2 * y) +
                                        src.at(2 * x, 2 * y + 1) + src.at(2 * x + 1, 2 * y + 1));
        pyr.push_back(std::move(dst));
    }
    return pyr;
}

namespace detail {

struct LkWindow {
    std::vector<double> intensity;
    std::vector<double> grad_x;
    std::vector<double> grad_y;
    double gxx = 0.0, gxy = 0.0, gyy = 0.0;
};

inline LkWindow sample_template(const ImageF& img, const Vec2& center, int radius) {
    const int side = 2 * radius + 1;
    LkWindow win;
    win.intensity.resize(static_cast<size_t>(side) * side);
    win.grad_x.resize(win.intensity.size());
    win.grad_y.resize(win.intensity.size());
    size_t i = 0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx, ++i) {
            const double x = center.x() + dx, y = center.y() + dy;
            win.intensity[i] = img.sample(x, y);
            const double gx = 0.5 * (img.sample(x + 1.0, y) - img.sample(x - 1.0, y));
            const double gy = 0.5 * (img.sample(x, y + 1.0) - img.sample(x, y - 1.0));
            win.grad_x[i] = gx;
            win.grad_y[i] = gy;
            win.gxx += gx * gx;
            win.gxy += gx * gy;
            win.gyy += gy * gy;
        }
    return win;
}

}  // namespace detail

/// Coarse-to-fine iterative Lucas-Kanade at each query point: per pyramid
/// level the 2x2 structure-tensor normal equations of the template window
/// are solved against temporal differences until the step drops below
/// convergence_epsilon. Points with a weak structure tensor (minimum
/// eigenvalue per window pixel below min_eigen_threshold) or points leaving
/// the image report lost with a zero displacement.
inline std::vector<FlowResult> estimate_displacements(const ImageF& img_a, const ImageF& img_b,
                                                      const std::vector<Vec2>& points, const FlowParams& params) {
    params.validate();
    if (img_a.width != img_b.width || img_a.height != img_b.height)
        throw DimensionMismatch("estimate_displacements: image dimensions differ");
    const int min_side = (1 << (params.pyramid_levels - 1)) * (2 * params.window_radius + 1);
    if (img_a.width < min_side || img_a.height < min_side)
        throw ImageTooSmall("estimate_displacements: images smaller than " + std::to_string(min_side) + " px per side");

    const auto pyr_a = build_pyramid(img_a, params.pyramid_levels);
    const auto pyr_b = build_pyramid(img_b, params.pyramid_levels);
    const int side = 2 * params.window_radius + 1;
    const double window_pixels = static_cast<double>(side) * side;

    std::vector<FlowResult> results;
    results.reserve(points.size());
    for (const Vec2& point : points) {
        FlowResult res;
        Vec2 d{0.0, 0.0};
        bool ok = true;
        double residual = 0.0;
        for (int level = params.pyramid_levels - 1; level >= 0 && ok; --level) {
            const double scale = static_cast<double>(1 << level);
            const Vec2 pl = point / scale;
            const detail::LkWindow win = detail::sample_template(pyr_a[static_cast<size_t>(level)], pl,
                                                                 params.window_radius);
            const double trace = win.gxx + win.gyy;
            const double diff = win.gxx - win.gyy;
            const double min_eigen = 0.5 * (trace - std::sqrt(diff * diff + 4.0 * win.gxy * win.gxy));
            if (min_eigen / window_pixels < params.min_eigen_threshold) {
                ok = false;
                break;
            }
            const double det = win.gxx * win.gyy - win.gxy * win.gxy;
            const ImageF& target = pyr_b[static_cast<size_t>(level)];
            for (int iter = 0; iter < params.max_iterations; ++iter) {
                double bx = 0.0, by = 0.0, abs_err = 0.0;
                size_t i = 0;
                for (int dy = -params.window_radius; dy <= params.window_radius; ++dy)
                    for (int dx = -params.window_radius; dx <= params.window_radius; ++dx, ++i) {
                        const double diff_i =
                            win.intensity[i] - target.sample(pl.x() + d.x() + dx, pl.y() + d.y() + dy);
                        bx += diff_i * win.grad_x[i];
                        by += diff_i * win.grad_y[i];
                        abs_err += std::abs(diff_i);
                    }
                residual = abs_err / window_pixels;
                const Vec2 step{(win.gyy * bx - win.gxy * by) / det, (win.gxx * by - win.gxy * bx) / det};
                d += step;
                if (step.norm() < params.convergence_epsilon) break;
            }
            if (level > 0) d *= 2.0;
        }
        if (ok && img_a.contains(point.x() + d.x(), point.y() + d.y())) {
            res.displacement = d;
            res.status = TrackStatus::tracked;
            res.residual = residual;
        }
        results.push_back(res);
    }
    return results;
}

/// Runs the tracker at the query point itself; the binding between keypoint
/// predictors and the flow estimator.
inline FlowResult sample_displacement(const ImageF& img_a, const ImageF& img_b, const Vec2& query,
                                      const FlowParams& params) {
    if (!img_a.contains(query.x(), query.y()))
        return FlowResult{};  // outside: lost
    return estimate_displacements(img_a, img_b, {query}, params).front();
}

}  // namespace mapose
