#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mapose/geometry.hpp"
#include "mapose/image.hpp"

namespace mapose {

inline constexpr int kKeypointCount = 8;
inline constexpr double kBboxPadding = 5.0;

/// Rigid spacecraft shape: 8 named body-frame keypoints plus wireframe edges.
struct SpacecraftModel {
    struct Keypoint {
        std::string name;
        Vec3 position;
    };

    std::vector<Keypoint> keypoints;
    std::vector<std::array<int, 2>> edges;

    void validate() const {
        if (static_cast<int>(keypoints.size()) != kKeypointCount)
            throw std::invalid_argument("SpacecraftModel: expected exactly 8 keypoints");
        for (const auto& e : edges)
            if (e[0] < 0 || e[1] < 0 || e[0] >= kKeypointCount || e[1] >= kKeypointCount)
                throw std::invalid_argument("SpacecraftModel: edge index out of range");
        Vec3 centroid = Vec3::Zero();
        for (const auto& k : keypoints) centroid += k.position;
        centroid /= static_cast<double>(keypoints.size());
        Mat3 scatter = Mat3::Zero();
        for (const auto& k : keypoints) {
            const Vec3 d = k.position - centroid;
            scatter += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
        if (eig.eigenvalues()(0) < 1e-9)
            throw std::invalid_argument("SpacecraftModel: keypoints are coplanar");
    }

    /// Rectangular box with corner keypoints; names encode the sign pattern
    /// of (x, y, z), p = positive half, m = negative half.
    static SpacecraftModel box(double sx = 1.0, double sy = 1.0, double sz = 0.5) {
        SpacecraftModel model;
        for (int corner = 0; corner < 8; ++corner) {
            const double x = (corner & 1) ? sx / 2 : -sx / 2;
            const double y = (corner & 2) ? sy / 2 : -sy / 2;
            const double z = (corner & 4) ? sz / 2 : -sz / 2;
            std::string name;
            name += (corner & 1) ? 'p' : 'm';
            name += (corner & 2) ? 'p' : 'm';
            name += (corner & 4) ? 'p' : 'm';
            model.keypoints.push_back({name, {x, y, z}});
        }
        for (int a = 0; a < 8; ++a)
            for (int b = a + 1; b < 8; ++b) {
                const int diff = a ^ b;
                if (diff == 1 || diff == 2 || diff == 4) model.edges.push_back({a, b});
            }
        return model;
    }
};

struct TrajectoryConfig {
    int frame_count = 30;
    std::pair<double, double> angular_rate_range{0.5, 2.0};  // degrees/frame
    double translation_walk_sigma = 0.01;                    // meters/frame
    std::pair<double, double> depth_range{5.0, 15.0};        // meters
    double frustum_margin = 10.0;                            // pixels
    std::uint64_t seed = 0;

    void validate() const {
        if (frame_count < 15) throw std::invalid_argument("TrajectoryConfig: frame_count must be >= 15");
        if (!(angular_rate_range.first >= 0.0 && angular_rate_range.first <= angular_rate_range.second))
            throw std::invalid_argument("TrajectoryConfig: bad angular_rate_range");
        if (!(depth_range.first > 0.0 && depth_range.first <= depth_range.second))
            throw std::invalid_argument("TrajectoryConfig: bad depth_range");
        if (translation_walk_sigma < 0.0) throw std::invalid_argument("TrajectoryConfig: negative walk sigma");
        if (frustum_margin < 0.0) throw std::invalid_argument("TrajectoryConfig: negative margin");
    }
};

/// Ground truth for one frame: pose, projected keypoints, padded bbox.
struct FrameRecord {
    int frame_index = 0;
    Pose pose;
    std::array<Vec2, kKeypointCount> keypoints_2d{};
    std::array<double, 4> bbox{};  // umin, vmin, umax, vmax
    std::array<bool, kKeypointCount> visibility{};
};

struct RenderConfig {
    int image_size = 256;
    int background_star_count = 0;
    double sensor_noise_sigma = 0.0;  // intensity units in [0,1]
    double blob_sigma = 1.5;          // pixels
    std::uint64_t seed = 0;

    void validate() const {
        if (image_size < 64) throw std::invalid_argument("RenderConfig: image_size must be >= 64");
        if (sensor_noise_sigma < 0.0) throw std::invalid_argument("RenderConfig: negative noise sigma");
        if (blob_sigma <= 0.0) throw std::invalid_argument("RenderConfig: blob_sigma must be positive");
    }
};

namespace detail {

inline bool trajectory_in_frustum(const std::vector<Pose>& poses, const SpacecraftModel& model,
                                  const CameraIntrinsics& cam, double margin) {
    for (const Pose& pose : poses) {
        for (const auto& kp : model.keypoints) {
            try {
                const Vec2 px = project(pose, cam, kp.position);
                if (px.x() < margin || px.y() < margin || px.x() > cam.width - margin ||
                    px.y() > cam.height - margin)
                    return false;
            } catch (const NonPositiveDepth&) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace detail

/// Tumbling trajectory: constant body-frame angular velocity plus a
/// translational random walk with depth confined to the configured range.
/// Entire candidate trajectories are rejection-resampled until every
/// keypoint of every frame projects at least frustum_margin pixels inside
/// the image. Deterministic given the seed.
inline std::vector<Pose> generate_trajectory(const SpacecraftModel& model, const CameraIntrinsics& cam,
                                             const TrajectoryConfig& config) {
    config.validate();
    model.validate();
    cam.validate();
    RandomStream rng(config.seed);
    constexpr int kMaxAttempts = 1000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const Quaternion q0 = random_unit_quaternion(rng);
        const double z0 = rng.uniform(config.depth_range.first, config.depth_range.second);
        const Vec3 t0{rng.normal(0.0, 0.02 * z0), rng.normal(0.0, 0.02 * z0), z0};
        const Vec3 axis = rng.unit_vector();
        const double rate_deg = rng.uniform(config.angular_rate_range.first, config.angular_rate_range.second);
        const Quaternion step = Quaternion::from_axis_angle(axis, rate_deg * M_PI / 180.0);

        std::vector<Pose> poses;
        poses.reserve(static_cast<size_t>(config.frame_count));
        poses.push_back({q0, t0});
        for (int i = 1; i < config.frame_count; ++i) {
            const Pose& prev = poses.back();
            Quaternion q = prev.rotation * step;  // body-frame angular velocity
            Vec3 t = prev.translation;
            if (config.translation_walk_sigma > 0.0) {
                t.x() += rng.normal(0.0, config.translation_walk_sigma);
                t.y() += rng.normal(0.0, config.translation_walk_sigma);
                t.z() += rng.normal(0.0, config.translation_walk_sigma);
            }
            t.z() = std::clamp(t.z(), config.depth_range.first, config.depth_range.second);
            poses.push_back({q, t});
        }
        if (detail::trajectory_in_frustum(poses, model, cam, config.frustum_margin)) return poses;
    }
    throw FrustumRejectionExceeded("generate_trajectory: no feasible trajectory after 1000 attempts");
}

/// Projects every pose; bbox is the keypoint hull padded by kBboxPadding
/// and clamped to image bounds.
inline std::vector<FrameRecord> project_sequence(const std::vector<Pose>& poses, const SpacecraftModel& model,
                                                 const CameraIntrinsics& cam) {
    std::vector<FrameRecord> records;
    records.reserve(poses.size());
    for (size_t i = 0; i < poses.size(); ++i) {
        FrameRecord rec;
        rec.frame_index = static_cast<int>(i);
        rec.pose = poses[i];
        double umin = 1e300, vmin = 1e300, umax = -1e300, vmax = -1e300;
        for (int k = 0; k < kKeypointCount; ++k) {
            const Vec2 px = project(poses[i], cam, model.keypoints[static_cast<size_t>(k)].position);
            rec.keypoints_2d[static_cast<size_t>(k)] = px;
            rec.visibility[static_cast<size_t>(k)] =
                px.x() >= 0.0 && px.y() >= 0.0 && px.x() < cam.width && px.y() < cam.height;
            umin = std::min(umin, px.x());
            vmin = std::min(vmin, px.y());
            umax = std::max(umax, px.x());
            vmax = std::max(vmax, px.y());
        }
        rec.bbox = {std::clamp(umin - kBboxPadding, 0.0, static_cast<double>(cam.width)),
                    std::clamp(vmin - kBboxPadding, 0.0, static_cast<double>(cam.height)),
                    std::clamp(umax + kBboxPadding, 0.0, static_cast<double>(cam.width)),
                    std::clamp(vmax + kBboxPadding, 0.0, static_cast<double>(cam.height))};
        records.push_back(rec);
    }
    return records;
}

namespace detail {

// Hi-res raster index a maps to base-image coordinate a/2 - 0.25, so a
// base-integer translation shifts the supersampled grid by an exact
// integer and rasterization commutes with translation.
inline double hires_coord(double base) { return 2.0 * base + 0.5; }

inline void splat_line(std::vector<float>& buf, int size2, const Vec2& a, const Vec2& b, float level) {
    const double x0 = hires_coord(a.x()), y0 = hires_coord(a.y());
    const double x1 = hires_coord(b.x()), y1 = hires_coord(b.y());
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    const int xmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1))) - 2);
    const int xmax = std::min(size2 - 1, static_cast<int>(std::ceil(std::max(x0, x1))) + 2);
    const int ymin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1))) - 2);
    const int ymax = std::min(size2 - 1, static_cast<int>(std::ceil(std::max(y0, y1))) + 2);
    for (int y = ymin; y <= ymax; ++y) {
        for (int x = xmin; x <= xmax; ++x) {
            double t = 0.0;
            if (len2 > 0.0) t = std::clamp(((x - x0) * dx + (y - y0) * dy) / len2, 0.0, 1.0);
            const double px = x0 + t * dx - x, py = y0 + t * dy - y;
            const double dist = std::sqrt(px * px + py * py);
            const double cov = std::clamp(1.5 - dist, 0.0, 1.0);
            float& cell = buf[static_cast<size_t>(y) * size2 + x];
            cell = std::max(cell, static_cast<float>(cov * level));
        }
    }
}

inline void splat_blob(std::vector<float>& buf, int size2, const Vec2& center, double sigma_base_px) {
    const double cx = hires_coord(center.x()), cy = hires_coord(center.y());
    const double sigma = 2.0 * sigma_base_px;
    const int radius = static_cast<int>(std::ceil(5.0 * sigma));
    const int xmin = std::max(0, static_cast<int>(std::floor(cx)) - radius);
    const int xmax = std::min(size2 - 1, static_cast<int>(std::ceil(cx)) + radius);
    const int ymin = std::max(0, static_cast<int>(std::floor(cy)) - radius);
    const int ymax = std::min(size2 - 1, static_cast<int>(std::ceil(cy)) + radius);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = ymin; y <= ymax; ++y) {
        for (int x = xmin; x <= xmax; ++x) {
            const double ddx = x - cx, ddy = y - cy;
            const double v = std::exp(-(ddx * ddx + ddy * ddy) * inv);
            float& cell = buf[static_cast<size_t>(y) * size2 + x];
            cell = std::max(cell, static_cast<float>(v));
        }
    }
}

}  // namespace detail

/// Renders wireframe edges plus Gaussian keypoint blobs with 2x supersampling
/// and a box downfilter, then stars and sensor noise from the per-frame
/// stream seed ^ frame_index.
inline ImageF render_frame(const FrameRecord& record, const SpacecraftModel& model, const RenderConfig& rc) {
    rc.validate();
    const int size = rc.image_size;
    const int size2 = size * 2;
    std::vector<float> hi(static_cast<size_t>(size2) * size2, 0.0f);

    constexpr float kLineLevel = 0.5f;
    for (const auto& e : model.edges)
        detail::splat_line(hi, size2, record.keypoints_2d[static_cast<size_t>(e[0])],
                           record.keypoints_2d[static_cast<size_t>(e[1])], kLineLevel);
    for (int k = 0; k < kKeypointCount; ++k)
        detail::splat_blob(hi, size2, record.keypoints_2d[static_cast<size_t>(k)], rc.blob_sigma);

    ImageF img(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const size_t r0 = static_cast<size_t>(2 * y) * size2 + 2 * x;
            const size_t r1 = r0 + static_cast<size_t>(size2);
            img.at(x, y) = 0.25f * (hi[r0] + hi[r0 + 1] + hi[r1] + hi[r1 + 1]);
        }

    RandomStream rng(rc.seed ^ static_cast<std::uint64_t>(record.frame_index));
    for (int s = 0; s < rc.background_star_count; ++s) {
        const int sx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size)));
        const int sy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size)));
        const float brightness = static_cast<float>(0.25 + 0.75 * rng.uniform());
        img.at(sx, sy) = std::max(img.at(sx, sy), brightness);
    }
    if (rc.sensor_noise_sigma > 0.0) {
        for (float& p : img.pixels)
            p = std::clamp(p + static_cast<float>(rng.normal(0.0, rc.sensor_noise_sigma)), 0.0f, 1.0f);
    }
    return img;
}

}  // namespace mapose
