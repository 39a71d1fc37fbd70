#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "mapose/core.hpp"

namespace mapose {

/// Unit quaternion, Hamilton convention, scalar-first (w, x, y, z).
/// Every constructor normalizes, so stored values always satisfy
/// |norm - 1| <= 1e-9. q and -q denote the same rotation.
struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quaternion() = default;

    Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
        const double n = std::sqrt(w * w + x * x + y * y + z * z);
        if (n < 1e-12) throw std::invalid_argument("Quaternion: zero norm");
        w /= n;
        x /= n;
        y /= n;
        z /= n;
    }

    static Quaternion identity() { return {}; }

    static Quaternion from_axis_angle(const Vec3& axis, double angle_rad) {
        const double n = axis.norm();
        if (n < 1e-12 || angle_rad == 0.0) return identity();
        const double half = 0.5 * angle_rad;
        const double s = std::sin(half) / n;
        return {std::cos(half), axis.x() * s, axis.y() * s, axis.z() * s};
    }

    /// Shepperd's method; m must be a proper rotation.
    static Quaternion from_matrix(const Mat3& m) {
        const double t = m.trace();
        if (t > 0.0) {
            const double s = std::sqrt(t + 1.0) * 2.0;
            return {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s,
                    (m(1, 0) - m(0, 1)) / s};
        }
        if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
            const double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
            return {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s,
                    (m(0, 2) + m(2, 0)) / s};
        }
        if (m(1, 1) > m(2, 2)) {
            const double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
            return {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s,
                    (m(1, 2) + m(2, 1)) / s};
        }
        const double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
        return {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s,
                0.25 * s};
    }

    double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

    Quaternion conjugate() const {
        Quaternion q;
        q.w = w;
        q.x = -x;
        q.y = -y;
        q.z = -z;
        return q;
    }

    Quaternion negated() const {
        Quaternion q;
        q.w = -w;
        q.x = -x;
        q.y = -y;
        q.z = -z;
        return q;
    }

    /// Representative with the first nonzero component of (w,x,y,z) positive.
    Quaternion canonical() const {
        const double c[4] = {w, x, y, z};
        for (double v : c) {
            if (v > 0.0) return *this;
            if (v < 0.0) return negated();
        }
        return *this;
    }

    /// Hamilton product.
    Quaternion operator*(const Quaternion& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
    }

    /// Rotates v; exact sign symmetry: q and -q give bitwise-equal results.
    Vec3 rotate(const Vec3& v) const {
        const Vec3 u{x, y, z};
        const Vec3 uv = u.cross(v);
        return v + (2.0 * w) * uv + 2.0 * u.cross(uv);
    }
};

inline Mat3 quat_to_matrix(const Quaternion& q) {
    const double xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
    const double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
    Mat3 m;
    m << 1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),  //
        2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),   //
        2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy);
    return m;
}

/// Geodesic rotation distance 2*arccos(|<q1,q2>|), in [0, pi].
/// Insensitive to the sign of either quaternion. Evaluated through the
/// relative quaternion as 2*atan2(|vec|, |w|), which is the same quantity
/// but stays exact near zero where arccos loses all precision. Terms are
/// paired so that q1 = +-q2 cancels bitwise and the result is symmetric.
inline double geodesic_angle(const Quaternion& q1, const Quaternion& q2) {
    const double pw = q1.w * q2.w + q1.x * q2.x + q1.y * q2.y + q1.z * q2.z;
    const double px = (q1.w * q2.x - q1.x * q2.w) + (q1.z * q2.y - q1.y * q2.z);
    const double py = (q1.w * q2.y - q1.y * q2.w) + (q1.x * q2.z - q1.z * q2.x);
    const double pz = (q1.w * q2.z - q1.z * q2.w) + (q1.y * q2.x - q1.x * q2.y);
    return 2.0 * std::atan2(std::sqrt(px * px + py * py + pz * pz), std::abs(pw));
}

inline Quaternion random_unit_quaternion(RandomStream& rng) {
    while (true) {
        const double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
        if (w * w + x * x + y * y + z * z > 1e-12) return {w, x, y, z};
    }
}

/// Rigid transform: camera-frame point = rotation * body point + translation.
struct Pose {
    Quaternion rotation;
    Vec3 translation{0.0, 0.0, 0.0};

    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }

    Pose inverse() const {
        const Quaternion rinv = rotation.conjugate();
        return {rinv, rinv.rotate(-translation)};
    }
};

/// Pinhole model; pixel coordinates have the origin at the top-left sample.
struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
        if (width <= 0 || height <= 0) throw std::invalid_argument("CameraIntrinsics: image size must be positive");
        if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
            throw std::invalid_argument("CameraIntrinsics: principal point outside image");
    }
};

inline CameraIntrinsics default_camera() { return {1000.0, 1000.0, 128.0, 128.0, 256, 256}; }

/// Projects a body-frame point to pixels. Throws NonPositiveDepth when the
/// camera-frame depth falls at or below kDepthEpsilon.
inline Vec2 project(const Pose& pose, const CameraIntrinsics& cam, const Vec3& point) {
    const Vec3 pc = pose.apply(point);
    if (pc.z() <= kDepthEpsilon) throw NonPositiveDepth("project: point depth " + std::to_string(pc.z()) + " m is not positive");
    return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

}  // namespace mapose
