#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mapose/geometry.hpp"

namespace mapose {

struct Correspondence {
    Vec3 point3;  // body frame, meters
    Vec2 point2;  // pixels
    double weight = 1.0;
};

struct RansacParams {
    int max_iterations = 200;
    double inlier_threshold = 4.0;  // pixels, image scale
    double confidence = 0.999;
    std::uint64_t seed = 0;

    static constexpr int kMinSample = 6;

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("RansacParams: max_iterations must be >= 1");
        if (!(inlier_threshold > 0.0)) throw std::invalid_argument("RansacParams: inlier_threshold must be positive");
        if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("RansacParams: confidence must be in (0,1)");
    }
};

struct PnpSolution {
    Pose pose;
    std::vector<bool> inlier_mask;
    double rms_reprojection_error = 0.0;  // pixels, over inliers
};

namespace detail {

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

struct Normalization2D {
    Vec2 centroid{0.0, 0.0};
    double scale = 1.0;
};

struct Normalization3D {
    Vec3 centroid{0.0, 0.0, 0.0};
    double scale = 1.0;
};

}  // namespace detail

/// Direct linear transform over camera-normalized, Hartley-conditioned
/// coordinates. The rotation block of the homogeneous solution is projected
/// onto SO(3) by polar factorization, the scale is fixed from its singular
/// values and the global sign is chosen so the 3D centroid sits in front of
/// the camera.
inline Pose solve_dlt(const std::vector<Correspondence>& correspondences, const CameraIntrinsics& cam) {
    const int n = static_cast<int>(correspondences.size());
    if (n < RansacParams::kMinSample)
        throw InsufficientPoints("solve_dlt: need at least 6 correspondences, got " + std::to_string(n));

    // camera-normalized observations
    std::vector<Vec2> obs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Vec2& px = correspondences[static_cast<size_t>(i)].point2;
        obs[static_cast<size_t>(i)] = {(px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy};
    }

    detail::Normalization2D n2;
    detail::Normalization3D n3;
    for (int i = 0; i < n; ++i) {
        n2.centroid += obs[static_cast<size_t>(i)];
        n3.centroid += correspondences[static_cast<size_t>(i)].point3;
    }
    n2.centroid /= n;
    n3.centroid /= n;
    double mean2 = 0.0, mean3 = 0.0;
    for (int i = 0; i < n; ++i) {
        mean2 += (obs[static_cast<size_t>(i)] - n2.centroid).norm();
        mean3 += (correspondences[static_cast<size_t>(i)].point3 - n3.centroid).norm();
    }
    mean2 /= n;
    mean3 /= n;
    if (mean3 < 1e-12) throw DegenerateConfiguration("solve_dlt: 3D points are coincident");
    n2.scale = mean2 > 1e-12 ? std::sqrt(2.0) / mean2 : 1.0;
    n3.scale = std::sqrt(3.0) / mean3;

    Eigen::MatrixXd a(2 * n, 12);
    for (int i = 0; i < n; ++i) {
        const Vec2 x = n2.scale * (obs[static_cast<size_t>(i)] - n2.centroid);
        const Vec3 p = n3.scale * (correspondences[static_cast<size_t>(i)].point3 - n3.centroid);
        Eigen::RowVector4d hp;
        hp << p.x(), p.y(), p.z(), 1.0;
        a.row(2 * i).setZero();
        a.row(2 * i).segment<4>(0) = hp;
        a.row(2 * i).segment<4>(8) = -x.x() * hp;
        a.row(2 * i + 1).setZero();
        a.row(2 * i + 1).segment<4>(4) = hp;
        a.row(2 * i + 1).segment<4>(8) = -x.y() * hp;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sigma = svd.singularValues();
    // rank must be exactly 11: compare the largest singular value against
    // the second smallest (the smallest belongs to the solution itself)
    if (sigma(10) <= 0.0 || sigma(0) / sigma(10) > 1e12)
        throw DegenerateConfiguration("solve_dlt: rank-deficient system (coplanar or degenerate points)");

    const Eigen::VectorXd p = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> prj;
    prj << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);

    // denormalize: x_norm = T2 * x, X_norm = T3 * X  =>  P = T2^-1 * P' * T3
    Eigen::Matrix3d t2_inv = Eigen::Matrix3d::Identity();
    t2_inv(0, 0) = t2_inv(1, 1) = 1.0 / n2.scale;
    t2_inv(0, 2) = n2.centroid.x();
    t2_inv(1, 2) = n2.centroid.y();
    Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
    t3.topLeftCorner<3, 3>() *= n3.scale;
    t3.topRightCorner<3, 1>() = -n3.scale * n3.centroid;
    prj = t2_inv * prj * t3;

    // resolve the homogeneous sign so the centroid has positive depth
    Eigen::Vector4d centroid_h;
    centroid_h << n3.centroid.x(), n3.centroid.y(), n3.centroid.z(), 1.0;
    if (prj.row(2) * centroid_h < 0.0) prj = -prj;

    const Mat3 b = prj.leftCols<3>();
    Eigen::JacobiSVD<Mat3> polar(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double flip = (polar.matrixU() * polar.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Mat3 rot = polar.matrixU() * Vec3{1.0, 1.0, flip}.asDiagonal() * polar.matrixV().transpose();
    const double scale = polar.singularValues().mean();
    if (!(scale > 1e-15)) throw DegenerateConfiguration("solve_dlt: vanishing projection scale");

    return {Quaternion::from_matrix(rot).canonical(), prj.col(3) / scale};
}

/// Analytic reprojection Jacobian at the current pose: residual derivative
/// with respect to [axis-angle increment (right-composed) | translation].
inline Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& pose, const CameraIntrinsics& cam,
                                                         const Vec3& point) {
    const Vec3 pc = pose.apply(point);
    const double z = pc.z();
    if (z <= kDepthEpsilon) throw NonPositiveDepth("reprojection_jacobian: point behind camera");
    Eigen::Matrix<double, 2, 3> duv_dy;
    duv_dy << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z),  //
        0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
    const Mat3 rot = quat_to_matrix(pose.rotation);
    Eigen::Matrix<double, 2, 6> jac;
    jac.leftCols<3>() = duv_dy * (-rot * detail::skew(point));
    jac.rightCols<3>() = duv_dy;
    return jac;
}

struct RefineResult {
    Pose pose;
    double rms = 0.0;  // pixels, weighted over all correspondences
    bool converged = false;
    int iterations = 0;
};

namespace detail {

inline Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
    const Vec3 dtheta = delta.head<3>();
    const double angle = dtheta.norm();
    const Quaternion dq = angle > 0.0 ? Quaternion::from_axis_angle(dtheta / angle, angle) : Quaternion::identity();
    return {pose.rotation * dq, pose.translation + delta.tail<3>()};
}

inline std::optional<double> weighted_cost(const Pose& pose, const std::vector<Correspondence>& corrs,
                                           const CameraIntrinsics& cam) {
    double cost = 0.0;
    for (const Correspondence& c : corrs) {
        const Vec3 pc = pose.apply(c.point3);
        if (pc.z() <= kDepthEpsilon) return std::nullopt;
        const Vec2 proj{cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
        cost += c.weight * (proj - c.point2).squaredNorm();
    }
    return cost;
}

}  // namespace detail

/// Levenberg-Marquardt minimization of the weighted squared reprojection
/// error over a 6-parameter local chart. Damping halves on accepted steps
/// and quadruples on rejected ones; steps producing non-positive depths are
/// rejected the same way. The best pose seen is always returned, so the
/// reported rms never exceeds the initial rms.
inline RefineResult refine_lm(const Pose& init, const std::vector<Correspondence>& correspondences,
                              const CameraIntrinsics& cam, int max_iterations = 50,
                              double gradient_tolerance = 1e-10) {
    if (correspondences.empty()) throw InsufficientPoints("refine_lm: no correspondences");
    double weight_sum = 0.0;
    for (const Correspondence& c : correspondences) weight_sum += c.weight;
    if (!(weight_sum > 0.0)) throw InsufficientPoints("refine_lm: all weights are zero");

    RefineResult result;
    result.pose = init;
    const auto initial_cost = detail::weighted_cost(init, correspondences, cam);
    if (!initial_cost) throw NonPositiveDepth("refine_lm: initial pose puts points behind the camera");
    double cost = *initial_cost;
    double lambda = 1e-3;
    constexpr double kStepTolerance = 1e-12;

    Pose pose = init;
    for (int iter = 0; iter < max_iterations; ++iter) {
        result.iterations = iter + 1;
        Eigen::Matrix<double, 6, 6> hessian = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> gradient = Eigen::Matrix<double, 6, 1>::Zero();
        for (const Correspondence& c : correspondences) {
            const Eigen::Matrix<double, 2, 6> jac = reprojection_jacobian(pose, cam, c.point3);
            const Vec2 proj = project(pose, cam, c.point3);
            const Vec2 residual = proj - c.point2;
            hessian += c.weight * jac.transpose() * jac;
            gradient += c.weight * jac.transpose() * residual;
        }
        if (gradient.cwiseAbs().maxCoeff() <= gradient_tolerance) {
            result.converged = true;
            break;
        }
        bool accepted = false;
        while (!accepted && lambda < 1e12) {
            Eigen::Matrix<double, 6, 6> damped = hessian;
            damped.diagonal() += lambda * hessian.diagonal();
            const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-gradient);
            if (delta.norm() <= kStepTolerance) {
                result.converged = true;
                break;
            }
            const Pose trial = detail::apply_increment(pose, delta);
            const auto trial_cost = detail::weighted_cost(trial, correspondences, cam);
            if (trial_cost && *trial_cost < cost) {
                pose = trial;
                cost = *trial_cost;
                lambda *= 0.5;
                accepted = true;
            } else {
                lambda *= 4.0;
            }
        }
        if (!accepted) {
            // no acceptable step at any damping: either converged via the
            // step-size test above or persistently stuck
            break;
        }
    }
    result.pose = {pose.rotation.canonical(), pose.translation};
    result.rms = std::sqrt(cost / weight_sum);
    return result;
}

/// RANSAC over minimal 6-point DLT hypotheses with reprojection-error
/// consensus, adaptive iteration bound and a final LM refinement over the
/// best consensus set. Each hypothesis is polished by a short LM pass on
/// its own sample before counting inliers: the raw minimal DLT solution is
/// projective, and under weak-perspective geometry the polar projection
/// onto SO(3) alone leaves pixel-level noise amplified far beyond the
/// inlier threshold. Deterministic given the seed; ties in inlier count
/// keep the earlier hypothesis.
inline PnpSolution solve_ransac(const std::vector<Correspondence>& correspondences, const CameraIntrinsics& cam,
                                const RansacParams& params) {
    params.validate();
    const int n = static_cast<int>(correspondences.size());
    if (n < RansacParams::kMinSample)
        throw InsufficientPoints("solve_ransac: need at least 6 correspondences, got " + std::to_string(n));

    RandomStream rng(params.seed);
    const auto reprojection_error = [&](const Pose& pose, const Correspondence& c) -> double {
        const Vec3 pc = pose.apply(c.point3);
        if (pc.z() <= kDepthEpsilon) return std::numeric_limits<double>::infinity();
        const Vec2 proj{cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
        return (proj - c.point2).norm();
    };

    std::vector<int> indices(static_cast<size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);
    std::vector<bool> best_mask;
    Pose best_pose;
    int best_count = 0;
    int adaptive_bound = params.max_iterations;

    for (int iter = 0; iter < std::min(params.max_iterations, adaptive_bound); ++iter) {
        for (int k = 0; k < RansacParams::kMinSample; ++k) {
            const int j = k + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - k)));
            std::swap(indices[static_cast<size_t>(k)], indices[static_cast<size_t>(j)]);
        }
        std::vector<Correspondence> sample;
        sample.reserve(RansacParams::kMinSample);
        for (int k = 0; k < RansacParams::kMinSample; ++k)
            sample.push_back(correspondences[static_cast<size_t>(indices[static_cast<size_t>(k)])]);

        Pose hypothesis;
        try {
            hypothesis = refine_lm(solve_dlt(sample, cam), sample, cam, 20).pose;
        } catch (const Error&) {
            continue;
        }
        std::vector<bool> mask(static_cast<size_t>(n), false);
        int count = 0;
        for (int i = 0; i < n; ++i) {
            if (reprojection_error(hypothesis, correspondences[static_cast<size_t>(i)]) <= params.inlier_threshold) {
                mask[static_cast<size_t>(i)] = true;
                ++count;
            }
        }
        if (count > best_count) {
            best_count = count;
            best_mask = std::move(mask);
            best_pose = hypothesis;
            const double inlier_ratio = static_cast<double>(count) / n;
            const double p_good = std::pow(inlier_ratio, RansacParams::kMinSample);
            if (p_good >= 1.0 - 1e-12) {
                adaptive_bound = iter + 1;
            } else if (p_good > 0.0) {
                const double needed = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
                adaptive_bound = static_cast<int>(std::min(std::ceil(needed), static_cast<double>(params.max_iterations)));
            }
        }
    }
    if (best_count < RansacParams::kMinSample)
        throw NoConsensus("solve_ransac: no hypothesis reached " + std::to_string(RansacParams::kMinSample) + " inliers");

    std::vector<Correspondence> consensus;
    for (int i = 0; i < n; ++i)
        if (best_mask[static_cast<size_t>(i)]) consensus.push_back(correspondences[static_cast<size_t>(i)]);
    const RefineResult refined = refine_lm(best_pose, consensus, cam);

    // re-evaluate membership under the refined pose; keep the consensus mask
    // if refinement somehow shrank it below the minimal sample
    std::vector<bool> final_mask(static_cast<size_t>(n), false);
    int final_count = 0;
    for (int i = 0; i < n; ++i) {
        if (reprojection_error(refined.pose, correspondences[static_cast<size_t>(i)]) <= params.inlier_threshold) {
            final_mask[static_cast<size_t>(i)] = true;
            ++final_count;
        }
    }
    if (final_count < RansacParams::kMinSample) {
        final_mask = best_mask;
        final_count = best_count;
    }

    PnpSolution solution;
    solution.pose = refined.pose;
    solution.inlier_mask = final_mask;
    double sq_sum = 0.0;
    for (int i = 0; i < n; ++i)
        if (final_mask[static_cast<size_t>(i)]) {
            const double e = reprojection_error(refined.pose, correspondences[static_cast<size_t>(i)]);
            sq_sum += e * e;
        }
    solution.rms_reprojection_error = std::sqrt(sq_sum / final_count);
    return solution;
}

}  // namespace mapose
