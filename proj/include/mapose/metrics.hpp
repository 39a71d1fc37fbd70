#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mapose/geometry.hpp"

namespace mapose {

inline constexpr double kPckDiagonalFloor = 1.0;  // pixels, collapsed-prediction guard

namespace detail {

/// Pairwise summation; bounds rounding drift independently of input order.
inline double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

inline double mean_of(std::span<const double> values) {
    return values.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : pairwise_sum(values) / static_cast<double>(values.size());
}

inline double median_of(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

inline double bbox_diagonal(std::span<const Vec2> points) {
    double umin = points[0].x(), umax = points[0].x();
    double vmin = points[0].y(), vmax = points[0].y();
    for (const Vec2& p : points) {
        umin = std::min(umin, p.x());
        umax = std::max(umax, p.x());
        vmin = std::min(vmin, p.y());
        vmax = std::max(vmax, p.y());
    }
    return std::max(std::hypot(umax - umin, vmax - vmin), kPckDiagonalFloor);
}

}  // namespace detail

/// Percentage of keypoints whose error stays below threshold_fraction times
/// the diagonal of the axis-aligned bbox of the *predicted* keypoints
/// (floored at 1 px against collapsed predictions).
inline double pck(std::span<const Vec2> pred, std::span<const Vec2> gt, double threshold_fraction) {
    if (pred.empty() || gt.empty()) throw EmptyKeypoints("pck: empty keypoint set");
    if (pred.size() != gt.size()) throw DimensionMismatch("pck: keypoint counts differ");
    if (!(threshold_fraction > 0.0)) throw std::invalid_argument("pck: threshold_fraction must be positive");
    const double threshold = threshold_fraction * detail::bbox_diagonal(pred);
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i].x() - gt[i].x();
        const double dy = pred[i].y() - gt[i].y();
        if (std::sqrt(dx * dx + dy * dy) <= threshold) ++correct;
    }
    return 100.0 * correct / static_cast<double>(pred.size());
}

/// PCK over a prediction set with missing keypoints: the bbox diagonal comes
/// from the detected predictions only, missing keypoints count as incorrect
/// (infinite error), and the denominator stays the full keypoint count.
inline double pck_with_missing(std::span<const std::optional<Vec2>> pred, std::span<const Vec2> gt,
                               double threshold_fraction) {
    if (pred.empty() || gt.empty()) throw EmptyKeypoints("pck_with_missing: empty keypoint set");
    if (pred.size() != gt.size()) throw DimensionMismatch("pck_with_missing: keypoint counts differ");
    std::vector<Vec2> detected;
    for (const auto& p : pred)
        if (p) detected.push_back(*p);
    if (detected.empty()) return 0.0;
    const double threshold = threshold_fraction * detail::bbox_diagonal(detected);
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!pred[i]) continue;
        if ((*pred[i] - gt[i]).norm() <= threshold) ++correct;
    }
    return 100.0 * correct / static_cast<double>(pred.size());
}

struct PoseErrors {
    double e_t = 0.0;  // meters
    double e_q = 0.0;  // radians
    double e_p = 0.0;  // unitless, e_q + e_t / |T_gt|
};

inline PoseErrors pose_errors(const Pose& pred, const Pose& gt) {
    const double gt_norm = gt.translation.norm();
    if (gt_norm <= 1e-9)
        throw DegenerateGroundTruthTranslation("pose_errors: ground-truth translation too small for E_P");
    PoseErrors errors;
    errors.e_t = (pred.translation - gt.translation).norm();
    errors.e_q = geodesic_angle(pred.rotation, gt.rotation);
    errors.e_p = errors.e_q + errors.e_t / gt_norm;
    return errors;
}

/// Per-frame evaluation record. Pose metrics are meaningful only when
/// pose_valid; frames whose predictor lost 3 or more keypoints (or whose
/// solver failed) keep their PCK but are excluded from pose aggregates.
struct FrameEvaluation {
    int frame_index = 0;
    std::map<double, double> pck_at;  // threshold percent -> percentage
    double e_t = 0.0;
    double e_q = 0.0;
    double e_p = 0.0;
    bool pose_valid = false;
    double predicted_bbox_diagonal = 0.0;
    double gt_translation_norm = 0.0;

    double pck10() const {
        const auto it = pck_at.find(10.0);
        return it != pck_at.end() ? it->second : std::numeric_limits<double>::quiet_NaN();
    }
};

struct MetricStats {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double median = std::numeric_limits<double>::quiet_NaN();
};

struct SequenceReport {
    std::string sequence_id;
    int frame_count = 0;
    int pose_failures = 0;
    std::map<std::string, MetricStats> metrics;  // pck1, pck5, pck10, e_t, e_q, e_p
    std::vector<double> pck10_per_frame;
};

namespace detail {

inline MetricStats stats_of(const std::vector<double>& values) {
    return {mean_of(values), median_of(values)};
}

}  // namespace detail

inline SequenceReport aggregate(const std::vector<FrameEvaluation>& frames, const std::string& sequence_id) {
    if (frames.empty()) throw EmptyInput("aggregate: no frames");
    SequenceReport report;
    report.sequence_id = sequence_id;
    report.frame_count = static_cast<int>(frames.size());

    std::map<double, std::vector<double>> pck_series;
    std::vector<double> e_t, e_q, e_p, e_t_norm;
    for (const FrameEvaluation& f : frames) {
        for (const auto& [threshold, value] : f.pck_at) pck_series[threshold].push_back(value);
        if (f.pose_valid) {
            e_t.push_back(f.e_t);
            e_q.push_back(f.e_q);
            e_p.push_back(f.e_p);
            if (f.gt_translation_norm > 0.0) e_t_norm.push_back(f.e_t / f.gt_translation_norm);
        } else {
            ++report.pose_failures;
        }
        report.pck10_per_frame.push_back(f.pck10());
    }
    for (const auto& [threshold, values] : pck_series) {
        std::string label = "pck" + std::to_string(static_cast<int>(threshold));
        report.metrics[label] = detail::stats_of(values);
    }
    report.metrics["e_t"] = detail::stats_of(e_t);
    report.metrics["e_t_norm"] = detail::stats_of(e_t_norm);  // E_t / |T|, unit-free companion
    report.metrics["e_q"] = detail::stats_of(e_q);
    report.metrics["e_p"] = detail::stats_of(e_p);
    return report;
}

/// One row of the PCK-filtering analysis: metrics over the frames whose
/// PCK@10 exceeds the threshold. The leading "No filtering" row covers all
/// frames; thresholds with an empty subset report data 0% and NaN metrics.
struct FilterRow {
    std::string label;
    std::optional<double> threshold;  // percent; empty for "No filtering"
    double data_percent = 0.0;
    int retained = 0;
    double mean_pck10 = std::numeric_limits<double>::quiet_NaN();
    double mean_e_t = std::numeric_limits<double>::quiet_NaN();
    double mean_e_q = std::numeric_limits<double>::quiet_NaN();
    double mean_e_p = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<double> default_filter_thresholds() { return {12.5, 25.0, 50.0, 90.0}; }

inline std::vector<FilterRow> filtering_table(const std::vector<FrameEvaluation>& frames,
                                              const std::vector<double>& pck10_thresholds = default_filter_thresholds()) {
    for (double t : pck10_thresholds)
        if (!(t >= 0.0 && t < 100.0)) throw std::invalid_argument("filtering_table: thresholds must be in [0, 100)");

    const auto make_row = [&frames](const std::string& label, std::optional<double> threshold) {
        FilterRow row;
        row.label = label;
        row.threshold = threshold;
        std::vector<double> pck10, e_t, e_q, e_p;
        for (const FrameEvaluation& f : frames) {
            if (threshold && !(f.pck10() > *threshold)) continue;
            ++row.retained;
            pck10.push_back(f.pck10());
            if (f.pose_valid) {
                e_t.push_back(f.e_t);
                e_q.push_back(f.e_q);
                e_p.push_back(f.e_p);
            }
        }
        row.data_percent = frames.empty() ? 0.0 : 100.0 * row.retained / static_cast<double>(frames.size());
        row.mean_pck10 = detail::mean_of(pck10);
        row.mean_e_t = detail::mean_of(e_t);
        row.mean_e_q = detail::mean_of(e_q);
        row.mean_e_p = detail::mean_of(e_p);
        return row;
    };

    std::vector<FilterRow> rows;
    rows.push_back(make_row("No filtering", std::nullopt));
    for (double threshold : pck10_thresholds) {
        std::string label = "PCK>" + [threshold] {
            std::string s = std::to_string(threshold);
            s.erase(s.find_last_not_of('0') + 1);
            if (!s.empty() && s.back() == '.') s.pop_back();
            return s;
        }();
        rows.push_back(make_row(label, threshold));
    }
    return rows;
}

}  // namespace mapose
