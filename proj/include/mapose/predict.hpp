#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "mapose/flow.hpp"
#include "mapose/heatmap.hpp"
#include "mapose/simulate.hpp"

namespace mapose {

/// One keypoint set prediction: position in image pixels plus confidence,
/// or nullopt when the keypoint was not detected.
using KeypointPrediction = std::array<std::optional<Detection>, kKeypointCount>;

struct OracleNoiseConfig {
    double pixel_sigma = 0.0;
    double outlier_rate = 0.0;       // per-keypoint probability
    double outlier_magnitude = 50.0;  // pixels
    std::uint64_t seed = 0;

    void validate() const {
        if (pixel_sigma < 0.0) throw std::invalid_argument("OracleNoiseConfig: negative pixel_sigma");
        if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0))
            throw std::invalid_argument("OracleNoiseConfig: outlier_rate must be in [0,1]");
    }
};

/// Ground truth plus isotropic Gaussian noise; with probability outlier_rate
/// a keypoint is additionally displaced by outlier_magnitude in a seeded
/// uniform direction. Each (seed, sequence, frame, keypoint) tuple derives
/// its own stream, so results do not depend on evaluation order.
inline KeypointPrediction oracle_predict(const FrameRecord& gt, const OracleNoiseConfig& config,
                                         int sequence_index) {
    config.validate();
    KeypointPrediction prediction;
    for (int k = 0; k < kKeypointCount; ++k) {
        RandomStream rng(derive_seed(config.seed, sequence_index, gt.frame_index, k));
        Vec2 p = gt.keypoints_2d[static_cast<size_t>(k)];
        p.x() += rng.normal(0.0, config.pixel_sigma);
        p.y() += rng.normal(0.0, config.pixel_sigma);
        if (rng.uniform() < config.outlier_rate) {
            const double angle = rng.uniform(0.0, 2.0 * M_PI);
            p += config.outlier_magnitude * Vec2{std::cos(angle), std::sin(angle)};
        }
        prediction[static_cast<size_t>(k)] = Detection{p, 1.0};
    }
    return prediction;
}

/// Temporal tracking baseline: each keypoint estimate is carried from frame
/// t-1 to t by the flow displacement sampled at the previous estimate.
/// Frame 0 initializes from the noisy oracle. A lost track marks the
/// keypoint NotDetected for that frame and re-seeds it from the oracle at
/// the next frame, keeping all channels alive for PnP.
inline std::vector<KeypointPrediction> flow_propagate_track(
    const std::vector<FrameRecord>& records, const std::function<ImageF(int)>& load_image,
    const FlowParams& flow_params, const OracleNoiseConfig& oracle_config, int sequence_index) {
    std::vector<KeypointPrediction> track;
    if (records.empty()) return track;
    track.reserve(records.size());
    track.push_back(oracle_predict(records.front(), oracle_config, sequence_index));

    ImageF prev_image = load_image(records.front().frame_index);
    for (size_t t = 1; t < records.size(); ++t) {
        ImageF cur_image = load_image(records[t].frame_index);
        KeypointPrediction current;
        const KeypointPrediction& previous = track.back();
        for (int k = 0; k < kKeypointCount; ++k) {
            if (!previous[static_cast<size_t>(k)]) {
                // re-seed a lost channel from the oracle
                const KeypointPrediction reseeded = oracle_predict(records[t], oracle_config, sequence_index);
                current[static_cast<size_t>(k)] = reseeded[static_cast<size_t>(k)];
                continue;
            }
            const Vec2 at = previous[static_cast<size_t>(k)]->position;
            const FlowResult flow = sample_displacement(prev_image, cur_image, at, flow_params);
            if (flow.status == TrackStatus::tracked)
                current[static_cast<size_t>(k)] = Detection{at + flow.displacement, 1.0};
            else
                current[static_cast<size_t>(k)] = std::nullopt;
        }
        track.push_back(current);
        prev_image = std::move(cur_image);
    }
    return track;
}

/// Decodes an externally produced MAHM heatmap stack into image-space
/// keypoints through the codec scaling. Zero channels map to NotDetected.
inline KeypointPrediction import_heatmaps_predict(const std::filesystem::path& heatmap_file,
                                                  const MotionEncodingParams& params) {
    params.validate();
    const std::vector<Heatmap> maps = read_heatmap_stack(heatmap_file);
    if (static_cast<int>(maps.size()) != kKeypointCount)
        throw ChannelCountMismatch("import_heatmaps_predict: expected 8 channels, got " +
                                   std::to_string(maps.size()) + " in " + heatmap_file.string());
    KeypointPrediction prediction;
    for (int k = 0; k < kKeypointCount; ++k) {
        const auto detection = decode(maps[static_cast<size_t>(k)]);
        if (detection)
            prediction[static_cast<size_t>(k)] =
                Detection{to_image_coords(detection->position, params), detection->confidence};
        else
            prediction[static_cast<size_t>(k)] = std::nullopt;
    }
    return prediction;
}

}  // namespace mapose
