#include <catch2/catch.hpp>

#include <iostream>

#include "mapose/predict.hpp"

using namespace mapose;

namespace {

ImageF translate(const ImageF& img, int dx, int dy) {
    ImageF out(img.width, img.height, 0.0f);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const int sx = x - dx, sy = y - dy;
            if (sx >= 0 && sy >= 0 && sx < img.width && sy < img.height) out.at(x, y) = img.at(sx, sy);
        }
    return out;
}

FrameRecord base_record(std::uint64_t seed) {
    const SpacecraftModel model = SpacecraftModel::box();
    const CameraIntrinsics cam = default_camera();
    TrajectoryConfig cfg;
    cfg.seed = seed;
    cfg.frustum_margin = 45.0;
    return project_sequence(generate_trajectory(model, cam, cfg), model, cam).front();
}

}  // namespace

TEST_CASE("oracle_predict") {
    const FrameRecord rec = base_record(301);
    SECTION("noise-free oracle returns ground truth exactly") {
        OracleNoiseConfig cfg;  // sigma 0, rate 0
        const KeypointPrediction pred = oracle_predict(rec, cfg, 0);
        for (int k = 0; k < 8; ++k) {
            REQUIRE(pred[k]);
            REQUIRE(pred[k]->position == rec.keypoints_2d[k]);
        }
    }
    SECTION("same seed twice is identical") {
        OracleNoiseConfig cfg;
        cfg.pixel_sigma = 2.0;
        cfg.outlier_rate = 0.2;
        cfg.seed = 99;
        const KeypointPrediction a = oracle_predict(rec, cfg, 3);
        const KeypointPrediction b = oracle_predict(rec, cfg, 3);
        for (int k = 0; k < 8; ++k) REQUIRE(a[k]->position == b[k]->position);
        const KeypointPrediction c = oracle_predict(rec, cfg, 4);  // different sequence
        bool any_differ = false;
        for (int k = 0; k < 8; ++k) any_differ = any_differ || a[k]->position != c[k]->position;
        REQUIRE(any_differ);
    }
    SECTION("empirical noise std matches pixel_sigma within 2%") {
        OracleNoiseConfig cfg;
        cfg.pixel_sigma = 1.0;
        cfg.seed = 5;
        double sum = 0.0, sum2 = 0.0;
        int n = 0;
        FrameRecord frame = rec;
        for (int f = 0; f < 6250; ++f) {  // 6250 frames x 8 keypoints x 2 axes = 1e5 samples
            frame.frame_index = f;
            const KeypointPrediction pred = oracle_predict(frame, cfg, 0);
            for (int k = 0; k < 8; ++k) {
                const Vec2 d = pred[k]->position - frame.keypoints_2d[k];
                sum += d.x() + d.y();
                sum2 += d.x() * d.x() + d.y() * d.y();
                n += 2;
            }
        }
        const double mean = sum / n;
        const double stddev = std::sqrt(sum2 / n - mean * mean);
        REQUIRE(stddev == Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("flow_propagate_track on a static sequence stays at the init") {
    const SpacecraftModel model = SpacecraftModel::box();
    const FrameRecord rec = base_record(302);
    RenderConfig rc;
    const ImageF base = render_frame(rec, model, rc);
    std::vector<FrameRecord> records(10, rec);
    for (int t = 0; t < 10; ++t) records[t].frame_index = t;

    FlowParams flow;
    OracleNoiseConfig oracle;  // exact init
    const auto track = flow_propagate_track(records, [&](int) { return base; }, flow, oracle, 0);
    REQUIRE(track.size() == 10);
    for (const KeypointPrediction& pred : track)
        for (int k = 0; k < 8; ++k) {
            REQUIRE(pred[k]);
            REQUIRE((pred[k]->position - rec.keypoints_2d[k]).norm() <= flow.convergence_epsilon);
        }
}

TEST_CASE("flow_propagate_track follows a constant-velocity shift sequence") {
    const SpacecraftModel model = SpacecraftModel::box();
    const FrameRecord rec = base_record(303);
    RenderConfig rc;
    const ImageF base = render_frame(rec, model, rc);

    const int frames = 10;
    std::vector<FrameRecord> records;
    std::vector<ImageF> images;
    for (int t = 0; t < frames; ++t) {
        FrameRecord r = rec;
        r.frame_index = t;
        for (auto& kp : r.keypoints_2d) kp.x() += 3.0 * t;
        records.push_back(r);
        images.push_back(translate(base, 3 * t, 0));
    }

    FlowParams flow;
    OracleNoiseConfig oracle;
    const auto track = flow_propagate_track(records, [&](int t) { return images[t]; }, flow, oracle, 0);
    double final_error = 0.0;
    for (int k = 0; k < 8; ++k) {
        REQUIRE(track.back()[k]);
        final_error = std::max(final_error, (track.back()[k]->position - records.back().keypoints_2d[k]).norm());
    }
    std::cout << "[flow-propagation] accumulated drift over " << frames - 1 << " steps: " << final_error
              << " px\n";
    REQUIRE(final_error <= 0.5 * (frames - 1));  // worst-case per-step budget
    REQUIRE(final_error <= 1.0);                 // measured drift stays far below it
}

TEST_CASE("flow_propagate_track re-seeds lost keypoints from the oracle") {
    const SpacecraftModel model = SpacecraftModel::box();
    const FrameRecord rec = base_record(304);
    RenderConfig rc;
    const ImageF base = render_frame(rec, model, rc);
    const ImageF blank(base.width, base.height, 0.0f);  // texture vanishes: every track is lost

    std::vector<FrameRecord> records(4, rec);
    for (int t = 0; t < 4; ++t) records[t].frame_index = t;
    FlowParams flow;
    OracleNoiseConfig oracle;
    // frame 0 is blank: the frame-0 -> frame-1 template has no texture, so
    // every channel is lost at frame 1 and re-seeded at frame 2
    const auto track = flow_propagate_track(
        records, [&](int t) { return t == 0 ? blank : base; }, flow, oracle, 0);
    for (int k = 0; k < 8; ++k) {
        REQUIRE(track[0][k]);
        REQUIRE_FALSE(track[1][k]);  // structure tensor degenerate on the blank template
        REQUIRE(track[2][k]);        // oracle re-seed
        REQUIRE(track[2][k]->position == rec.keypoints_2d[k]);
        REQUIRE(track[3][k]);        // propagation resumes
    }
}

TEST_CASE("flow tracker error grows with rendering noise") {
    const SpacecraftModel model = SpacecraftModel::box();
    const FrameRecord rec = base_record(305);
    const int frames = 10;

    const auto final_error = [&](double noise_sigma) {
        std::vector<FrameRecord> records;
        std::vector<ImageF> images;
        RenderConfig rc;
        rc.sensor_noise_sigma = noise_sigma;
        rc.seed = 999;
        for (int t = 0; t < frames; ++t) {
            FrameRecord r = rec;
            r.frame_index = t;
            for (auto& kp : r.keypoints_2d) kp.x() += 2.0 * t;
            records.push_back(r);
            images.push_back(render_frame(r, model, rc));
        }
        FlowParams flow;
        OracleNoiseConfig oracle;
        const auto track = flow_propagate_track(records, [&](int t) { return images[t]; }, flow, oracle, 0);
        double sum = 0.0;
        int n = 0;
        for (int k = 0; k < 8; ++k) {
            if (!track.back()[k]) continue;
            sum += (track.back()[k]->position - records.back().keypoints_2d[k]).norm();
            ++n;
        }
        REQUIRE(n > 0);
        return sum / n;
    };

    const double clean = final_error(0.0);
    const double noisy = final_error(0.05);
    std::cout << "[flow-degradation] mean final-frame error: sigma 0.00 -> " << clean
              << " px, sigma 0.05 -> " << noisy << " px\n";
    REQUIRE(noisy >= clean);
}

TEST_CASE("import_heatmaps_predict round trip") {
    MotionEncodingParams params;
    const auto dir = std::filesystem::temp_directory_path() / "mapose_test_import";
    std::filesystem::create_directories(dir);
    const auto file = dir / "000000.mahm";

    RandomStream rng(404);
    std::array<Vec2, 8> gt_image;
    std::vector<Heatmap> maps;
    for (int k = 0; k < 8; ++k) {
        gt_image[k] = {rng.uniform(40.0, 220.0), rng.uniform(40.0, 220.0)};
        maps.push_back(encode_circular(to_heatmap_coords(gt_image[k], params), params));
    }
    write_heatmap_stack(maps, file);

    const KeypointPrediction pred = import_heatmaps_predict(file, params);
    const double scale = static_cast<double>(params.image_size) / params.heatmap_size;
    for (int k = 0; k < 8; ++k) {
        REQUIRE(pred[k]);
        REQUIRE((pred[k]->position - gt_image[k]).norm() <= 0.25 * scale);
    }

    SECTION("zero channels are NotDetected") {
        maps[3] = Heatmap::zeros(params.heatmap_size, params.heatmap_size);
        write_heatmap_stack(maps, file);
        const KeypointPrediction p2 = import_heatmaps_predict(file, params);
        REQUIRE_FALSE(p2[3]);
        REQUIRE(p2[0]);
    }
    SECTION("wrong channel count is rejected") {
        std::vector<Heatmap> many(17, maps[0]);
        write_heatmap_stack(many, file);
        REQUIRE_THROWS_AS(import_heatmaps_predict(file, params), ChannelCountMismatch);
    }
    std::filesystem::remove_all(dir);
}
