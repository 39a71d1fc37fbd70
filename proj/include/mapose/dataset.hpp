#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapose/simulate.hpp"

namespace mapose {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct ExportSummary {
    fs::path root;
    int sequences = 0;
    int image_files = 0;
    int annotation_files = 0;
    int meta_files = 0;
};

namespace detail {

inline std::string sequence_dir_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "seq_%03d", index);
    return buf;
}

inline std::string frame_file_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.pgm", index);
    return buf;
}

inline Json frame_to_json(const FrameRecord& rec) {
    Json j;
    j["frame_index"] = rec.frame_index;
    j["q"] = {rec.pose.rotation.w, rec.pose.rotation.x, rec.pose.rotation.y, rec.pose.rotation.z};
    j["t"] = {rec.pose.translation.x(), rec.pose.translation.y(), rec.pose.translation.z()};
    Json kps = Json::array();
    for (const Vec2& kp : rec.keypoints_2d) kps.push_back({kp.x(), kp.y()});
    j["keypoints_2d"] = kps;
    j["bbox"] = {rec.bbox[0], rec.bbox[1], rec.bbox[2], rec.bbox[3]};
    Json vis = Json::array();
    for (bool v : rec.visibility) vis.push_back(v);
    j["visibility"] = vis;
    return j;
}

}  // namespace detail

/// Writes the dataset layout:
///   root/meta.json
///   root/seq_NNN/frames/FFFFFF.pgm
///   root/seq_NNN/annotations.jsonl
/// Poses and keypoints round-trip exactly through the shortest-round-trip
/// decimal text nlohmann emits.
inline ExportSummary export_dataset(const fs::path& root, const CameraIntrinsics& cam, const SpacecraftModel& model,
                                    const std::vector<std::vector<FrameRecord>>& sequences,
                                    const std::vector<std::vector<ImageF>>& images) {
    if (sequences.size() != images.size())
        throw DimensionMismatch("export_dataset: sequence and image counts differ");
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root)) throw IoError("export_dataset: cannot create " + root.string());

    ExportSummary summary;
    summary.root = root;

    Json meta;
    meta["camera"] = {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
                      {"width", cam.width}, {"height", cam.height}};
    Json kps = Json::array();
    for (const auto& kp : model.keypoints) kps.push_back({kp.position.x(), kp.position.y(), kp.position.z()});
    Json edges = Json::array();
    for (const auto& e : model.edges) edges.push_back({e[0], e[1]});
    meta["model"] = {{"keypoints", kps}, {"edges", edges}};
    meta["units"] = {{"model", "meters"}, {"image", "pixels"}};
    {
        std::ofstream out(root / "meta.json");
        if (!out) throw IoError("export_dataset: cannot write " + (root / "meta.json").string());
        out << meta.dump(2) << "\n";
        if (!out) throw IoError("export_dataset: write failure on " + (root / "meta.json").string());
    }
    summary.meta_files = 1;

    for (size_t s = 0; s < sequences.size(); ++s) {
        if (sequences[s].size() != images[s].size())
            throw DimensionMismatch("export_dataset: frame and image counts differ in sequence " + std::to_string(s));
        const fs::path seq_dir = root / detail::sequence_dir_name(static_cast<int>(s));
        fs::create_directories(seq_dir / "frames", ec);
        if (ec) throw IoError("export_dataset: cannot create " + (seq_dir / "frames").string());

        std::ofstream ann(seq_dir / "annotations.jsonl");
        if (!ann) throw IoError("export_dataset: cannot write " + (seq_dir / "annotations.jsonl").string());
        for (size_t f = 0; f < sequences[s].size(); ++f) {
            const FrameRecord& rec = sequences[s][f];
            ann << detail::frame_to_json(rec).dump() << "\n";
            write_pgm(images[s][f], seq_dir / "frames" / detail::frame_file_name(rec.frame_index));
            ++summary.image_files;
        }
        if (!ann) throw IoError("export_dataset: write failure on " + (seq_dir / "annotations.jsonl").string());
        ++summary.annotation_files;
        ++summary.sequences;
    }
    return summary;
}

struct SequenceData {
    std::string id;
    std::vector<FrameRecord> frames;
    std::vector<fs::path> image_paths;
};

struct SequenceDataset {
    fs::path root;
    CameraIntrinsics camera;
    SpacecraftModel model;
    std::vector<SequenceData> sequences;
};

namespace detail {

inline void require_field(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw SchemaViolation(where + ": missing field '" + key + "'");
}

inline double number_field(const Json& j, const char* key, const std::string& where) {
    require_field(j, key, where);
    if (!j[key].is_number()) throw SchemaViolation(where + ": field '" + key + "' is not a number");
    return j[key].get<double>();
}

inline FrameRecord frame_from_json(const Json& j, const std::string& where) {
    for (const char* key : {"frame_index", "q", "t", "keypoints_2d", "bbox", "visibility"})
        require_field(j, key, where);
    if (!j["frame_index"].is_number_integer()) throw SchemaViolation(where + ": 'frame_index' is not an integer");
    const auto& q = j["q"];
    const auto& t = j["t"];
    const auto& kps = j["keypoints_2d"];
    const auto& bbox = j["bbox"];
    const auto& vis = j["visibility"];
    if (!q.is_array() || q.size() != 4) throw SchemaViolation(where + ": 'q' must be [w,x,y,z]");
    if (!t.is_array() || t.size() != 3) throw SchemaViolation(where + ": 't' must be [x,y,z]");
    if (!kps.is_array() || kps.size() != kKeypointCount)
        throw SchemaViolation(where + ": 'keypoints_2d' must hold 8 points");
    if (!bbox.is_array() || bbox.size() != 4) throw SchemaViolation(where + ": 'bbox' must hold 4 values");
    if (!vis.is_array() || vis.size() != kKeypointCount)
        throw SchemaViolation(where + ": 'visibility' must hold 8 booleans");

    FrameRecord rec;
    rec.frame_index = j["frame_index"].get<int>();
    try {
        // dataset quaternions are Hamilton convention, scalar-first
        rec.pose.rotation = Quaternion{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
    } catch (const std::exception& e) {
        throw SchemaViolation(where + ": bad quaternion: " + e.what());
    }
    rec.pose.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    for (int k = 0; k < kKeypointCount; ++k) {
        const auto& kp = kps[static_cast<size_t>(k)];
        if (!kp.is_array() || kp.size() != 2) throw SchemaViolation(where + ": keypoint entries must be [u,v]");
        rec.keypoints_2d[static_cast<size_t>(k)] = {kp[0].get<double>(), kp[1].get<double>()};
        if (!vis[static_cast<size_t>(k)].is_boolean())
            throw SchemaViolation(where + ": 'visibility' entries must be booleans");
        rec.visibility[static_cast<size_t>(k)] = vis[static_cast<size_t>(k)].get<bool>();
    }
    for (int i = 0; i < 4; ++i) rec.bbox[static_cast<size_t>(i)] = bbox[static_cast<size_t>(i)].get<double>();
    return rec;
}

inline void check_bbox_invariant(const FrameRecord& rec, const CameraIntrinsics& cam, const std::string& where) {
    double umin = 1e300, vmin = 1e300, umax = -1e300, vmax = -1e300;
    for (const Vec2& px : rec.keypoints_2d) {
        umin = std::min(umin, px.x());
        vmin = std::min(vmin, px.y());
        umax = std::max(umax, px.x());
        vmax = std::max(vmax, px.y());
    }
    const double expected[4] = {std::clamp(umin - kBboxPadding, 0.0, static_cast<double>(cam.width)),
                                std::clamp(vmin - kBboxPadding, 0.0, static_cast<double>(cam.height)),
                                std::clamp(umax + kBboxPadding, 0.0, static_cast<double>(cam.width)),
                                std::clamp(vmax + kBboxPadding, 0.0, static_cast<double>(cam.height))};
    for (int i = 0; i < 4; ++i)
        if (std::abs(expected[i] - rec.bbox[static_cast<size_t>(i)]) > 1e-6)
            throw BboxInvariantViolation(where + ": bbox does not match the padded keypoint hull");
}

}  // namespace detail

/// Loads and validates a dataset produced by export_dataset: schema checks
/// carry file/line context, and every record's bbox invariant is recomputed.
/// Images stay on disk; use load_frame_image to fetch pixels.
inline SequenceDataset load_dataset(const fs::path& root) {
    if (!fs::exists(root / "meta.json")) throw MissingMeta("load_dataset: no meta.json under " + root.string());
    Json meta;
    try {
        std::ifstream in(root / "meta.json");
        meta = Json::parse(in);
    } catch (const Json::exception& e) {
        throw SchemaViolation("meta.json: parse error: " + std::string(e.what()));
    }

    SequenceDataset dataset;
    dataset.root = root;
    detail::require_field(meta, "camera", "meta.json");
    detail::require_field(meta, "model", "meta.json");
    const Json& cam_json = meta["camera"];
    dataset.camera.fx = detail::number_field(cam_json, "fx", "meta.json camera");
    dataset.camera.fy = detail::number_field(cam_json, "fy", "meta.json camera");
    dataset.camera.cx = detail::number_field(cam_json, "cx", "meta.json camera");
    dataset.camera.cy = detail::number_field(cam_json, "cy", "meta.json camera");
    dataset.camera.width = static_cast<int>(detail::number_field(cam_json, "width", "meta.json camera"));
    dataset.camera.height = static_cast<int>(detail::number_field(cam_json, "height", "meta.json camera"));
    try {
        dataset.camera.validate();
    } catch (const std::exception& e) {
        throw SchemaViolation("meta.json camera: " + std::string(e.what()));
    }

    const Json& model_json = meta["model"];
    detail::require_field(model_json, "keypoints", "meta.json model");
    detail::require_field(model_json, "edges", "meta.json model");
    if (!model_json["keypoints"].is_array() || model_json["keypoints"].size() != kKeypointCount)
        throw SchemaViolation("meta.json model: 'keypoints' must hold 8 points");
    int index = 0;
    for (const auto& kp : model_json["keypoints"]) {
        if (!kp.is_array() || kp.size() != 3) throw SchemaViolation("meta.json model: keypoints must be [x,y,z]");
        dataset.model.keypoints.push_back(
            {"kp" + std::to_string(index++), {kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>()}});
    }
    for (const auto& e : model_json["edges"]) {
        if (!e.is_array() || e.size() != 2) throw SchemaViolation("meta.json model: edges must be [i,j]");
        dataset.model.edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    try {
        dataset.model.validate();
    } catch (const std::exception& e) {
        throw SchemaViolation("meta.json model: " + std::string(e.what()));
    }

    std::vector<fs::path> seq_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && entry.path().filename().string().rfind("seq_", 0) == 0)
            seq_dirs.push_back(entry.path());
    std::sort(seq_dirs.begin(), seq_dirs.end());

    for (const fs::path& seq_dir : seq_dirs) {
        SequenceData seq;
        seq.id = seq_dir.filename().string();
        const fs::path ann_path = seq_dir / "annotations.jsonl";
        std::ifstream ann(ann_path);
        if (!ann) throw IoError("load_dataset: cannot open " + ann_path.string());
        std::string line;
        int line_number = 0;
        while (std::getline(ann, line)) {
            ++line_number;
            if (line.empty()) continue;
            const std::string where = seq.id + "/annotations.jsonl:" + std::to_string(line_number);
            Json j;
            try {
                j = Json::parse(line);
            } catch (const Json::exception& e) {
                throw SchemaViolation(where + ": parse error: " + std::string(e.what()));
            }
            FrameRecord rec = detail::frame_from_json(j, where);
            detail::check_bbox_invariant(rec, dataset.camera, where);
            const fs::path image = seq_dir / "frames" / detail::frame_file_name(rec.frame_index);
            if (!fs::exists(image)) throw IoError("load_dataset: missing image " + image.string());
            seq.frames.push_back(std::move(rec));
            seq.image_paths.push_back(image);
        }
        dataset.sequences.push_back(std::move(seq));
    }
    return dataset;
}

inline ImageF load_frame_image(const SequenceDataset& dataset, size_t sequence, size_t frame) {
    return read_pgm(dataset.sequences.at(sequence).image_paths.at(frame));
}

/// Generates a complete synthetic dataset on disk: per-sequence trajectory
/// and render streams derive independently from (master_seed, sequence), so
/// output is identical however sequences are scheduled.
inline ExportSummary generate_synthetic_dataset(const fs::path& root, int sequence_count, int frame_count,
                                                std::uint64_t master_seed, double noise_sigma = 0.0,
                                                int star_count = 0) {
    const SpacecraftModel model = SpacecraftModel::box();
    const CameraIntrinsics cam = default_camera();
    std::vector<std::vector<FrameRecord>> sequences;
    std::vector<std::vector<ImageF>> images;
    for (int s = 0; s < sequence_count; ++s) {
        TrajectoryConfig tcfg;
        tcfg.frame_count = frame_count;
        tcfg.seed = derive_seed(master_seed, s, 0);
        const auto records = project_sequence(generate_trajectory(model, cam, tcfg), model, cam);
        RenderConfig rc;
        rc.seed = derive_seed(master_seed, s, 1);
        rc.sensor_noise_sigma = noise_sigma;
        rc.background_star_count = star_count;
        std::vector<ImageF> frames;
        frames.reserve(records.size());
        for (const FrameRecord& rec : records) frames.push_back(render_frame(rec, model, rc));
        sequences.push_back(records);
        images.push_back(std::move(frames));
    }
    return export_dataset(root, cam, model, sequences, images);
}

}  // namespace mapose
