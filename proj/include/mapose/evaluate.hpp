#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <optional>
#include <thread>

#include "mapose/dataset.hpp"
#include "mapose/metrics.hpp"
#include "mapose/pnp.hpp"
#include "mapose/predict.hpp"

namespace mapose {

inline constexpr int kReportSchemaVersion = 1;

/// Full experiment description; the JSON echo of this struct inside a
/// report reproduces the run bit-for-bit (timing fields aside).
struct ExperimentConfig {
    std::string dataset;
    std::string predictor = "oracle";  // oracle | flow | import
    OracleNoiseConfig oracle;
    std::string heatmap_dir;  // import predictor: <heatmap_dir>/<seq_id>/FFFFFF.mahm
    int triplet_stride = 7;
    bool all_frames = false;
    MotionEncodingParams codec;
    FlowParams flow;
    RansacParams ransac;
    std::string output = "report.json";
    std::uint64_t master_seed = 0;
    int jobs = 1;

    void validate() const {
        if (dataset.empty()) throw std::invalid_argument("ExperimentConfig: dataset path is empty");
        if (predictor != "oracle" && predictor != "flow" && predictor != "import")
            throw std::invalid_argument("ExperimentConfig: unknown predictor '" + predictor + "'");
        if (predictor == "import" && heatmap_dir.empty())
            throw std::invalid_argument("ExperimentConfig: import predictor needs heatmap_dir");
        if (triplet_stride < 1) throw std::invalid_argument("ExperimentConfig: triplet_stride must be >= 1");
        if (jobs < 1) throw std::invalid_argument("ExperimentConfig: jobs must be >= 1");
        oracle.validate();
        codec.validate();
        flow.validate();
        ransac.validate();
    }
};

inline Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["dataset"] = c.dataset;
    j["predictor"] = c.predictor;
    j["oracle"] = {{"pixel_sigma", c.oracle.pixel_sigma},
                   {"outlier_rate", c.oracle.outlier_rate},
                   {"outlier_magnitude", c.oracle.outlier_magnitude},
                   {"seed", c.oracle.seed}};
    j["heatmap_dir"] = c.heatmap_dir;
    j["triplet_stride"] = c.triplet_stride;
    j["all_frames"] = c.all_frames;
    j["codec"] = {{"sigma_base", c.codec.sigma_base},
                  {"elongation_gain", c.codec.elongation_gain},
                  {"max_elongation", c.codec.max_elongation},
                  {"static_threshold", c.codec.static_threshold},
                  {"heatmap_size", c.codec.heatmap_size},
                  {"image_size", c.codec.image_size}};
    j["flow"] = {{"pyramid_levels", c.flow.pyramid_levels},
                 {"window_radius", c.flow.window_radius},
                 {"max_iterations", c.flow.max_iterations},
                 {"convergence_epsilon", c.flow.convergence_epsilon},
                 {"min_eigen_threshold", c.flow.min_eigen_threshold}};
    j["ransac"] = {{"max_iterations", c.ransac.max_iterations},
                   {"inlier_threshold", c.ransac.inlier_threshold},
                   {"confidence", c.ransac.confidence},
                   {"seed", c.ransac.seed}};
    j["output"] = c.output;
    j["master_seed"] = c.master_seed;
    j["jobs"] = c.jobs;
    return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    c.dataset = j.value("dataset", c.dataset);
    c.predictor = j.value("predictor", c.predictor);
    if (j.contains("oracle")) {
        const Json& o = j["oracle"];
        c.oracle.pixel_sigma = o.value("pixel_sigma", c.oracle.pixel_sigma);
        c.oracle.outlier_rate = o.value("outlier_rate", c.oracle.outlier_rate);
        c.oracle.outlier_magnitude = o.value("outlier_magnitude", c.oracle.outlier_magnitude);
        c.oracle.seed = o.value("seed", c.oracle.seed);
    }
    c.heatmap_dir = j.value("heatmap_dir", c.heatmap_dir);
    c.triplet_stride = j.value("triplet_stride", c.triplet_stride);
    c.all_frames = j.value("all_frames", c.all_frames);
    if (j.contains("codec")) {
        const Json& o = j["codec"];
        c.codec.sigma_base = o.value("sigma_base", c.codec.sigma_base);
        c.codec.elongation_gain = o.value("elongation_gain", c.codec.elongation_gain);
        c.codec.max_elongation = o.value("max_elongation", c.codec.max_elongation);
        c.codec.static_threshold = o.value("static_threshold", c.codec.static_threshold);
        c.codec.heatmap_size = o.value("heatmap_size", c.codec.heatmap_size);
        c.codec.image_size = o.value("image_size", c.codec.image_size);
    }
    if (j.contains("flow")) {
        const Json& o = j["flow"];
        c.flow.pyramid_levels = o.value("pyramid_levels", c.flow.pyramid_levels);
        c.flow.window_radius = o.value("window_radius", c.flow.window_radius);
        c.flow.max_iterations = o.value("max_iterations", c.flow.max_iterations);
        c.flow.convergence_epsilon = o.value("convergence_epsilon", c.flow.convergence_epsilon);
        c.flow.min_eigen_threshold = o.value("min_eigen_threshold", c.flow.min_eigen_threshold);
    }
    if (j.contains("ransac")) {
        const Json& o = j["ransac"];
        c.ransac.max_iterations = o.value("max_iterations", c.ransac.max_iterations);
        c.ransac.inlier_threshold = o.value("inlier_threshold", c.ransac.inlier_threshold);
        c.ransac.confidence = o.value("confidence", c.ransac.confidence);
        c.ransac.seed = o.value("seed", c.ransac.seed);
    }
    c.output = j.value("output", c.output);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.jobs = j.value("jobs", c.jobs);
    return c;
}

/// Center-frame triplet sampling: every t with both (t - stride) and
/// (t + stride) in range; count = max(0, length - 2 * stride).
inline std::vector<std::array<int, 3>> sample_triplets(int length, int stride) {
    if (stride < 1) throw std::invalid_argument("sample_triplets: stride must be >= 1");
    std::vector<std::array<int, 3>> triplets;
    for (int t = stride; t + stride < length; ++t) triplets.push_back({t - stride, t, t + stride});
    return triplets;
}

struct SequenceEvaluation {
    SequenceReport report;
    std::vector<FrameEvaluation> frames;
};

struct RunReport {
    Json config;
    std::vector<SequenceEvaluation> sequences;
    std::vector<FrameEvaluation> pooled_frames;
    std::optional<SequenceReport> global;  // empty when no frames were evaluated
    std::vector<FilterRow> filtering;
    std::vector<std::pair<std::string, std::string>> sequence_errors;
    double total_seconds = 0.0;
    std::vector<std::pair<std::string, double>> sequence_seconds;
};

namespace detail {

inline FrameEvaluation evaluate_frame(const FrameRecord& rec, const KeypointPrediction& prediction,
                                      const CameraIntrinsics& cam, const SpacecraftModel& model,
                                      const RansacParams& ransac) {
    FrameEvaluation eval;
    eval.frame_index = rec.frame_index;
    eval.gt_translation_norm = rec.pose.translation.norm();

    std::array<std::optional<Vec2>, kKeypointCount> positions;
    std::vector<Vec2> detected;
    int missing = 0;
    for (int k = 0; k < kKeypointCount; ++k) {
        if (prediction[static_cast<size_t>(k)]) {
            positions[static_cast<size_t>(k)] = prediction[static_cast<size_t>(k)]->position;
            detected.push_back(prediction[static_cast<size_t>(k)]->position);
        } else {
            ++missing;
        }
    }
    for (double threshold : {1.0, 5.0, 10.0})
        eval.pck_at[threshold] = pck_with_missing(positions, rec.keypoints_2d, threshold / 100.0);
    eval.predicted_bbox_diagonal = detected.empty() ? 0.0 : bbox_diagonal(detected);

    if (missing <= 2) {  // frames missing 3+ keypoints are scored but pose-failed
        std::vector<Correspondence> corrs;
        for (int k = 0; k < kKeypointCount; ++k)
            if (positions[static_cast<size_t>(k)])
                corrs.push_back({model.keypoints[static_cast<size_t>(k)].position,
                                 *positions[static_cast<size_t>(k)], 1.0});
        try {
            const PnpSolution sol = solve_ransac(corrs, cam, ransac);
            const PoseErrors err = pose_errors(sol.pose, rec.pose);
            eval.e_t = err.e_t;
            eval.e_q = err.e_q;
            eval.e_p = err.e_p;
            eval.pose_valid = true;
        } catch (const Error&) {
            eval.pose_valid = false;
        }
    }
    return eval;
}

inline SequenceEvaluation evaluate_sequence(const SequenceDataset& dataset, size_t s,
                                            const ExperimentConfig& config) {
    const SequenceData& seq = dataset.sequences[s];
    const int length = static_cast<int>(seq.frames.size());

    std::vector<int> eval_frames;
    if (config.all_frames) {
        for (int t = 0; t < length; ++t) eval_frames.push_back(t);
    } else {
        for (const auto& triplet : sample_triplets(length, config.triplet_stride))
            eval_frames.push_back(triplet[1]);
    }

    SequenceEvaluation result;
    result.report.sequence_id = seq.id;
    if (eval_frames.empty()) return result;

    OracleNoiseConfig oracle = config.oracle;
    oracle.seed = config.oracle.seed ^ config.master_seed;

    std::vector<KeypointPrediction> track;
    if (config.predictor == "flow") {
        track = flow_propagate_track(
            seq.frames, [&](int t) { return read_pgm(seq.image_paths.at(static_cast<size_t>(t))); },
            config.flow, oracle, static_cast<int>(s));
    }

    for (int t : eval_frames) {
        const FrameRecord& rec = seq.frames[static_cast<size_t>(t)];
        KeypointPrediction prediction;
        if (config.predictor == "oracle") {
            prediction = oracle_predict(rec, oracle, static_cast<int>(s));
        } else if (config.predictor == "flow") {
            prediction = track[static_cast<size_t>(t)];
        } else {
            const fs::path file =
                fs::path(config.heatmap_dir) / seq.id / detail::frame_file_name(rec.frame_index);
            prediction = import_heatmaps_predict(fs::path(file).replace_extension(".mahm"), config.codec);
        }
        RansacParams ransac = config.ransac;
        ransac.seed = derive_seed(config.ransac.seed ^ config.master_seed, s, rec.frame_index);
        result.frames.push_back(evaluate_frame(rec, prediction, dataset.camera, dataset.model, ransac));
    }
    result.report = aggregate(result.frames, seq.id);
    return result;
}

inline const char* format_double(char* buf, size_t n, double v) {
    std::snprintf(buf, n, "%.10g", v);
    return buf;
}

}  // namespace detail

/// Evaluates every sequence of the dataset with the configured predictor,
/// solves poses through RANSAC PnP, and aggregates the keypoint and pose
/// metrics plus the PCK-filtering table. Sequences run in parallel up to
/// `jobs`; results merge in sequence order, so reports do not depend on
/// scheduling.
inline RunReport run_evaluation(const ExperimentConfig& config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const SequenceDataset dataset = load_dataset(config.dataset);

    RunReport report;
    report.config = config_to_json(config);

    const size_t count = dataset.sequences.size();
    std::vector<std::optional<SequenceEvaluation>> results(count);
    std::vector<std::string> errors(count);
    std::vector<double> seconds(count, 0.0);

    std::atomic<size_t> next{0};
    const auto worker = [&]() {
        while (true) {
            const size_t s = next.fetch_add(1);
            if (s >= count) break;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                results[s] = detail::evaluate_sequence(dataset, s, config);
            } catch (const std::exception& e) {
                errors[s] = e.what();
            }
            seconds[s] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const int thread_count = std::max(1, std::min<int>(config.jobs, static_cast<int>(count)));
    if (thread_count == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (size_t s = 0; s < count; ++s) {
        const std::string id = dataset.sequences[s].id;
        report.sequence_seconds.emplace_back(id, seconds[s]);
        if (!errors[s].empty()) {
            report.sequence_errors.emplace_back(id, errors[s]);
            continue;
        }
        report.pooled_frames.insert(report.pooled_frames.end(), results[s]->frames.begin(),
                                    results[s]->frames.end());
        report.sequences.push_back(std::move(*results[s]));
    }
    if (!report.pooled_frames.empty()) {
        report.global = aggregate(report.pooled_frames, "global");
        report.filtering = filtering_table(report.pooled_frames);
    }
    report.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

namespace detail {

inline Json stats_to_json(const std::map<std::string, MetricStats>& metrics) {
    Json j = Json::object();
    for (const auto& [name, stats] : metrics) j[name] = {{"mean", stats.mean}, {"median", stats.median}};
    return j;
}

inline Json frame_to_report_json(const FrameEvaluation& f) {
    Json j;
    j["frame_index"] = f.frame_index;
    j["pck1"] = f.pck_at.at(1.0);
    j["pck5"] = f.pck_at.at(5.0);
    j["pck10"] = f.pck_at.at(10.0);
    j["pose_valid"] = f.pose_valid;
    if (f.pose_valid) {
        j["e_t"] = f.e_t;
        j["e_q"] = f.e_q;
        j["e_p"] = f.e_p;
    } else {
        j["e_t"] = nullptr;
        j["e_q"] = nullptr;
        j["e_p"] = nullptr;
    }
    j["predicted_bbox_diagonal"] = f.predicted_bbox_diagonal;
    j["gt_translation_norm"] = f.gt_translation_norm;
    return j;
}

inline Json filter_row_to_json(const FilterRow& row) {
    Json j;
    j["label"] = row.label;
    if (row.threshold)
        j["threshold"] = *row.threshold;
    else
        j["threshold"] = nullptr;
    j["data_percent"] = row.data_percent;
    j["retained"] = row.retained;
    j["mean_pck10"] = row.mean_pck10;
    j["mean_e_t"] = row.mean_e_t;
    j["mean_e_q"] = row.mean_e_q;
    j["mean_e_p"] = row.mean_e_p;
    return j;
}

}  // namespace detail

inline Json report_to_json(const RunReport& report) {
    Json j;
    j["schema_version"] = kReportSchemaVersion;
    j["config"] = report.config;
    Json sequences = Json::array();
    for (const SequenceEvaluation& seq : report.sequences) {
        Json sj;
        sj["sequence_id"] = seq.report.sequence_id;
        sj["frame_count"] = seq.report.frame_count;
        sj["pose_failures"] = seq.report.pose_failures;
        sj["metrics"] = detail::stats_to_json(seq.report.metrics);
        sj["pck10_per_frame"] = seq.report.pck10_per_frame;
        Json frames = Json::array();
        for (const FrameEvaluation& f : seq.frames) frames.push_back(detail::frame_to_report_json(f));
        sj["frames"] = frames;
        sequences.push_back(sj);
    }
    j["sequences"] = sequences;
    if (report.global) {
        j["global"] = {{"frame_count", report.global->frame_count},
                       {"pose_failures", report.global->pose_failures},
                       {"metrics", detail::stats_to_json(report.global->metrics)}};
    } else {
        j["global"] = nullptr;
    }
    Json filtering = Json::array();
    for (const FilterRow& row : report.filtering) filtering.push_back(detail::filter_row_to_json(row));
    j["filtering_table"] = filtering;
    Json errors = Json::array();
    for (const auto& [id, message] : report.sequence_errors)
        errors.push_back({{"sequence_id", id}, {"message", message}});
    j["failures"] = {{"sequence_errors", errors}};
    Json timings;
    timings["total_seconds"] = report.total_seconds;
    Json per_seq = Json::object();
    for (const auto& [id, secs] : report.sequence_seconds) per_seq[id] = secs;
    timings["sequences"] = per_seq;
    j["timings"] = timings;
    return j;
}

// --- CSV rendering (operates on the report JSON so the `report` subcommand
// can re-render from a file) ---------------------------------------------

namespace detail {

inline std::string csv_number(const Json& v, double scale = 1.0) {
    if (v.is_null()) return "";
    const double d = v.get<double>();
    if (std::isnan(d)) return "";
    char buf[40];
    format_double(buf, sizeof(buf), d * scale);
    return buf;
}

}  // namespace detail

/// One row per (sequence, metric) plus the pooled global rows. Rotation
/// columns print degrees; E_P keeps its radians-based definition.
inline std::string render_metrics_csv(const Json& report) {
    constexpr double kRadToDeg = 180.0 / M_PI;
    std::string csv = "sequence_id,metric,mean,median\n";
    const auto emit = [&](const std::string& id, const Json& metrics) {
        for (const auto& [name, stats] : metrics.items()) {
            const bool rotation = name == "e_q";
            const double scale = rotation ? kRadToDeg : 1.0;
            csv += id + "," + (rotation ? "e_q_deg" : name) + "," + detail::csv_number(stats["mean"], scale) +
                   "," + detail::csv_number(stats["median"], scale) + "\n";
        }
    };
    for (const Json& seq : report["sequences"]) emit(seq["sequence_id"].get<std::string>(), seq["metrics"]);
    if (!report["global"].is_null()) emit("global", report["global"]["metrics"]);
    return csv;
}

inline std::string render_filtering_csv(const Json& filtering_rows) {
    constexpr double kRadToDeg = 180.0 / M_PI;
    std::string csv = "label,threshold,data_percent,retained,mean_pck10,mean_e_t,mean_e_q_deg,mean_e_p\n";
    for (const Json& row : filtering_rows) {
        csv += row["label"].get<std::string>() + "," + detail::csv_number(row["threshold"]) + "," +
               detail::csv_number(row["data_percent"]) + "," + std::to_string(row["retained"].get<int>()) +
               "," + detail::csv_number(row["mean_pck10"]) + "," + detail::csv_number(row["mean_e_t"]) + "," +
               detail::csv_number(row["mean_e_q"], kRadToDeg) + "," + detail::csv_number(row["mean_e_p"]) +
               "\n";
    }
    return csv;
}

/// Per-sequence mean PCK@10, the per-sequence distribution export.
inline std::string render_pck_by_sequence_csv(const Json& report) {
    std::string csv = "sequence_id,mean_pck10\n";
    for (const Json& seq : report["sequences"])
        csv += seq["sequence_id"].get<std::string>() + "," +
               detail::csv_number(seq["metrics"]["pck10"]["mean"]) + "\n";
    return csv;
}

/// Rebuilds per-frame evaluations from a report and recomputes the
/// filtering table for the given thresholds.
inline Json recompute_filtering(const Json& report, const std::vector<double>& thresholds) {
    std::vector<FrameEvaluation> frames;
    for (const Json& seq : report["sequences"]) {
        for (const Json& fj : seq["frames"]) {
            FrameEvaluation f;
            f.frame_index = fj["frame_index"].get<int>();
            f.pck_at[1.0] = fj["pck1"].get<double>();
            f.pck_at[5.0] = fj["pck5"].get<double>();
            f.pck_at[10.0] = fj["pck10"].get<double>();
            f.pose_valid = fj["pose_valid"].get<bool>();
            if (f.pose_valid) {
                f.e_t = fj["e_t"].get<double>();
                f.e_q = fj["e_q"].get<double>();
                f.e_p = fj["e_p"].get<double>();
            }
            f.gt_translation_norm = fj["gt_translation_norm"].get<double>();
            frames.push_back(f);
        }
    }
    Json rows = Json::array();
    for (const FilterRow& row : filtering_table(frames, thresholds))
        rows.push_back(detail::filter_row_to_json(row));
    return rows;
}

/// Writes the report JSON plus the three CSV exports next to it
/// (<stem>_metrics.csv, <stem>_filtering.csv, <stem>_pck_by_sequence.csv).
inline void write_report_outputs(const RunReport& report, const fs::path& json_path) {
    const Json j = report_to_json(report);
    {
        std::ofstream out(json_path);
        if (!out) throw IoError("write_report_outputs: cannot write " + json_path.string());
        out << j.dump(2) << "\n";
    }
    const auto write_text = [](const fs::path& path, const std::string& text) {
        std::ofstream out(path);
        if (!out) throw IoError("write_report_outputs: cannot write " + path.string());
        out << text;
    };
    fs::path stem = json_path;
    stem.replace_extension();
    write_text(stem.string() + "_metrics.csv", render_metrics_csv(j));
    write_text(stem.string() + "_filtering.csv", render_filtering_csv(j["filtering_table"]));
    write_text(stem.string() + "_pck_by_sequence.csv", render_pck_by_sequence_csv(j));
}

}  // namespace mapose
