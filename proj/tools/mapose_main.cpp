#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mapose/mapose.hpp"

namespace {

using mapose::Json;

int run_generate(const std::string& out_dir, int sequences, int frames, std::uint64_t seed, double noise,
                 int stars) {
    const auto summary = mapose::generate_synthetic_dataset(out_dir, sequences, frames, seed, noise, stars);
    std::cout << "wrote " << summary.sequences << " sequences, " << summary.image_files << " images, "
              << summary.annotation_files << " annotation files under " << summary.root.string() << "\n";
    return 0;
}

int run_report(const std::string& in_path, const std::string& format, const std::string& out_dir,
               const std::vector<double>& thresholds) {
    std::ifstream in(in_path);
    if (!in) throw mapose::IoError("report: cannot open " + in_path);
    Json report = Json::parse(in);
    if (!thresholds.empty()) report["filtering_table"] = mapose::recompute_filtering(report, thresholds);

    if (format == "json") {
        std::cout << report.dump(2) << "\n";
        return 0;
    }
    const auto stem = std::filesystem::path(in_path).stem().string();
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const auto write_text = [&](const std::string& name, const std::string& text) {
        const auto path = dir / name;
        std::ofstream out(path);
        if (!out) throw mapose::IoError("report: cannot write " + path.string());
        out << text;
        std::cout << "wrote " << path.string() << "\n";
    };
    write_text(stem + "_metrics.csv", mapose::render_metrics_csv(report));
    write_text(stem + "_filtering.csv", mapose::render_filtering_csv(report["filtering_table"]));
    write_text(stem + "_pck_by_sequence.csv", mapose::render_pck_by_sequence_csv(report));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motion-aware monocular spacecraft pose estimation pipeline"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic tumbling-spacecraft dataset");
    std::string gen_out;
    int gen_sequences = 3;
    int gen_frames = 30;
    std::uint64_t gen_seed = 0;
    double gen_noise = 0.0;
    int gen_stars = 0;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--sequences", gen_sequences, "Number of sequences")->check(CLI::PositiveNumber);
    gen->add_option("--frames", gen_frames, "Frames per sequence (>= 15)")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Master seed");
    gen->add_option("--noise", gen_noise, "Sensor noise sigma in [0,1]")->check(CLI::NonNegativeNumber);
    gen->add_option("--stars", gen_stars, "Background star count")->check(CLI::NonNegativeNumber);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Run a predictor over a dataset and score it");
    std::string ev_dataset, ev_predictor, ev_config, ev_out, ev_heatmap_dir;
    int ev_jobs = 0, ev_stride = 0;
    bool ev_all_frames = false;
    std::uint64_t ev_master_seed = 0;
    double ev_oracle_sigma = -1.0, ev_oracle_outlier_rate = -1.0;
    std::uint64_t ev_oracle_seed = 0;
    ev->add_option("--dataset", ev_dataset, "Dataset directory");
    ev->add_option("--predictor", ev_predictor, "Keypoint source")
        ->check(CLI::IsMember({"oracle", "flow", "import"}));
    ev->add_option("--config", ev_config, "JSON config file (flags override its fields)");
    ev->add_option("--out", ev_out, "Report JSON path (CSV exports land next to it)");
    ev->add_option("--jobs", ev_jobs, "Parallel sequence evaluations")->check(CLI::PositiveNumber);
    ev->add_option("--stride", ev_stride, "Triplet stride in frames")->check(CLI::PositiveNumber);
    ev->add_flag("--all-frames", ev_all_frames, "Evaluate every frame instead of triplet centers");
    auto* master_seed_opt = ev->add_option("--master-seed", ev_master_seed, "Master seed");
    ev->add_option("--heatmap-dir", ev_heatmap_dir, "Heatmap stacks for the import predictor");
    ev->add_option("--oracle-sigma", ev_oracle_sigma, "Oracle pixel noise sigma");
    ev->add_option("--oracle-outlier-rate", ev_oracle_outlier_rate, "Oracle outlier probability");
    auto* oracle_seed_opt = ev->add_option("--oracle-seed", ev_oracle_seed, "Oracle stream seed");

    // report
    auto* rep = app.add_subcommand("report", "Re-render CSV/JSON exports from a report JSON");
    std::string rep_in, rep_format = "csv", rep_out_dir = ".";
    std::vector<double> rep_thresholds;
    rep->add_option("--in", rep_in, "Report JSON produced by evaluate")->required();
    rep->add_option("--format", rep_format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    rep->add_option("--filter-thresholds", rep_thresholds, "PCK@10 filtering thresholds")->delimiter(',');
    rep->add_option("--out-dir", rep_out_dir, "Directory for CSV outputs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_generate(gen_out, gen_sequences, gen_frames, gen_seed, gen_noise, gen_stars);

        if (ev->parsed()) {
            mapose::ExperimentConfig config;
            if (!ev_config.empty()) {
                std::ifstream in(ev_config);
                if (!in) throw mapose::IoError("evaluate: cannot open config " + ev_config);
                config = mapose::config_from_json(Json::parse(in));
            }
            if (!ev_dataset.empty()) config.dataset = ev_dataset;
            if (!ev_predictor.empty()) config.predictor = ev_predictor;
            if (!ev_out.empty()) config.output = ev_out;
            if (ev_jobs > 0) config.jobs = ev_jobs;
            if (ev_stride > 0) config.triplet_stride = ev_stride;
            if (ev_all_frames) config.all_frames = true;
            if (master_seed_opt->count() > 0) config.master_seed = ev_master_seed;
            if (!ev_heatmap_dir.empty()) config.heatmap_dir = ev_heatmap_dir;
            if (ev_oracle_sigma >= 0.0) config.oracle.pixel_sigma = ev_oracle_sigma;
            if (ev_oracle_outlier_rate >= 0.0) config.oracle.outlier_rate = ev_oracle_outlier_rate;
            if (oracle_seed_opt->count() > 0) config.oracle.seed = ev_oracle_seed;

            const mapose::RunReport report = mapose::run_evaluation(config);
            mapose::write_report_outputs(report, config.output);
            if (report.global) {
                const auto& m = report.global->metrics;
                std::cout << "frames " << report.global->frame_count << "  mean PCK@10 "
                          << m.at("pck10").mean << "  mean E_P " << m.at("e_p").mean << "  pose failures "
                          << report.global->pose_failures << "\n";
            }
            std::cout << "report written to " << config.output << "\n";
            for (const auto& [id, message] : report.sequence_errors)
                std::cerr << "sequence " << id << " failed: " << message << "\n";
            return report.sequence_errors.empty() ? 0 : 2;
        }

        if (rep->parsed()) return run_report(rep_in, rep_format, rep_out_dir, rep_thresholds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
