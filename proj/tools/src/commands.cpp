#include "hybridcal/tools/commands.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hybridcal/calibrate.h"
#include "hybridcal/synthgen.h"
#include "hybridcal/tools/dataset.h"
#include "hybridcal/tools/pipeline.h"

namespace hybridcal::tools {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw ConfigError("--config", "cannot read '" + path + "'");
    try {
        return read_json(path);
    } catch (const SchemaError& e) {
        throw ConfigError("--config", e.what());
    }
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

PipelineConfig pipeline_config(const CommonOptions& o) {
    PipelineConfig cfg = parse_pipeline_config(load_config(o.config));
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.ransac.seed = *o.seed;
    }
    return cfg;
}

int cmd_generate(const CommonOptions& o, std::ostream& out) {
    DatasetConfig cfg = parse_dataset_config(load_config(o.config));
    if (o.seed) cfg.seed = *o.seed;
    if (o.out.empty()) throw ConfigError("--out", "output directory required");
    generate_dataset(cfg, o.out, o.threads);
    out << (fs::path(o.out) / "manifest.json").string() << '\n';
    return kExitOk;
}

int cmd_calibrate(const CommonOptions& o, const std::string& dataset_dir, std::ostream& out, std::ostream& err) {
    const PipelineConfig cfg = pipeline_config(o);
    if (o.out.empty()) throw ConfigError("--out", "output directory required");
    make_dir(o.out);
    const Dataset d = load_dataset(dataset_dir);
    const auto inputs = load_inputs(d, cfg);

    nlohmann::json diag = {{"seed", cfg.seed}, {"config", pipeline_config_json(cfg)}};
    try {
        const PipelineResult r = run_pipeline(inputs, d.board, cfg, o.threads);
        diag["images"] = diagnostics_json(r.detections);
        diag["image_indices"] = r.image_indices;
        diag["per_image_rpe"] = nlohmann::json(r.calibration)["per_image_rpe"];
        write_json(fs::path(o.out) / "diagnostics.json", diag);
        write_json(fs::path(o.out) / "result.json", result_json(r, cfg));
        const auto& k = r.calibration.intrinsics;
        out << "calibrated " << r.image_indices.size() << " of " << inputs.size() << " images, "
            << r.calibration.inlier_images.size() << " inliers\n"
            << "fx " << k.fx << " fy " << k.fy << " skew " << k.skew << " px " << k.px << " py " << k.py << '\n'
            << "rpe " << r.calibration.rpe << " px\n";
        return kExitOk;
    } catch (const StageError& e) {
        diag["failed_stage"] = e.stage();
        diag["message"] = e.what();
        diag["images"] = e.diagnostics();
        write_json(fs::path(o.out) / "diagnostics.json", diag);
        err << "calibration failed at stage " << e.stage() << ": " << e.what() << '\n';
        return kExitFailure;
    }
}

int cmd_detect(const CommonOptions& o, const std::string& dataset_dir, std::ostream& out) {
    const PipelineConfig cfg = pipeline_config(o);
    if (o.out.empty()) throw ConfigError("--out", "output directory required");
    make_dir(o.out);
    const Dataset d = load_dataset(dataset_dir);
    const auto detections = detect_all(load_inputs(d, cfg), d.board, cfg, o.threads);
    const auto diag = diagnostics_json(detections);
    nlohmann::json images = nlohmann::json::array();
    int ok = 0;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        nlohmann::json e = {{"index", i}, {"diagnostics", diag[i]}, {"observations", detections[i].observations}};
        if (detections[i].ok()) {
            e["grid"] = detections[i].grid;
            ++ok;
        } else {
            e["grid"] = nullptr;
        }
        images.push_back(std::move(e));
    }
    write_json(fs::path(o.out) / "corners.json",
               {{"seed", cfg.seed}, {"config", pipeline_config_json(cfg)}, {"board", d.board}, {"images", images}});
    out << "detected complete grids in " << ok << " of " << detections.size() << " images\n";
    return kExitOk;
}

int cmd_correct(const CommonOptions& o, const std::string& dataset_dir, std::ostream& out) {
    const PipelineConfig cfg = pipeline_config(o);
    if (o.out.empty()) throw ConfigError("--out", "output directory required");
    const fs::path root(o.out);
    make_dir(root / "images");
    const Dataset d = load_dataset(dataset_dir);
    const auto inputs = load_inputs(d, cfg);
    if (cfg.source != DetectionSource::response_detector) make_dir(root / "heatmaps");
    nlohmann::json models = nlohmann::json::array();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::string stem = sample_stem(static_cast<int>(i));
        std::optional<CorrectionModel> c;
        nlohmann::json entry = {{"index", i}};
        try {
            c = correction_for(inputs[i], cfg);
        } catch (const Error& e) {
            entry["error"] = e.what();
        }
        entry["model"] = c ? nlohmann::json(*c) : nlohmann::json(nullptr);
        write_png(root / "images" / (stem + ".png"), c ? warp_image(inputs[i].image, *c) : inputs[i].image);
        if (inputs[i].heatmap) {
            const Heatmap h = c ? Heatmap(warp_image(inputs[i].heatmap->to_image(), *c)) : *inputs[i].heatmap;
            write_hmap(root / "heatmaps" / (stem + ".hmap"), h);
        }
        models.push_back(std::move(entry));
    }
    write_json(root / "correction.json",
               {{"seed", cfg.seed}, {"mode", correction_name(cfg.correction)}, {"images", models}});
    out << "corrected " << inputs.size() << " images\n";
    return kExitOk;
}

struct EvalRun {
    std::string result;
    std::string gt;
    IntrinsicsMetrics metrics;
    double rpe_euclidean = 0.0;
    double rpe_squared = 0.0;
    nlohmann::json seed;
};

EvalRun evaluate(const std::string& result_path, const std::string& gt_path) {
    EvalRun run{result_path, gt_path, {}, 0.0, 0.0, nullptr};
    const nlohmann::json rj = read_json(result_path);
    const Dataset d = parse_ground_truth(read_json(gt_path), fs::path(gt_path).parent_path());
    CalibrationResult r;
    std::vector<CornerGrid> grids;
    try {
        rj.get_to(r);
        if (rj.contains("grids")) rj.at("grids").get_to(grids);
        if (rj.contains("seed")) run.seed = rj.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(result_path + ": " + e.what());
    }
    run.metrics = intrinsics_metrics(dataset_intrinsics(d), r.intrinsics);
    if (grids.empty()) throw SchemaError(result_path + ": no corner grids to evaluate reprojection against");
    if (grids.size() != r.extrinsics.size()) throw SchemaError(result_path + ": grids and extrinsics differ in count");
    std::vector<CornerGrid> in_grids;
    std::vector<Extrinsics> in_ext;
    for (int i : r.inlier_images) {
        if (i < 0 || static_cast<std::size_t>(i) >= grids.size()) throw SchemaError(result_path + ": bad inlier index");
        in_grids.push_back(grids[static_cast<std::size_t>(i)]);
        in_ext.push_back(r.extrinsics[static_cast<std::size_t>(i)]);
    }
    try {
        run.rpe_euclidean = reprojection_error(r.intrinsics, in_ext, in_grids, d.board, RpeMode::mean_euclidean);
        run.rpe_squared = reprojection_error(r.intrinsics, in_ext, in_grids, d.board, RpeMode::mean_squared);
    } catch (const PreconditionError& e) {
        throw SchemaError(result_path + ": " + e.what());
    }
    return run;
}

int cmd_eval(const CommonOptions& o, const std::vector<std::string>& results, const std::vector<std::string>& gts,
             std::ostream& out) {
    if (results.empty()) throw ConfigError("--result", "at least one result file required");
    if (gts.size() != 1 && gts.size() != results.size()) {
        throw ConfigError("--gt", "give one ground truth for all results or one per result");
    }
    std::vector<EvalRun> runs;
    for (std::size_t i = 0; i < results.size(); ++i) runs.push_back(evaluate(results[i], gts[gts.size() == 1 ? 0 : i]));

    const double n = static_cast<double>(runs.size());
    double fl = 0, pp = 0, ip = 0, re = 0, rs = 0;
    for (const auto& r : runs) {
        fl += r.metrics.e_fl;
        pp += r.metrics.e_pp;
        ip += r.metrics.e_ip;
        re += r.rpe_euclidean;
        rs += r.rpe_squared;
    }
    const double ip_mean = ip / n;
    double var = 0.0;
    for (const auto& r : runs) var += (r.metrics.e_ip - ip_mean) * (r.metrics.e_ip - ip_mean);
    var /= n;
    std::vector<double> ips;
    for (const auto& r : runs) ips.push_back(r.metrics.e_ip);
    std::sort(ips.begin(), ips.end());
    const double median = ips.size() % 2 ? ips[ips.size() / 2] : 0.5 * (ips[ips.size() / 2 - 1] + ips[ips.size() / 2]);

    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : runs) {
        list.push_back({{"result", r.result},
                        {"gt", r.gt},
                        {"seed", r.seed},
                        {"e_fl", r.metrics.e_fl},
                        {"e_pp", r.metrics.e_pp},
                        {"e_ip", r.metrics.e_ip},
                        {"rpe_mean_euclidean", r.rpe_euclidean},
                        {"rpe_mean_squared", r.rpe_squared}});
    }
    const nlohmann::json report = {{"runs", list},
                                   {"summary",
                                    {{"count", runs.size()},
                                     {"e_fl_mean", fl / n},
                                     {"e_pp_mean", pp / n},
                                     {"e_ip_mean", ip_mean},
                                     {"e_ip_variance", var},
                                     {"e_ip_median", median},
                                     {"rpe_mean_euclidean_mean", re / n},
                                     {"rpe_mean_squared_mean", rs / n}}}};
    if (o.out.empty()) {
        out << report.dump(2) << '\n';
    } else {
        make_dir(o.out);
        write_json(fs::path(o.out) / "report.json", report);
        out << "runs " << runs.size() << "  E_FL " << fl / n << "  E_PP " << pp / n << "  E_IP " << ip_mean
            << " (variance " << var << ")  RPE " << re / n << " px\n";
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hybrid camera calibration toolkit"};
    app.require_subcommand(1);
    CommonOptions o;
    std::string dataset;
    std::vector<std::string> results, gts;

    auto add_common = [&](CLI::App* sub, bool with_dataset) {
        sub->add_option("--config", o.config, "JSON configuration file");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "Seed overriding the configuration");
        sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::Range(1, 256));
        if (with_dataset) sub->add_option("--dataset", dataset, "Dataset directory (contains gt.json)")->required();
    };
    auto* gen = app.add_subcommand("generate", "Render a synthetic dataset");
    add_common(gen, false);
    auto* cal = app.add_subcommand("calibrate", "Run the full pipeline on a dataset");
    add_common(cal, true);
    auto* det = app.add_subcommand("detect", "Detect and order corners only");
    add_common(det, true);
    auto* cor = app.add_subcommand("correct", "Write distortion-corrected images only");
    add_common(cor, true);
    auto* ev = app.add_subcommand("eval", "Compare calibration results with ground truth");
    add_common(ev, false);
    ev->add_option("--result", results, "result.json (repeatable)")->required();
    ev->add_option("--gt", gts, "gt.json (once, or once per result)")->required();

    std::vector<std::string> argv_storage{"hybridcal"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_generate(o, out);
        if (cal->parsed()) return cmd_calibrate(o, dataset, out, err);
        if (det->parsed()) return cmd_detect(o, dataset, out);
        if (cor->parsed()) return cmd_correct(o, dataset, out);
        if (ev->parsed()) return cmd_eval(o, results, gts, out);
    } catch (const ConfigError& e) {
        err << "config error in " << e.field() << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const SchemaError& e) {
        err << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace hybridcal::tools
