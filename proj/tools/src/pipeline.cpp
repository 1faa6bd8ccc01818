#include "hybridcal/tools/pipeline.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace hybridcal::tools {

namespace {

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

const nlohmann::json* find(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

void require_object(const nlohmann::json& j, const std::string& field) {
    if (!j.is_object()) throw ConfigError(field, "expected an object");
}

void reject_unknown(const nlohmann::json& j, const std::string& prefix, std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
        if (!ok) throw ConfigError(join(prefix, key), "unknown field");
    }
}

double get_number(const nlohmann::json& j, const std::string& prefix, const char* key, double def) {
    const auto* v = find(j, key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(join(prefix, key), "expected a number");
    return v->get<double>();
}

long long get_integer(const nlohmann::json& j, const std::string& prefix, const char* key, long long def) {
    const auto* v = find(j, key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(join(prefix, key), "expected an integer");
    return v->get<long long>();
}

bool get_bool(const nlohmann::json& j, const std::string& prefix, const char* key, bool def) {
    const auto* v = find(j, key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(join(prefix, key), "expected true or false");
    return v->get<bool>();
}

std::string get_string(const nlohmann::json& j, const std::string& prefix, const char* key, const std::string& def) {
    const auto* v = find(j, key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(join(prefix, key), "expected a string");
    return v->get<std::string>();
}

int bounded_int(long long v, long long lo, long long hi, const std::string& field) {
    if (v < lo || v > hi) {
        throw ConfigError(field, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
}

}  // namespace

const char* source_name(DetectionSource s) {
    switch (s) {
        case DetectionSource::gt_heatmap: return "gt_heatmap";
        case DetectionSource::response_detector: return "response_detector";
        case DetectionSource::external_heatmap_dir: return "external_heatmap_dir";
    }
    return "gt_heatmap";
}

const char* correction_name(CorrectionMode m) {
    switch (m) {
        case CorrectionMode::none: return "none";
        case CorrectionMode::fit_from_known: return "fit_from_known";
        case CorrectionMode::estimate_from_lines: return "estimate_from_lines";
    }
    return "none";
}

DetectionParams default_detection(DetectionSource source) {
    DetectionParams p;
    if (source == DetectionSource::response_detector) {
        p.peak_threshold = 0.25;
        p.rejection.sigma_ref = 1.2;
        p.rejection.residual_max = 0.1;
    }
    return p;
}

PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
    require_object(j, "<root>");
    reject_unknown(j, "", {"detection", "correction", "collineation", "calibration", "ransac", "board", "seed"});
    PipelineConfig c;

    const nlohmann::json empty = nlohmann::json::object();
    const nlohmann::json& d = find(j, "detection") ? j.at("detection") : empty;
    require_object(d, "detection");
    reject_unknown(d, "detection",
                   {"source", "heatmap_dir", "peak_threshold", "min_separation", "fit_window", "sigma_ref", "tau",
                    "residual_max", "kernel_radius"});
    const std::string source = get_string(d, "detection", "source", "gt_heatmap");
    if (source == "gt_heatmap") c.source = DetectionSource::gt_heatmap;
    else if (source == "response_detector") c.source = DetectionSource::response_detector;
    else if (source == "external_heatmap_dir") c.source = DetectionSource::external_heatmap_dir;
    else throw ConfigError("detection.source", "expected gt_heatmap, response_detector or external_heatmap_dir");
    c.heatmap_dir = get_string(d, "detection", "heatmap_dir", "");
    if (c.source == DetectionSource::external_heatmap_dir && c.heatmap_dir.empty()) {
        throw ConfigError("detection.heatmap_dir", "required for external_heatmap_dir");
    }
    auto& p = c.detection;
    p = default_detection(c.source);
    p.peak_threshold = get_number(d, "detection", "peak_threshold", p.peak_threshold);
    if (!(p.peak_threshold > 0.0 && p.peak_threshold <= 1.0)) {
        throw ConfigError("detection.peak_threshold", "must lie in (0, 1]");
    }
    p.min_separation = get_number(d, "detection", "min_separation", p.min_separation);
    if (!(p.min_separation >= 0.0)) throw ConfigError("detection.min_separation", "must be non-negative");
    p.fit_window = bounded_int(get_integer(d, "detection", "fit_window", p.fit_window), 5, 99, "detection.fit_window");
    if (p.fit_window % 2 == 0) throw ConfigError("detection.fit_window", "must be odd");
    p.rejection.sigma_ref = get_number(d, "detection", "sigma_ref", p.rejection.sigma_ref);
    if (!(p.rejection.sigma_ref > 0.0)) throw ConfigError("detection.sigma_ref", "must be positive");
    p.rejection.tau = get_number(d, "detection", "tau", p.rejection.tau);
    if (!(p.rejection.tau > 1.0)) throw ConfigError("detection.tau", "must exceed 1");
    p.rejection.residual_max = get_number(d, "detection", "residual_max", p.rejection.residual_max);
    if (!(p.rejection.residual_max > 0.0)) throw ConfigError("detection.residual_max", "must be positive");
    p.kernel_radius = bounded_int(get_integer(d, "detection", "kernel_radius", p.kernel_radius), 2, 50,
                                  "detection.kernel_radius");

    if (const auto* corr = find(j, "correction")) {
        require_object(*corr, "correction");
        reject_unknown(*corr, "correction", {"mode"});
        const std::string mode = get_string(*corr, "correction", "mode", "none");
        if (mode == "none") c.correction = CorrectionMode::none;
        else if (mode == "fit_from_known") c.correction = CorrectionMode::fit_from_known;
        else if (mode == "estimate_from_lines") c.correction = CorrectionMode::estimate_from_lines;
        else throw ConfigError("correction.mode", "expected none, fit_from_known or estimate_from_lines");
    }
    c.collineation = get_bool(j, "", "collineation", c.collineation);

    if (const auto* cal = find(j, "calibration")) {
        require_object(*cal, "calibration");
        reject_unknown(*cal, "calibration", {"refine", "fix_skew", "max_iterations"});
        c.calibration.refine = get_bool(*cal, "calibration", "refine", c.calibration.refine);
        c.calibration.fix_skew = get_bool(*cal, "calibration", "fix_skew", c.calibration.fix_skew);
        c.calibration.max_iterations = bounded_int(
            get_integer(*cal, "calibration", "max_iterations", c.calibration.max_iterations), 1, 100000,
            "calibration.max_iterations");
    }
    if (const auto* r = find(j, "ransac")) {
        require_object(*r, "ransac");
        reject_unknown(*r, "ransac", {"subset_size", "rpe_threshold", "min_inlier_fraction", "max_trials"});
        auto& rc = c.ransac;
        rc.subset_size = bounded_int(get_integer(*r, "ransac", "subset_size", rc.subset_size), 3, 100000,
                                     "ransac.subset_size");
        rc.rpe_threshold = get_number(*r, "ransac", "rpe_threshold", rc.rpe_threshold);
        if (!(rc.rpe_threshold > 0.0)) throw ConfigError("ransac.rpe_threshold", "must be positive");
        rc.min_inlier_fraction = get_number(*r, "ransac", "min_inlier_fraction", rc.min_inlier_fraction);
        if (!(rc.min_inlier_fraction > 0.0 && rc.min_inlier_fraction <= 1.0)) {
            throw ConfigError("ransac.min_inlier_fraction", "must lie in (0, 1]");
        }
        rc.max_trials = bounded_int(get_integer(*r, "ransac", "max_trials", rc.max_trials), 1, 1000000,
                                    "ransac.max_trials");
    }
    if (const auto* b = find(j, "board")) {
        require_object(*b, "board");
        reject_unknown(*b, "board", {"rows", "cols", "square_size"});
        BoardSpec board;
        board.rows = bounded_int(get_integer(*b, "board", "rows", board.rows), 3, 1000, "board.rows");
        board.cols = bounded_int(get_integer(*b, "board", "cols", board.cols), 3, 1000, "board.cols");
        board.square_size = get_number(*b, "board", "square_size", board.square_size);
        if (!(board.square_size > 0.0)) throw ConfigError("board.square_size", "must be positive");
        c.board = board;
    }
    if (const auto* s = find(j, "seed")) {
        const bool ok = s->is_number_unsigned() || (s->is_number_integer() && s->get<long long>() >= 0);
        if (!ok) throw ConfigError("seed", "expected a non-negative integer");
        c.seed = s->get<std::uint64_t>();
    }
    c.ransac.seed = c.seed;
    return c;
}

nlohmann::json pipeline_config_json(const PipelineConfig& c) {
    const auto& p = c.detection;
    nlohmann::json j = {
        {"detection",
         {{"source", source_name(c.source)},
          {"heatmap_dir", c.heatmap_dir.generic_string()},
          {"peak_threshold", p.peak_threshold},
          {"min_separation", p.min_separation},
          {"fit_window", p.fit_window},
          {"sigma_ref", p.rejection.sigma_ref},
          {"tau", p.rejection.tau},
          {"residual_max", p.rejection.residual_max},
          {"kernel_radius", p.kernel_radius}}},
        {"correction", {{"mode", correction_name(c.correction)}}},
        {"collineation", c.collineation},
        {"calibration",
         {{"refine", c.calibration.refine},
          {"fix_skew", c.calibration.fix_skew},
          {"max_iterations", c.calibration.max_iterations}}},
        {"ransac",
         {{"subset_size", c.ransac.subset_size},
          {"rpe_threshold", c.ransac.rpe_threshold},
          {"min_inlier_fraction", c.ransac.min_inlier_fraction},
          {"max_trials", c.ransac.max_trials}}},
        {"seed", c.seed}};
    if (c.board) j["board"] = *c.board;
    return j;
}

namespace {

Heatmap source_heatmap(const ImageInput& in) {
    if (!in.heatmap) throw PreconditionError("heatmap source selected but no heatmap was supplied");
    return *in.heatmap;
}

struct PointDetection {
    std::vector<CornerObservation> observations;
    Points2 inliers;  // strongest first
    int peaks = 0;
    int fit_failures = 0;
};

PointDetection detect_points(const Heatmap& h, const DetectionParams& p) {
    PointDetection out;
    const auto peaks = detect_peaks(h, p.peak_threshold, p.min_separation);
    out.peaks = static_cast<int>(peaks.size());
    std::vector<CornerObservation> fits;
    for (const auto& pk : peaks) {
        try {
            fits.push_back(fit_gaussian_surface(h, pk.x, pk.y, p.fit_window));
        } catch (const FitError&) {
            ++out.fit_failures;
        }
    }
    out.observations = reject_outliers(fits, p.rejection);
    for (const auto& o : out.observations) {
        if (o.status == ObservationStatus::inlier) out.inliers.push_back(o.mu);
    }
    return out;
}

}  // namespace

std::optional<CorrectionModel> correction_for(const ImageInput& in, const PipelineConfig& cfg) {
    switch (cfg.correction) {
        case CorrectionMode::none: return std::nullopt;
        case CorrectionMode::fit_from_known:
            if (!in.distortion) return std::nullopt;
            return fit_correction_model(*in.distortion).model;
        case CorrectionMode::estimate_from_lines: {
            const ImageSize size = in.image.empty() && in.heatmap ? in.heatmap->size() : in.image.size();
            const Heatmap h = corner_heatmap(in, std::nullopt, cfg);
            const auto pts = detect_points(h, cfg.detection);
            const auto lines = group_lattice_lines(pts.inliers, image_center(size));
            return estimate_correction_from_lines(lines, image_center(size), normalization_radius(size)).model;
        }
    }
    return std::nullopt;
}

Heatmap corner_heatmap(const ImageInput& in, const std::optional<CorrectionModel>& correction,
                       const PipelineConfig& cfg) {
    if (cfg.source == DetectionSource::response_detector) {
        if (in.image.empty()) throw PreconditionError("response detector selected but no image was supplied");
        return response_detect(correction ? warp_image(in.image, *correction) : in.image, cfg.detection.kernel_radius);
    }
    Heatmap h = source_heatmap(in);
    if (correction) h = Heatmap(warp_image(h.to_image(), *correction));
    return h;
}

ImageDetection detect_image(const ImageInput& in, const BoardSpec& board, const PipelineConfig& cfg) {
    ImageDetection out;
    auto& diag = out.diagnostics;
    std::string stage = "correction";
    try {
        out.correction = correction_for(in, cfg);

        stage = "detection";
        const Heatmap h = corner_heatmap(in, out.correction, cfg);

        stage = "peaks";
        PointDetection pts = detect_points(h, cfg.detection);
        out.observations = pts.observations;
        diag.peaks = pts.peaks;
        diag.fit_failures = pts.fit_failures;
        diag.fitted = static_cast<int>(pts.observations.size());
        for (const auto& o : pts.observations) {
            if (o.status == ObservationStatus::rejected_sigma) ++diag.rejected_sigma;
            if (o.status == ObservationStatus::rejected_residual) ++diag.rejected_residual;
        }
        diag.inliers = static_cast<int>(pts.inliers.size());
        if (pts.inliers.size() < 4) throw DegenerateError("fewer than 4 corners survived rejection");

        stage = "sort";
        // Peaks are ordered by strength; surplus detections are the weakest.
        if (pts.inliers.size() > static_cast<std::size_t>(board.corner_count())) {
            pts.inliers.resize(static_cast<std::size_t>(board.corner_count()));
        }
        out.grid = sort_corners(pts.inliers, board.rows, board.cols);

        if (cfg.collineation) {
            stage = "collineation";
            out.grid = collineation_refine(out.grid);
        }
        diag.grid_valid = out.grid.valid_count();
        diag.recovered = static_cast<int>(
            std::count(out.grid.provenance.begin(), out.grid.provenance.end(), Provenance::recovered));
    } catch (const Error& e) {
        diag.failed_stage = stage;
        diag.message = e.what();
        out.grid = CornerGrid{};
    }
    return out;
}

std::vector<ImageDetection> detect_all(const std::vector<ImageInput>& inputs, const BoardSpec& board,
                                       const PipelineConfig& cfg, int threads) {
    std::vector<ImageDetection> out(inputs.size());
    const int n = static_cast<int>(inputs.size());
    threads = std::clamp(threads, 1, std::max(1, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) out[i] = detect_image(inputs[i], board, cfg);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < n; i += threads) out[i] = detect_image(inputs[i], board, cfg);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

PipelineResult run_pipeline(const std::vector<ImageInput>& inputs, const BoardSpec& board, const PipelineConfig& cfg,
                            int threads) {
    if (cfg.board && !(*cfg.board == board)) {
        throw StageError("input", "configured board does not match the dataset board");
    }
    PipelineResult r;
    r.detections = detect_all(inputs, board, cfg, threads);

    std::vector<CornerGrid> grids;
    for (std::size_t i = 0; i < r.detections.size(); ++i) {
        if (!r.detections[i].ok()) continue;
        grids.push_back(r.detections[i].grid);
        r.image_indices.push_back(static_cast<int>(i));
    }
    if (grids.size() < static_cast<std::size_t>(cfg.ransac.subset_size)) {
        throw StageError("ransac",
                         "only " + std::to_string(grids.size()) + " usable images, subset_size is " +
                             std::to_string(cfg.ransac.subset_size),
                         diagnostics_json(r.detections));
    }
    try {
        r.calibration = ransac_calibrate(grids, board, cfg.ransac, cfg.calibration, threads);
    } catch (const Error& e) {
        throw StageError("ransac", e.what(), diagnostics_json(r.detections));
    }
    return r;
}

nlohmann::json diagnostics_json(const std::vector<ImageDetection>& detections) {
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const auto& d = detections[i].diagnostics;
        nlohmann::json e = {{"index", i},
                            {"peaks", d.peaks},
                            {"fitted", d.fitted},
                            {"fit_failures", d.fit_failures},
                            {"rejected_sigma", d.rejected_sigma},
                            {"rejected_residual", d.rejected_residual},
                            {"inliers", d.inliers},
                            {"grid_valid", d.grid_valid},
                            {"recovered", d.recovered},
                            {"ok", detections[i].ok()}};
        if (!detections[i].ok()) {
            e["failed_stage"] = d.failed_stage;
            e["message"] = d.message;
        }
        if (detections[i].correction) e["correction"] = *detections[i].correction;
        list.push_back(std::move(e));
    }
    return list;
}

nlohmann::json result_json(const PipelineResult& r, const PipelineConfig& cfg) {
    nlohmann::json j = r.calibration;
    j["image_indices"] = r.image_indices;
    nlohmann::json grids = nlohmann::json::array();
    for (int idx : r.image_indices) grids.push_back(r.detections[static_cast<std::size_t>(idx)].grid);
    j["grids"] = grids;
    j["seed"] = cfg.seed;
    return j;
}

}  // namespace hybridcal::tools
