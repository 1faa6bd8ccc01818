// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hybridcal/calibrate.h"
#include "hybridcal/camgeom.h"
#include "hybridcal/distortion.h"
#include "hybridcal/gridorder.h"
#include "hybridcal/heatmap.h"
#include "hybridcal/rng.h"
#include "hybridcal/synthgen.h"
#include "hybridcal/tools/commands.h"
#include "hybridcal/tools/dataset.h"
#include "hybridcal/tools/pipeline.h"
#include "synthetic.h"

namespace hybridcal {
namespace {

namespace fs = std::filesystem;
using testing::make_views;
using testing::project_grid;
using testing::with_noise;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_grid_error(const CornerGrid& g, const CornerGrid& truth) {
    double s = 0.0;
    int n = 0;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (!g.valid(r, c)) continue;
            s += (g.at(r, c) - truth.at(r, c)).norm();
            ++n;
        }
    }
    return n ? s / n : 0.0;
}

std::vector<tools::ImageInput> inputs_from(const std::vector<SceneSample>& samples, bool with_distortion) {
    std::vector<tools::ImageInput> in;
    for (const auto& s : samples) {
        tools::ImageInput i;
        i.image = s.image;
        i.heatmap = s.gt_heatmap;
        if (with_distortion) i.distortion = s.distortion;
        in.push_back(std::move(i));
    }
    return in;
}

Outcome zero_noise_recovery() {
    const auto start = std::chrono::steady_clock::now();
    DatasetConfig dc;
    dc.samples = 10;
    dc.seed = 2024;
    const auto samples = generate_samples(dc);
    tools::PipelineConfig cfg;
    cfg.detection = tools::default_detection(cfg.source);
    const auto r = tools::run_pipeline(inputs_from(samples, false), dc.board, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const IntrinsicsMetrics m = intrinsics_metrics(samples[0].intrinsics, r.calibration.intrinsics);
    return {m.e_fl < 1e-3 && m.e_pp < 1e-3 && r.calibration.rpe < 1e-6 && secs < 10.0,
            fmt("E_FL=%.3g E_PP=%.3g RPE=%.3g time=%.2fs", m.e_fl, m.e_pp, r.calibration.rpe, secs)};
}

Outcome gaussian_fit_exactness() {
    Rng rng(101);
    double worst = 0.0;
    const ImageSize size{40, 40};
    for (int t = 0; t < 1000; ++t) {
        const Vec2 mu(rng.uniform(12, 28), rng.uniform(12, 28));
        const double sigma = rng.uniform(1.0, 3.0);
        const Points2 one{mu};
        const Heatmap h = render_heatmap(one, sigma, size);
        const auto peaks = detect_peaks(h, 0.5, 4);
        if (peaks.size() != 1) return {false, fmt("trial %d: %zu peaks", t, peaks.size())};
        const CornerObservation o = fit_gaussian_surface(h, peaks[0].x, peaks[0].y);
        worst = std::max(worst, (o.mu - mu).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-6, fmt("max |mu error|=%.3g px over 1000 fits", worst)};
}

Outcome noise_robustness() {
    Rng rng(102);
    const ImageSize size{40, 40};
    int within = 0;
    for (int t = 0; t < 1000; ++t) {
        const Vec2 mu(rng.uniform(15, 25), rng.uniform(15, 25));
        const Points2 one{mu};
        std::vector<double> v = render_heatmap(one, 1.5, size).values();
        for (double& x : v) x += rng.uniform(-0.01, 0.01);
        const Heatmap h(size.width, size.height, v);
        const auto px = static_cast<int>(std::lround(mu.x()));
        const auto py = static_cast<int>(std::lround(mu.y()));
        try {
            const CornerObservation o = fit_gaussian_surface(h, px, py, 7);
            if ((o.mu - mu).norm() < 0.05) ++within;
        } catch (const FitError&) {
        }
    }
    return {within >= 990, fmt("%d/1000 fits within 0.05 px", within)};
}

Outcome distortion_round_trip() {
    const ImageSize size{};
    const BoardSpec board;
    double worst_radial = 0.0;
    double worst_position = 0.0;
    double r_norm = 0.0;
    for (DistortionLevel level : {DistortionLevel::level1, DistortionLevel::level2}) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const DistortionModel m = sample_distortion(level, size, derive_seed(seed, 7));
            r_norm = m.r_norm;
            const CorrectionModel c = fit_correction_model(m).model;
            for (int i = 0; i <= 1000; ++i) {
                const double rc = m.domain * i / 1000.0;
                worst_radial = std::max(worst_radial, std::abs(c.radius(m.radius(rc)) - rc));
            }
            const Intrinsics k = sample_camera(derive_seed(seed, 8));
            const Extrinsics e = sample_pose(k, board, size, derive_seed(seed, 9));
            const CornerGrid truth = project_grid(k, e, board);
            for (const auto& p : truth.points) {
                worst_position = std::max(worst_position, (correct_point(c, distort_point(m, p)) - p).norm());
            }
        }
    }
    return {worst_radial < 5e-3 && worst_position < 1e-3 * r_norm,
            fmt("max radial residual=%.3g (normalized), max corner error=%.3g px (bound %.3g px)", worst_radial,
                worst_position, 1e-3 * r_norm)};
}

Outcome collineation_benefit() {
    Rng rng(103);
    double before = 0.0;
    double after = 0.0;
    double recovered_error = 0.0;
    int recovered = 0;
    const std::vector<std::pair<int, int>> holes{{0, 0}, {2, 5}, {4, 4}, {7, 10}, {5, 1}};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto v = make_views(seed + 5000, 1);
        const CornerGrid& truth = v.grids[0];
        const CornerGrid noisy = with_noise(truth, 0.1, rng);
        before += mean_grid_error(noisy, truth);
        after += mean_grid_error(collineation_refine(noisy), truth);

        CornerGrid sparse = noisy;
        for (auto [r, c] : holes) sparse.invalidate(r, c);
        const CornerGrid out = collineation_refine(sparse);
        for (auto [r, c] : holes) {
            if (!out.valid(r, c)) continue;
            ++recovered;
            recovered_error += (out.at(r, c) - truth.at(r, c)).norm();
        }
    }
    before /= 100;
    after /= 100;
    recovered_error = recovered ? recovered_error / recovered : INFINITY;
    return {after < before && recovered == 500 && recovered_error < before,
            fmt("mean error %.4f -> %.4f px; recovered %d/500 cells, mean error %.4f px", before, after, recovered,
                recovered_error)};
}

std::vector<CornerGrid> ransac_scene(std::uint64_t seed, int corrupted) {
    auto v = make_views(seed + 6000, 12);
    Rng rng(derive_seed(seed, 77));
    for (int i = 12 - corrupted; i < 12; ++i) v.grids[static_cast<std::size_t>(i)] = with_noise(v.grids[i], 5.0, rng);
    return v.grids;
}

Outcome ransac_consensus() {
    const BoardSpec board;
    int excluded = 0;
    int all_inliers = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RansacConfig cfg;
        cfg.seed = seed;
        try {
            const auto r = ransac_calibrate(ransac_scene(seed, 3), board, cfg);
            if (std::none_of(r.inlier_images.begin(), r.inlier_images.end(), [](int i) { return i >= 9; })) ++excluded;
        } catch (const Error&) {
        }
        try {
            const auto r = ransac_calibrate(ransac_scene(seed, 0), board, cfg);
            if (r.inlier_images.size() == 12) ++all_inliers;
        } catch (const Error&) {
        }
    }
    return {excluded >= 95 && all_inliers == 100,
            fmt("corrupted excluded in %d/100 seeds; clean sets fully inlying in %d/100", excluded, all_inliers)};
}

Outcome jacobian_correctness() {
    Rng rng(104);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto v = make_views(seed + 7000, 3);
        for (auto& g : v.grids) g = with_noise(g, 0.5, rng);
        const Eigen::VectorXd p = pack_parameters(v.k, v.poses);
        const Eigen::MatrixXd ja = reprojection_jacobian(p, v.grids, v.board);
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(p(j)));
            Eigen::VectorXd pp = p;
            Eigen::VectorXd pm = p;
            pp(j) += h;
            pm(j) -= h;
            const Eigen::VectorXd jn =
                (reprojection_residuals(pp, v.grids, v.board) - reprojection_residuals(pm, v.grids, v.board)) / (2 * h);
            const double scale = std::max(jn.cwiseAbs().maxCoeff(), 1e-12);
            worst = std::max(worst, (ja.col(j) - jn).cwiseAbs().maxCoeff() / scale);
        }
    }
    return {worst < 1e-4, fmt("max relative error=%.3g over 100 configurations", worst)};
}

Outcome response_detector_level_one() {
    std::vector<double> e_ip;
    int failures = 0;
    for (std::uint64_t run = 0; run < 20; ++run) {
        DatasetConfig dc;
        dc.samples = 10;
        dc.seed = 8000 + run;
        dc.distortion = DistortionLevel::level1;
        const auto samples = generate_samples(dc);
        tools::PipelineConfig cfg;
        cfg.source = tools::DetectionSource::response_detector;
        cfg.detection = tools::default_detection(cfg.source);
        cfg.correction = tools::CorrectionMode::fit_from_known;
        try {
            const auto r = tools::run_pipeline(inputs_from(samples, true), dc.board, cfg);
            e_ip.push_back(intrinsics_metrics(samples[0].intrinsics, r.calibration.intrinsics).e_ip);
        } catch (const Error&) {
            ++failures;
            e_ip.push_back(INFINITY);
        }
    }
    const double med = median(e_ip);
    return {med < 2.0, fmt("median E_IP=%.3f px over 20 runs (%d failed runs)", med, failures)};
}

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = tools::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::map<std::string, std::string> json_files(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return files;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "hybridcal_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    tools::write_json(root / "gen.json", {{"samples", 8}, {"seed", 21}, {"distortion", "level1"}, {"blur", true}});
    tools::write_json(root / "cal.json",
                      {{"detection", {{"source", "response_detector"}}}, {"correction", {{"mode", "fit_from_known"}}}});
    std::vector<std::string> mismatched;
    std::vector<std::string> errors;
    std::array<std::map<std::string, std::map<std::string, std::string>>, 2> outputs;
    // Both runs write to the same paths, since outputs record their inputs.
    const fs::path base = root / "run";
    for (int rep = 0; rep < 2; ++rep) {
        fs::remove_all(base);
        const std::string data = (base / "data").string();
        const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
            {"generate", {"generate", "--config", (root / "gen.json").string(), "--out", data}},
            {"detect", {"detect", "--dataset", data, "--config", (root / "cal.json").string(), "--out", (base / "det").string()}},
            {"correct", {"correct", "--dataset", data, "--config", (root / "cal.json").string(), "--out", (base / "cor").string()}},
            {"calibrate", {"calibrate", "--dataset", data, "--config", (root / "cal.json").string(), "--seed", "5", "--out",
                           (base / "cal").string()}},
            {"eval", {"eval", "--result", (base / "cal" / "result.json").string(), "--gt", data + "/gt.json", "--out",
                      (base / "eval").string()}},
        };
        for (const auto& [name, args] : commands) {
            const CliRun r = cli(args);
            if (r.code != tools::kExitOk) errors.push_back(name + ": " + r.err);
            const fs::path dir = args[args.size() - 1];
            auto files = json_files(dir);
            files["<stdout>"] = r.out;
            outputs[rep][name] = std::move(files);
        }
    }
    for (const auto& [name, files] : outputs[0]) {
        if (files != outputs[1].at(name)) mismatched.push_back(name);
    }
    fs::remove_all(root);
    std::string detail = "commands generate, detect, correct, calibrate, eval";
    if (!errors.empty()) detail += "; errors: " + errors.front();
    for (const auto& m : mismatched) detail += "; differs: " + m;
    if (errors.empty() && mismatched.empty()) detail += " byte-identical across reruns";
    return {errors.empty() && mismatched.empty(), detail};
}

Outcome metric_fidelity() {
    const Intrinsics gt{200.0, 210.0, 2.0, 240.0, 250.0};
    Intrinsics est = gt;
    est.fx += 2.0;
    est.py += 4.0;
    const IntrinsicsMetrics m = intrinsics_metrics(gt, est);

    const auto v = make_views(9000, 1);
    CornerGrid shifted = v.grids[0];
    for (auto& p : shifted.points) p += Vec2(1.0, 0.0);
    const double rpe = image_rpe(v.k, v.poses[0], shifted, v.board);
    const bool ok = m.e_fl == 2.0 && m.e_pp == 4.0 && m.e_ip == 3.0 && std::abs(rpe - 1.0) < 1e-9;
    return {ok, fmt("E_FL=%.17g E_PP=%.17g E_IP=%.17g RPE=%.12f", m.e_fl, m.e_pp, m.e_ip, rpe)};
}

}  // namespace
}  // namespace hybridcal

int main() {
    using namespace hybridcal;
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"zero_noise_recovery", zero_noise_recovery},
        {"gaussian_fit_exactness", gaussian_fit_exactness},
        {"noise_robustness", noise_robustness},
        {"distortion_round_trip", distortion_round_trip},
        {"collineation_benefit", collineation_benefit},
        {"ransac_consensus", ransac_consensus},
        {"jacobian_correctness", jacobian_correctness},
        {"response_detector_level_one", response_detector_level_one},
        {"determinism", determinism},
        {"metric_fidelity", metric_fidelity},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
