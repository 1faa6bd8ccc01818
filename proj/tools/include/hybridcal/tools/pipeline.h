#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/calibrate.h"
#include "hybridcal/corner_grid.h"
#include "hybridcal/distortion.h"
#include "hybridcal/gridorder.h"
#include "hybridcal/heatmap.h"
#include "hybridcal/image.h"

namespace hybridcal::tools {

enum class DetectionSource { gt_heatmap, response_detector, external_heatmap_dir };
enum class CorrectionMode { none, fit_from_known, estimate_from_lines };

struct DetectionParams {
    double peak_threshold = 0.5;
    double min_separation = 4.0;
    int fit_window = kDefaultFitWindow;
    RejectionParams rejection;
    int kernel_radius = 5;  // response detector only
};

struct PipelineConfig {
    DetectionSource source = DetectionSource::gt_heatmap;
    std::filesystem::path heatmap_dir;  // external_heatmap_dir only
    CorrectionMode correction = CorrectionMode::none;
    DetectionParams detection;
    bool collineation = true;
    CalibrationOptions calibration;
    RansacConfig ransac;
    std::optional<BoardSpec> board;  // must match the dataset when given
    std::uint64_t seed = 0;          // drives every random choice (currently RANSAC)
};

// Detection defaults per source: the response detector produces wider,
// weaker blobs than the reference heatmaps.
DetectionParams default_detection(DetectionSource source);

// Throws ConfigError naming the offending field.
PipelineConfig parse_pipeline_config(const nlohmann::json& j);
nlohmann::json pipeline_config_json(const PipelineConfig& c);

const char* source_name(DetectionSource s);
const char* correction_name(CorrectionMode m);

struct ImageInput {
    Image image;
    std::optional<Heatmap> heatmap;             // required by the heatmap sources
    std::optional<DistortionModel> distortion;  // required by fit_from_known
};

struct ImageDiagnostics {
    int peaks = 0;
    int fitted = 0;
    int fit_failures = 0;
    int rejected_sigma = 0;
    int rejected_residual = 0;
    int inliers = 0;
    int grid_valid = 0;
    int recovered = 0;
    double line_rms = 0.0;  // estimate_from_lines only
    std::string failed_stage;  // empty on success
    std::string message;
};

struct ImageDetection {
    std::optional<CorrectionModel> correction;
    std::vector<CornerObservation> observations;
    CornerGrid grid;  // empty (0 x 0) when detection failed
    ImageDiagnostics diagnostics;
    bool ok() const { return diagnostics.failed_stage.empty(); }
};

// Correction stage alone: the model the configured mode applies to this image
// (none when the mode is none).
std::optional<CorrectionModel> correction_for(const ImageInput& in, const PipelineConfig& cfg);

// Heatmap source on the corrected raster.
Heatmap corner_heatmap(const ImageInput& in, const std::optional<CorrectionModel>& correction,
                       const PipelineConfig& cfg);

// Correction, detection, peak extraction, surface fit, rejection, sorting and
// collineation for one image. Stage failures are reported in diagnostics.
ImageDetection detect_image(const ImageInput& in, const BoardSpec& board, const PipelineConfig& cfg);

std::vector<ImageDetection> detect_all(const std::vector<ImageInput>& inputs, const BoardSpec& board,
                                       const PipelineConfig& cfg, int threads = 1);

// A pipeline stage failed; `diagnostics` carries what was computed so far.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message, nlohmann::json diagnostics = {})
        : Error(stage + ": " + message), stage_(std::move(stage)), diagnostics_(std::move(diagnostics)) {}
    const std::string& stage() const { return stage_; }
    const nlohmann::json& diagnostics() const { return diagnostics_; }

private:
    std::string stage_;
    nlohmann::json diagnostics_;
};

struct PipelineResult {
    CalibrationResult calibration;
    std::vector<int> image_indices;  // dataset index of each calibrated image
    std::vector<ImageDetection> detections;  // one per input image
};

// Full pipeline; throws StageError.
PipelineResult run_pipeline(const std::vector<ImageInput>& inputs, const BoardSpec& board, const PipelineConfig& cfg,
                            int threads = 1);

nlohmann::json diagnostics_json(const std::vector<ImageDetection>& detections);
nlohmann::json result_json(const PipelineResult& r, const PipelineConfig& cfg);

}  // namespace hybridcal::tools
