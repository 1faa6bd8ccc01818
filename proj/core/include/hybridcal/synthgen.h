#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/camgeom.h"
#include "hybridcal/distortion.h"
#include "hybridcal/heatmap.h"
#include "hybridcal/image.h"
#include "hybridcal/types.h"

namespace hybridcal {

struct SceneSample {
    Intrinsics intrinsics;
    Extrinsics extrinsics;
    BoardSpec board;
    Image image;
    Points2 gt_corners;           // observed positions, row-major over the board lattice
    Points2 undistorted_corners;  // exact pinhole projections
    Heatmap gt_heatmap;
    std::optional<DistortionModel> distortion;
};

// Uniform fx, fy in [100, 300], px, py in [120, 360], skew in [1, 5].
Intrinsics sample_camera(std::uint64_t seed);

// The requested pose violates the rendering preconditions.
class PoseRejectedError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

struct PoseOptions {
    double max_tilt_deg = 60.0;
    double max_roll_deg = 45.0;
    double min_fill = 0.4;  // checker extent over image extent, larger axis
    double max_fill = 0.8;
    double margin = 8.0;
    double min_spacing = 8.0;  // px between lattice neighbours
    int max_attempts = 1000;
};

// Throws PoseRejectedError unless every interior corner projects at least
// `margin` px inside the image, neighbours are `min_spacing` px apart and the
// camera sees the front of the board.
void check_pose(const Intrinsics& k, const Extrinsics& e, const BoardSpec& board, ImageSize size, double margin = 8.0,
                double min_spacing = 0.0);

Extrinsics sample_pose(const Intrinsics& k, const BoardSpec& board, ImageSize size, std::uint64_t seed,
                       PoseOptions opts = {});

inline constexpr double kBackgroundLevel = 0.5;

// Checkerboard of (rows + 1) x (cols + 1) squares framed by one square of
// white margin on a mid-gray background, antialiased with 4x4 supersampling.
SceneSample render_board(const Intrinsics& k, const Extrinsics& e, const BoardSpec& board, ImageSize size = {},
                         double margin = 8.0);

enum class DistortionLevel { none, level1, level2 };

DistortionLevel parse_distortion_level(const std::string& s);
const char* distortion_level_name(DistortionLevel level);

// level1: k0 = 1, k1 in [-0.35, -0.2], k2 in [-0.1, 0].
// level2: k0 in [0.8, 1.2], k1 in [-0.5, -0.35], k2 in [-0.3, -0.1].
// Draws until the model is monotone on its domain (bounded retries).
DistortionModel sample_distortion(DistortionLevel level, ImageSize size, std::uint64_t seed);

struct BlurConfig {
    int kernel = 3;
    double sigma = 1.5;
};

// Additive highlight gain * max(0, 1 - d / radius)^shininess.
struct LightingConfig {
    Vec2 center = Vec2::Zero();
    double radius = 100.0;
    double gain = 0.4;
    double shininess = 4.0;
};

// Random centre inside the image, radius in [60, 240] px, gain in [0.2, 0.6],
// shininess in [2, 8].
LightingConfig sample_lighting(ImageSize size, std::uint64_t seed);

struct AugmentConfig {
    std::optional<BlurConfig> blur;
    std::optional<LightingConfig> lighting;
    DistortionLevel distortion_level = DistortionLevel::none;
    std::optional<DistortionModel> distortion_model;  // overrides distortion_level when set
    std::uint64_t noise_seed = 0;
    double noise_amplitude = 0.0;  // uniform pixel noise in [-a, a], applied last
    void validate() const;
};

// Lighting, then distortion, then blur, then noise. An empty config returns
// the sample unchanged.
SceneSample augment(const SceneSample& sample, const AugmentConfig& cfg);

enum class CameraMode { shared, per_sample };

struct DatasetConfig {
    int samples = 10;
    std::uint64_t seed = 0;
    BoardSpec board;
    ImageSize image_size;
    CameraMode camera_mode = CameraMode::shared;
    std::optional<Intrinsics> intrinsics;  // fixed camera instead of a sampled one
    DistortionLevel distortion = DistortionLevel::none;
    bool blur = false;
    bool lighting = false;
    double noise_amplitude = 0.0;
    PoseOptions pose;
};

// Throws ConfigError naming the offending field.
DatasetConfig parse_dataset_config(const nlohmann::json& j);
nlohmann::json dataset_config_json(const DatasetConfig& c);

// Sample i depends only on (config, i).
SceneSample generate_sample(const DatasetConfig& c, int index);
std::vector<SceneSample> generate_samples(const DatasetConfig& c, int threads = 1);

// Writes images/img_NNNN.png, heatmaps/img_NNNN.hmap, gt.json and
// manifest.json under out_dir. Returns the manifest.
nlohmann::json generate_dataset(const DatasetConfig& c, const std::filesystem::path& out_dir, int threads = 1);

nlohmann::json ground_truth_json(const DatasetConfig& c, const std::vector<SceneSample>& samples);

std::string sample_stem(int index);

}  // namespace hybridcal
