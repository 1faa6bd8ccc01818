#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/camgeom.h"
#include "hybridcal/distortion.h"
#include "hybridcal/tools/pipeline.h"

namespace hybridcal::tools {

// An input file does not follow the expected layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

struct DatasetSample {
    std::filesystem::path image;
    std::filesystem::path heatmap;
    Intrinsics intrinsics;
    Extrinsics extrinsics;
    Points2 corners;
    Points2 undistorted_corners;
    std::optional<DistortionModel> distortion;
};

struct Dataset {
    std::filesystem::path root;
    BoardSpec board;
    ImageSize image_size;
    std::uint64_t seed = 0;
    std::vector<DatasetSample> samples;
};

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// Reads <dir>/gt.json; paths are resolved against dir.
Dataset load_dataset(const std::filesystem::path& dir);
Dataset parse_ground_truth(const nlohmann::json& gt, const std::filesystem::path& root);

// Camera shared by every sample; throws SchemaError when samples disagree.
Intrinsics dataset_intrinsics(const Dataset& d);

// Loads the rasters the configuration needs for each sample.
std::vector<ImageInput> load_inputs(const Dataset& d, const PipelineConfig& cfg);

}  // namespace hybridcal::tools
