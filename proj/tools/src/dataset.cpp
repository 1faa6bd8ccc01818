#include "hybridcal/tools/dataset.h"

#include <fstream>
#include <sstream>

#include "hybridcal/image.h"
#include "hybridcal/synthgen.h"

namespace hybridcal::tools {

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing: " + path.string());
}

namespace {

Points2 parse_points(const nlohmann::json& a) {
    Points2 pts;
    for (const auto& p : a) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return pts;
}

}  // namespace

Dataset parse_ground_truth(const nlohmann::json& gt, const std::filesystem::path& root) {
    Dataset d;
    d.root = root;
    try {
        gt.at("board").get_to(d.board);
        d.image_size = {gt.at("image_size").at("width").get<int>(), gt.at("image_size").at("height").get<int>()};
        d.seed = gt.value("seed", std::uint64_t{0});
        for (const auto& s : gt.at("samples")) {
            DatasetSample ds;
            ds.image = root / s.at("image").get<std::string>();
            ds.heatmap = root / s.at("heatmap").get<std::string>();
            s.at("intrinsics").get_to(ds.intrinsics);
            s.at("extrinsics").get_to(ds.extrinsics);
            ds.corners = parse_points(s.at("corners"));
            ds.undistorted_corners = parse_points(s.at("undistorted_corners"));
            if (!s.at("distortion").is_null()) ds.distortion = s.at("distortion").get<DistortionModel>();
            d.samples.push_back(std::move(ds));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("ground truth: " + std::string(e.what()));
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    return parse_ground_truth(read_json(dir / "gt.json"), dir);
}

Intrinsics dataset_intrinsics(const Dataset& d) {
    if (d.samples.empty()) throw SchemaError("ground truth has no samples");
    const Intrinsics& k = d.samples.front().intrinsics;
    for (const auto& s : d.samples) {
        if (!(s.intrinsics == k)) throw SchemaError("ground truth samples do not share one camera");
    }
    return k;
}

std::vector<ImageInput> load_inputs(const Dataset& d, const PipelineConfig& cfg) {
    std::vector<ImageInput> inputs;
    inputs.reserve(d.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const auto& s = d.samples[i];
        ImageInput in;
        in.image = read_png(s.image);
        if (cfg.source == DetectionSource::gt_heatmap) {
            in.heatmap = read_hmap(s.heatmap);
        } else if (cfg.source == DetectionSource::external_heatmap_dir) {
            in.heatmap = read_hmap(cfg.heatmap_dir / (sample_stem(static_cast<int>(i)) + ".hmap"));
        }
        in.distortion = s.distortion;
        inputs.push_back(std::move(in));
    }
    return inputs;
}

}  // namespace hybridcal::tools
