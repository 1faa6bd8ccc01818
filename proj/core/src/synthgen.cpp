#include "hybridcal/synthgen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <thread>

#include <Eigen/Geometry>

#include "hybridcal/rng.h"

namespace hybridcal {

namespace {

// Stream indices under the dataset seed; sample streams use the sample index.
constexpr std::uint64_t kCameraStream = 0xC0FFEE0000000001ull;
constexpr std::uint64_t kDistortionStream = 0xC0FFEE0000000002ull;

constexpr double kDeg = std::numbers::pi / 180.0;

Points2 project_lattice(const Intrinsics& k, const Extrinsics& e, const BoardSpec& board) {
    Points2 pts;
    pts.reserve(static_cast<std::size_t>(board.corner_count()));
    for (int r = 0; r < board.rows; ++r) {
        for (int c = 0; c < board.cols; ++c) pts.push_back(project_point(k, e, board.world_point(r, c)));
    }
    return pts;
}

bool inside(const Vec2& p, ImageSize size, double margin) {
    return p.x() >= margin && p.y() >= margin && p.x() <= size.width - 1 - margin && p.y() <= size.height - 1 - margin;
}

double checker_value(double x, double y, const BoardSpec& board) {
    const double s = board.square_size;
    if (x >= -s && y >= -s && x < board.cols * s && y < board.rows * s) {
        const auto i = static_cast<long>(std::floor(x / s));
        const auto j = static_cast<long>(std::floor(y / s));
        return ((i + j) & 1) == 0 ? 0.0 : 1.0;
    }
    if (x >= -2 * s && y >= -2 * s && x < (board.cols + 1) * s && y < (board.rows + 1) * s) return 1.0;
    return kBackgroundLevel;
}

}  // namespace

Intrinsics sample_camera(std::uint64_t seed) {
    Rng rng(seed);
    Intrinsics k;
    k.fx = rng.uniform(100.0, 300.0);
    k.fy = rng.uniform(100.0, 300.0);
    k.px = rng.uniform(120.0, 360.0);
    k.py = rng.uniform(120.0, 360.0);
    k.skew = rng.uniform(1.0, 5.0);
    return k;
}

void check_pose(const Intrinsics& k, const Extrinsics& e, const BoardSpec& board, ImageSize size, double margin,
                double min_spacing) {
    const Vec3 centre = -e.rotation.transpose() * e.translation;
    if (!(centre.z() < 0.0)) throw PoseRejectedError("board faces away from the camera");
    for (int r = 0; r < board.rows; ++r) {
        for (int c = 0; c < board.cols; ++c) {
            const Vec3 pc = e.rotation * board.world_point(r, c) + e.translation;
            if (!(pc.z() > 1e-9)) throw PoseRejectedError("corner behind the camera");
        }
    }
    const Points2 pts = project_lattice(k, e, board);
    for (const auto& p : pts) {
        if (!inside(p, size, margin)) throw PoseRejectedError("corner projects outside the image margin");
    }
    if (min_spacing <= 0.0) return;
    for (int r = 0; r < board.rows; ++r) {
        for (int c = 0; c < board.cols; ++c) {
            const Vec2& p = pts[static_cast<std::size_t>(r * board.cols + c)];
            if (c + 1 < board.cols && (pts[static_cast<std::size_t>(r * board.cols + c + 1)] - p).norm() < min_spacing) {
                throw PoseRejectedError("corners closer than the minimum spacing");
            }
            if (r + 1 < board.rows && (pts[static_cast<std::size_t>((r + 1) * board.cols + c)] - p).norm() < min_spacing) {
                throw PoseRejectedError("corners closer than the minimum spacing");
            }
        }
    }
}

Extrinsics sample_pose(const Intrinsics& k, const BoardSpec& board, ImageSize size, std::uint64_t seed,
                       PoseOptions opts) {
    k.validate();
    board.validate();
    Rng rng(seed);
    const double s = board.square_size;
    const Vec3 mid((board.cols - 1) * s / 2.0, (board.rows - 1) * s / 2.0, 0.0);
    const std::array<Vec3, 4> outline = {Vec3(-s, -s, 0), Vec3(board.cols * s, -s, 0),
                                         Vec3(board.cols * s, board.rows * s, 0), Vec3(-s, board.rows * s, 0)};
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double tilt = rng.uniform(0.0, opts.max_tilt_deg) * kDeg;
        const double roll = rng.uniform(-opts.max_roll_deg, opts.max_roll_deg) * kDeg;
        const double fill = rng.uniform(opts.min_fill, opts.max_fill);
        const double ru = rng.uniform();
        const double rv = rng.uniform();

        Extrinsics e;
        e.rotation = (Eigen::AngleAxisd(tilt, Vec3(std::cos(phi), std::sin(phi), 0.0)) *
                      Eigen::AngleAxisd(roll, Vec3::UnitZ()))
                         .toRotationMatrix();
        double depth = k.fx * (board.cols + 1) * s / (fill * size.width);
        double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
        bool ok = true;
        for (int it = 0; it < 4 && ok; ++it) {
            e.translation = Vec3(0.0, 0.0, depth) - e.rotation * mid;
            x0 = y0 = std::numeric_limits<double>::infinity();
            x1 = y1 = -std::numeric_limits<double>::infinity();
            for (const auto& w : outline) {
                const Vec3 pc = e.rotation * w + e.translation;
                if (pc.z() <= 1e-9) {
                    ok = false;
                    break;
                }
                const Vec2 p = project_point(k, e, w);
                x0 = std::min(x0, p.x());
                x1 = std::max(x1, p.x());
                y0 = std::min(y0, p.y());
                y1 = std::max(y1, p.y());
            }
            if (!ok) break;
            const double extent = std::max((x1 - x0) / size.width, (y1 - y0) / size.height);
            depth *= extent / fill;
        }
        if (!ok) continue;
        e.translation = Vec3(0.0, 0.0, depth) - e.rotation * mid;
        // Shift so the checker stays inside the frame.
        const double lo_u = opts.margin - x0, hi_u = size.width - 1 - opts.margin - x1;
        const double lo_v = opts.margin - y0, hi_v = size.height - 1 - opts.margin - y1;
        const double du = lo_u <= hi_u ? lo_u + ru * (hi_u - lo_u) : 0.5 * (lo_u + hi_u);
        const double dv = lo_v <= hi_v ? lo_v + rv * (hi_v - lo_v) : 0.5 * (lo_v + hi_v);
        const double dy = dv * depth / k.fy;
        const double dx = (du * depth - k.skew * dy) / k.fx;
        e.translation += Vec3(dx, dy, 0.0);
        try {
            check_pose(k, e, board, size, opts.margin, opts.min_spacing);
            return e;
        } catch (const PoseRejectedError&) {
        }
    }
    throw PoseRejectedError("no admissible pose after " + std::to_string(opts.max_attempts) + " attempts");
}

SceneSample render_board(const Intrinsics& k, const Extrinsics& e, const BoardSpec& board, ImageSize size,
                         double margin) {
    k.validate();
    e.validate();
    board.validate();
    check_pose(k, e, board, size, margin);

    const Mat3 hinv = board_homography(k, e).matrix().inverse();
    constexpr int kSuper = 4;
    Image img(size.width, size.height);
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            double acc = 0.0;
            for (int j = 0; j < kSuper; ++j) {
                for (int i = 0; i < kSuper; ++i) {
                    const Vec3 q(x + (i + 0.5) / kSuper - 0.5, y + (j + 0.5) / kSuper - 0.5, 1.0);
                    const Vec3 w = hinv * q;
                    // w.z is the inverse depth up to a positive factor.
                    acc += w.z() > 0.0 ? checker_value(w.x() / w.z(), w.y() / w.z(), board) : kBackgroundLevel;
                }
            }
            img(x, y) = acc / (kSuper * kSuper);
        }
    }

    SceneSample s;
    s.intrinsics = k;
    s.extrinsics = e;
    s.board = board;
    s.image = std::move(img);
    s.gt_corners = project_lattice(k, e, board);
    s.undistorted_corners = s.gt_corners;
    s.gt_heatmap = render_heatmap(s.gt_corners, kDefaultSigmaRef, size);
    return s;
}

DistortionLevel parse_distortion_level(const std::string& s) {
    if (s == "none") return DistortionLevel::none;
    if (s == "level1") return DistortionLevel::level1;
    if (s == "level2") return DistortionLevel::level2;
    throw PreconditionError("unknown distortion level '" + s + "' (expected none, level1 or level2)");
}

const char* distortion_level_name(DistortionLevel level) {
    switch (level) {
        case DistortionLevel::none: return "none";
        case DistortionLevel::level1: return "level1";
        case DistortionLevel::level2: return "level2";
    }
    return "none";
}

DistortionModel sample_distortion(DistortionLevel level, ImageSize size, std::uint64_t seed) {
    if (level == DistortionLevel::none) throw PreconditionError("sample_distortion: level none has no model");
    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        DistortionModel m;
        m.center = image_center(size);
        m.r_norm = normalization_radius(size);
        if (level == DistortionLevel::level1) {
            m.k = {1.0, rng.uniform(-0.35, -0.2), rng.uniform(-0.1, 0.0)};
        } else {
            m.k = {rng.uniform(0.8, 1.2), rng.uniform(-0.5, -0.35), rng.uniform(-0.3, -0.1)};
        }
        if (m.is_monotone()) return m;
    }
    throw DegenerateError("sample_distortion: no monotone model after 100 draws");
}

LightingConfig sample_lighting(ImageSize size, std::uint64_t seed) {
    Rng rng(seed);
    LightingConfig l;
    l.center = Vec2(rng.uniform(0.0, size.width - 1.0), rng.uniform(0.0, size.height - 1.0));
    l.radius = rng.uniform(60.0, 240.0);
    l.gain = rng.uniform(0.2, 0.6);
    l.shininess = rng.uniform(2.0, 8.0);
    return l;
}

void AugmentConfig::validate() const {
    if (blur) {
        if (blur->kernel < 1 || blur->kernel % 2 == 0) throw PreconditionError("blur kernel must be odd and positive");
        if (!(blur->sigma > 0.0)) throw PreconditionError("blur sigma must be positive");
    }
    if (lighting) {
        if (!(lighting->radius > 0.0)) throw PreconditionError("lighting radius must be positive");
        if (!std::isfinite(lighting->gain) || !(lighting->shininess > 0.0) || !lighting->center.allFinite()) {
            throw PreconditionError("lighting parameters must be finite with positive shininess");
        }
    }
    if (!(noise_amplitude >= 0.0) || !std::isfinite(noise_amplitude)) {
        throw PreconditionError("noise amplitude must be finite and non-negative");
    }
}

SceneSample augment(const SceneSample& sample, const AugmentConfig& cfg) {
    cfg.validate();
    SceneSample out = sample;
    const ImageSize size = out.image.size();

    if (cfg.lighting) {
        const auto& l = *cfg.lighting;
        for (int y = 0; y < size.height; ++y) {
            for (int x = 0; x < size.width; ++x) {
                const double d = (Vec2(x, y) - l.center).norm();
                const double lobe = std::max(0.0, 1.0 - d / l.radius);
                out.image(x, y) = std::clamp(out.image(x, y) + l.gain * std::pow(lobe, l.shininess), 0.0, 1.0);
            }
        }
    }

    std::optional<DistortionModel> model = cfg.distortion_model;
    if (!model && cfg.distortion_level != DistortionLevel::none) {
        model = sample_distortion(cfg.distortion_level, size, derive_seed(cfg.noise_seed, 1));
    }
    if (model) {
        model->validate();
        Image warped(size.width, size.height);
        for (int y = 0; y < size.height; ++y) {
            for (int x = 0; x < size.width; ++x) {
                const Vec2 p = undistort_point(*model, Vec2(x, y));
                warped(x, y) = sample_bilinear(out.image, p.x(), p.y(), kBackgroundLevel);
            }
        }
        out.image = std::move(warped);
        for (std::size_t i = 0; i < out.gt_corners.size(); ++i) {
            out.gt_corners[i] = distort_point(*model, sample.gt_corners[i]);
            if (!inside(out.gt_corners[i], size, 0.0)) {
                throw PoseRejectedError("distorted corner leaves the image");
            }
        }
        out.gt_heatmap = render_heatmap(out.gt_corners, kDefaultSigmaRef, size);
        out.distortion = model;
    }

    if (cfg.blur) out.image = gaussian_blur(out.image, cfg.blur->kernel, cfg.blur->sigma);

    if (cfg.noise_amplitude > 0.0) {
        Rng rng(derive_seed(cfg.noise_seed, 2));
        for (double& v : out.image.pixels()) {
            v = std::clamp(v + rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude), 0.0, 1.0);
        }
    }
    return out;
}

namespace {

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

const nlohmann::json* find(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double get_number(const nlohmann::json& j, const std::string& prefix, const char* key, double def) {
    const auto* v = find(j, key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(join(prefix, key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(join(prefix, key), "must be finite");
    return d;
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

void reject_unknown(const nlohmann::json& j, const std::string& prefix, std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
        if (!ok) throw ConfigError(join(prefix, key), "unknown field");
    }
}

void require_object(const nlohmann::json& j, const std::string& field) {
    if (!j.is_object()) throw ConfigError(field, "expected an object");
}

}  // namespace

DatasetConfig parse_dataset_config(const nlohmann::json& j) {
    require_object(j, "<root>");
    reject_unknown(j, "", {"samples", "seed", "board", "image_size", "camera_mode", "intrinsics", "distortion", "blur",
                           "lighting", "noise_amplitude", "pose"});
    DatasetConfig c;
    const long long samples = get_integer(j, "", "samples", c.samples);
    if (samples < 1 || samples > 100000) throw ConfigError("samples", "must lie in [1, 100000]");
    c.samples = static_cast<int>(samples);
    if (const auto* v = find(j, "seed")) {
        const bool ok = v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0);
        if (!ok) throw ConfigError("seed", "expected a non-negative integer");
        c.seed = v->get<std::uint64_t>();
    }
    if (const auto* b = find(j, "board")) {
        require_object(*b, "board");
        reject_unknown(*b, "board", {"rows", "cols", "square_size"});
        const long long rows = get_integer(*b, "board", "rows", c.board.rows);
        const long long cols = get_integer(*b, "board", "cols", c.board.cols);
        if (rows < 3 || rows > 1000) throw ConfigError("board.rows", "must lie in [3, 1000]");
        if (cols < 3 || cols > 1000) throw ConfigError("board.cols", "must lie in [3, 1000]");
        c.board.rows = static_cast<int>(rows);
        c.board.cols = static_cast<int>(cols);
        c.board.square_size = get_number(*b, "board", "square_size", c.board.square_size);
        if (!(c.board.square_size > 0.0)) throw ConfigError("board.square_size", "must be positive");
    }
    if (const auto* s = find(j, "image_size")) {
        require_object(*s, "image_size");
        reject_unknown(*s, "image_size", {"width", "height"});
        const long long w = get_integer(*s, "image_size", "width", c.image_size.width);
        const long long h = get_integer(*s, "image_size", "height", c.image_size.height);
        if (w < 32 || w > 8192) throw ConfigError("image_size.width", "must lie in [32, 8192]");
        if (h < 32 || h > 8192) throw ConfigError("image_size.height", "must lie in [32, 8192]");
        c.image_size = {static_cast<int>(w), static_cast<int>(h)};
    }
    if (const auto* m = find(j, "camera_mode")) {
        const std::string mode = m->is_string() ? m->get<std::string>() : "";
        if (mode == "shared") c.camera_mode = CameraMode::shared;
        else if (mode == "per_sample") c.camera_mode = CameraMode::per_sample;
        else throw ConfigError("camera_mode", "expected \"shared\" or \"per_sample\"");
    }
    if (const auto* k = find(j, "intrinsics")) {
        require_object(*k, "intrinsics");
        reject_unknown(*k, "intrinsics", {"fx", "fy", "skew", "px", "py"});
        Intrinsics in;
        for (const char* key : {"fx", "fy", "px", "py"}) {
            if (!find(*k, key)) throw ConfigError(join("intrinsics", key), "missing");
        }
        in.fx = get_number(*k, "intrinsics", "fx", 0.0);
        in.fy = get_number(*k, "intrinsics", "fy", 0.0);
        in.skew = get_number(*k, "intrinsics", "skew", 0.0);
        in.px = get_number(*k, "intrinsics", "px", 0.0);
        in.py = get_number(*k, "intrinsics", "py", 0.0);
        if (!(in.fx > 0.0)) throw ConfigError("intrinsics.fx", "must be positive");
        if (!(in.fy > 0.0)) throw ConfigError("intrinsics.fy", "must be positive");
        c.intrinsics = in;
    }
    if (const auto* d = find(j, "distortion")) {
        try {
            c.distortion = parse_distortion_level(d->is_string() ? d->get<std::string>() : "");
        } catch (const PreconditionError&) {
            throw ConfigError("distortion", "expected \"none\", \"level1\" or \"level2\"");
        }
    }
    c.blur = get_bool(j, "", "blur", c.blur);
    c.lighting = get_bool(j, "", "lighting", c.lighting);
    c.noise_amplitude = get_number(j, "", "noise_amplitude", c.noise_amplitude);
    if (c.noise_amplitude < 0.0 || c.noise_amplitude > 1.0) throw ConfigError("noise_amplitude", "must lie in [0, 1]");
    if (const auto* p = find(j, "pose")) {
        require_object(*p, "pose");
        reject_unknown(*p, "pose",
                       {"max_tilt_deg", "max_roll_deg", "min_fill", "max_fill", "margin", "min_spacing", "max_attempts"});
        auto& o = c.pose;
        o.max_tilt_deg = get_number(*p, "pose", "max_tilt_deg", o.max_tilt_deg);
        o.max_roll_deg = get_number(*p, "pose", "max_roll_deg", o.max_roll_deg);
        o.min_fill = get_number(*p, "pose", "min_fill", o.min_fill);
        o.max_fill = get_number(*p, "pose", "max_fill", o.max_fill);
        o.margin = get_number(*p, "pose", "margin", o.margin);
        o.min_spacing = get_number(*p, "pose", "min_spacing", o.min_spacing);
        const long long attempts = get_integer(*p, "pose", "max_attempts", o.max_attempts);
        if (o.max_tilt_deg < 0.0 || o.max_tilt_deg >= 90.0) throw ConfigError("pose.max_tilt_deg", "must lie in [0, 90)");
        if (o.max_roll_deg < 0.0 || o.max_roll_deg > 180.0) throw ConfigError("pose.max_roll_deg", "must lie in [0, 180]");
        if (!(o.min_fill > 0.0)) throw ConfigError("pose.min_fill", "must be positive");
        if (!(o.max_fill >= o.min_fill && o.max_fill <= 1.0)) throw ConfigError("pose.max_fill", "must lie in [min_fill, 1]");
        if (o.margin < 0.0) throw ConfigError("pose.margin", "must be non-negative");
        if (o.min_spacing < 0.0) throw ConfigError("pose.min_spacing", "must be non-negative");
        if (attempts < 1 || attempts > 1000000) throw ConfigError("pose.max_attempts", "must lie in [1, 1000000]");
        o.max_attempts = static_cast<int>(attempts);
    }
    return c;
}

nlohmann::json dataset_config_json(const DatasetConfig& c) {
    nlohmann::json j = {{"samples", c.samples},
                        {"seed", c.seed},
                        {"board", c.board},
                        {"image_size", {{"width", c.image_size.width}, {"height", c.image_size.height}}},
                        {"camera_mode", c.camera_mode == CameraMode::shared ? "shared" : "per_sample"},
                        {"distortion", distortion_level_name(c.distortion)},
                        {"blur", c.blur},
                        {"lighting", c.lighting},
                        {"noise_amplitude", c.noise_amplitude},
                        {"pose",
                         {{"max_tilt_deg", c.pose.max_tilt_deg},
                          {"max_roll_deg", c.pose.max_roll_deg},
                          {"min_fill", c.pose.min_fill},
                          {"max_fill", c.pose.max_fill},
                          {"margin", c.pose.margin},
                          {"min_spacing", c.pose.min_spacing},
                          {"max_attempts", c.pose.max_attempts}}}};
    if (c.intrinsics) j["intrinsics"] = *c.intrinsics;
    return j;
}

SceneSample generate_sample(const DatasetConfig& c, int index) {
    const std::uint64_t sample_seed = derive_seed(c.seed, static_cast<std::uint64_t>(index));
    Intrinsics k;
    if (c.intrinsics) k = *c.intrinsics;
    else if (c.camera_mode == CameraMode::shared) k = sample_camera(derive_seed(c.seed, kCameraStream));
    else k = sample_camera(derive_seed(sample_seed, 0));

    std::optional<DistortionModel> model;
    if (c.distortion != DistortionLevel::none) {
        const std::uint64_t ds =
            c.camera_mode == CameraMode::shared ? derive_seed(c.seed, kDistortionStream) : derive_seed(sample_seed, 1);
        model = sample_distortion(c.distortion, c.image_size, ds);
    }

    const std::uint64_t pose_seed = derive_seed(sample_seed, 2);
    for (int attempt = 0; attempt < 100; ++attempt) {
        try {
            const Extrinsics e = sample_pose(k, c.board, c.image_size, derive_seed(pose_seed, attempt), c.pose);
            SceneSample s = render_board(k, e, c.board, c.image_size, c.pose.margin);
            AugmentConfig a;
            if (c.blur) a.blur = BlurConfig{};
            if (c.lighting) a.lighting = sample_lighting(c.image_size, derive_seed(sample_seed, 3));
            a.distortion_model = model;
            a.noise_seed = derive_seed(sample_seed, 4);
            a.noise_amplitude = c.noise_amplitude;
            s = augment(s, a);
            const bool ok = std::all_of(s.gt_corners.begin(), s.gt_corners.end(),
                                        [&](const Vec2& p) { return inside(p, c.image_size, c.pose.margin); });
            if (ok) return s;
        } catch (const PoseRejectedError&) {
        }
    }
    throw PoseRejectedError("sample " + std::to_string(index) + ": no admissible pose after 100 attempts");
}

std::vector<SceneSample> generate_samples(const DatasetConfig& c, int threads) {
    std::vector<SceneSample> out(static_cast<std::size_t>(c.samples));
    threads = std::clamp(threads, 1, c.samples);
    if (threads == 1) {
        for (int i = 0; i < c.samples; ++i) out[i] = generate_sample(c, i);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < c.samples; i += threads) out[i] = generate_sample(c, i);
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

std::string sample_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%04d", index);
    return buf;
}

namespace {

nlohmann::json points_json(const Points2& pts) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : pts) a.push_back({p.x(), p.y()});
    return a;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("failed writing: " + path.string());
}

}  // namespace

nlohmann::json ground_truth_json(const DatasetConfig& c, const std::vector<SceneSample>& samples) {
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const std::string stem = sample_stem(static_cast<int>(i));
        list.push_back({{"index", i},
                        {"image", "images/" + stem + ".png"},
                        {"heatmap", "heatmaps/" + stem + ".hmap"},
                        {"intrinsics", s.intrinsics},
                        {"extrinsics", s.extrinsics},
                        {"corners", points_json(s.gt_corners)},
                        {"undistorted_corners", points_json(s.undistorted_corners)},
                        {"distortion", s.distortion ? nlohmann::json(*s.distortion) : nlohmann::json(nullptr)}});
    }
    return {{"board", c.board},
            {"image_size", {{"width", c.image_size.width}, {"height", c.image_size.height}}},
            {"heatmap_sigma", kDefaultSigmaRef},
            {"seed", c.seed},
            {"samples", list}};
}

nlohmann::json generate_dataset(const DatasetConfig& c, const std::filesystem::path& out_dir, int threads) {
    const auto samples = generate_samples(c, threads);
    std::error_code ec;
    for (const auto& sub : {out_dir / "images", out_dir / "heatmaps"}) {
        std::filesystem::create_directories(sub, ec);
        if (ec) throw IoError("cannot create directory " + sub.string() + ": " + ec.message());
    }
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string stem = sample_stem(static_cast<int>(i));
        write_png(out_dir / "images" / (stem + ".png"), samples[i].image);
        write_hmap(out_dir / "heatmaps" / (stem + ".hmap"), samples[i].gt_heatmap);
        files.push_back("images/" + stem + ".png");
        files.push_back("heatmaps/" + stem + ".hmap");
    }
    write_text(out_dir / "gt.json", ground_truth_json(c, samples).dump(2) + "\n");
    files.push_back("gt.json");
    const nlohmann::json manifest = {
        {"seed", c.seed}, {"samples", c.samples}, {"ground_truth", "gt.json"}, {"files", files},
        {"config", dataset_config_json(c)}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace hybridcal
