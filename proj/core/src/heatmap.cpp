#include "hybridcal/heatmap.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace hybridcal {

namespace {

double clamp_unit(double v) {
    if (!std::isfinite(v)) throw PreconditionError("heatmap values must be finite");
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace

Heatmap::Heatmap(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw PreconditionError("heatmap dimensions must be non-negative");
    values_.assign(static_cast<std::size_t>(width) * height, 0.0);
}

Heatmap::Heatmap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 0 || height < 0 || values_.size() != static_cast<std::size_t>(width) * height) {
        throw PreconditionError("heatmap value count does not match its dimensions");
    }
    for (double& v : values_) v = clamp_unit(v);
}

Heatmap::Heatmap(const Image& img) : Heatmap(img.width(), img.height(), img.pixels()) {}

Heatmap render_heatmap(std::span<const Vec2> corners, double sigma_ref, ImageSize size) {
    if (!(sigma_ref > 0.0)) throw PreconditionError("render_heatmap: sigma must be positive");
    std::vector<double> values(static_cast<std::size_t>(size.width) * size.height, 0.0);
    const double cutoff = 5.0 * sigma_ref;
    const double inv = 1.0 / (2.0 * sigma_ref * sigma_ref);
    for (const auto& mu : corners) {
        const int x0 = std::max(0, static_cast<int>(std::floor(mu.x() - cutoff)));
        const int x1 = std::min(size.width - 1, static_cast<int>(std::ceil(mu.x() + cutoff)));
        const int y0 = std::max(0, static_cast<int>(std::floor(mu.y() - cutoff)));
        const int y1 = std::min(size.height - 1, static_cast<int>(std::ceil(mu.y() + cutoff)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - mu.x();
                const double dy = y - mu.y();
                const double d2 = dx * dx + dy * dy;
                if (d2 > cutoff * cutoff) continue;
                double& v = values[static_cast<std::size_t>(y) * size.width + x];
                v = std::max(v, std::exp(-d2 * inv));
            }
        }
    }
    return Heatmap(size.width, size.height, std::move(values));
}

double heatmap_mse(const Heatmap& a, const Heatmap& b) {
    if (a.size() != b.size()) throw PreconditionError("heatmap_mse: dimension mismatch");
    if (a.values().empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.values().size());
}

std::vector<Peak> detect_peaks(const Heatmap& h, double threshold, double min_separation) {
    std::vector<Peak> cand;
    for (int y = 0; y < h.height(); ++y) {
        for (int x = 0; x < h.width(); ++x) {
            const double v = h(x, y);
            if (v < threshold || v <= 0.0) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= h.width() || ny >= h.height()) continue;
                    const double nv = h(nx, ny);
                    const bool earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (earlier ? nv >= v : nv > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) cand.push_back({x, y, v});
        }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    std::vector<Peak> kept;
    const double sep2 = min_separation * min_separation;
    for (const auto& p : cand) {
        const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Peak& k) {
            const double dx = k.x - p.x;
            const double dy = k.y - p.y;
            return dx * dx + dy * dy < sep2;
        });
        if (clear) kept.push_back(p);
    }
    return kept;
}

CornerObservation fit_gaussian_surface(const Heatmap& h, int peak_x, int peak_y, int window) {
    if (window < 5 || window % 2 == 0) throw PreconditionError("fit_gaussian_surface: window must be odd and >= 5");
    if (peak_x < 0 || peak_y < 0 || peak_x >= h.width() || peak_y >= h.height()) {
        throw PreconditionError("fit_gaussian_surface: peak outside the heatmap");
    }
    const int half = std::min({window / 2, peak_x, peak_y, h.width() - 1 - peak_x, h.height() - 1 - peak_y});
    if (half < 2) throw FitError("fit_gaussian_surface: peak too close to the border for a 5x5 window");

    const double floor_value = std::max(0.05 * h(peak_x, peak_y), 1e-6);
    struct Sample {
        double x, y, v;
    };
    std::vector<Sample> samples;
    for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
            const double v = h(peak_x + dx, peak_y + dy);
            if (v > floor_value) samples.push_back({static_cast<double>(dx), static_cast<double>(dy), v});
        }
    }
    if (samples.size() < 6) throw FitError("fit_gaussian_surface: fewer than 6 usable pixels");

    const auto n = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd b(n, 5);
    Eigen::VectorXd a(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[i];
        b.row(i) << s.v, s.v * s.x, s.v * s.y, s.v * s.x * s.x, s.v * s.y * s.y;
        a(i) = s.v * std::log(s.v);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv(4) > 1e-12 * sv(0))) throw FitError("fit_gaussian_surface: rank-deficient system");
    const Eigen::VectorXd c = svd.solve(a);

    CornerObservation obs;
    double rss = 0.0;
    for (const auto& s : samples) {
        const double model = std::exp(c(0) + c(1) * s.x + c(2) * s.y + c(3) * s.x * s.x + c(4) * s.y * s.y);
        rss += (s.v - model) * (s.v - model);
    }
    obs.fit_residual = std::sqrt(rss / static_cast<double>(samples.size()));

    // c3 = -1 / (2 sx^2), c1 = mu_x / sx^2 (and likewise for y).
    if (!(c(3) < 0.0) || !(c(4) < 0.0)) {
        obs.mu = Vec2(peak_x, peak_y);
        obs.sigma = Vec2::Constant(std::numeric_limits<double>::infinity());
        obs.status = ObservationStatus::rejected_residual;
        return obs;
    }
    const double vx = -1.0 / (2.0 * c(3));
    const double vy = -1.0 / (2.0 * c(4));
    obs.mu = Vec2(peak_x + c(1) * vx, peak_y + c(2) * vy);
    obs.sigma = Vec2(std::sqrt(vx), std::sqrt(vy));
    obs.status = ObservationStatus::inlier;
    if (!obs.mu.allFinite()) throw FitError("fit_gaussian_surface: non-finite centre");
    return obs;
}

std::vector<CornerObservation> reject_outliers(std::span<const CornerObservation> obs, const RejectionParams& params) {
    if (!(params.tau > 1.0)) throw PreconditionError("reject_outliers: tau must exceed 1");
    const double lo = params.sigma_ref / params.tau;
    const double hi = params.sigma_ref * params.tau;
    std::vector<CornerObservation> out(obs.begin(), obs.end());
    for (auto& o : out) {
        if (o.status == ObservationStatus::rejected_residual && !o.sigma.allFinite()) continue;
        const bool sigma_ok = o.sigma.x() >= lo && o.sigma.x() <= hi && o.sigma.y() >= lo && o.sigma.y() <= hi;
        if (!sigma_ok) {
            o.status = ObservationStatus::rejected_sigma;
        } else if (!(o.fit_residual <= params.residual_max)) {
            o.status = ObservationStatus::rejected_residual;
        } else {
            o.status = ObservationStatus::inlier;
        }
    }
    return out;
}

namespace {

struct AngularKernels {
    int radius = 0;
    std::vector<double> sin2;  // g(r) sin(2 phi)
    std::vector<double> cos2;  // g(r) cos(2 phi)
    double norm_sin = 0.0;
    double norm_cos = 0.0;
};

AngularKernels make_kernels(int radius) {
    AngularKernels k;
    k.radius = radius;
    const int size = 2 * radius + 1;
    const double s = 0.5 * radius;
    k.sin2.resize(static_cast<std::size_t>(size) * size);
    k.cos2.resize(k.sin2.size());
    for (int y = -radius; y <= radius; ++y) {
        for (int x = -radius; x <= radius; ++x) {
            const double r2 = x * x + y * y;
            const std::size_t i = static_cast<std::size_t>(y + radius) * size + (x + radius);
            if (r2 == 0.0) {
                k.sin2[i] = k.cos2[i] = 0.0;
                continue;
            }
            const double g = std::exp(-r2 / (2.0 * s * s));
            k.sin2[i] = g * 2.0 * x * y / r2;
            k.cos2[i] = g * (x * x - y * y) / r2;
        }
    }
    for (std::size_t i = 0; i < k.sin2.size(); ++i) {
        k.norm_sin += k.sin2[i] * k.sin2[i];
        k.norm_cos += k.cos2[i] * k.cos2[i];
    }
    k.norm_sin = std::sqrt(k.norm_sin);
    k.norm_cos = std::sqrt(k.norm_cos);
    return k;
}

// Raw response at (cx, cy); 0 where the window leaves the image or is flat.
double raw_response(const Image& img, const AngularKernels& k, int cx, int cy, double sum, double sum_sq) {
    const int r = k.radius;
    const int size = 2 * r + 1;
    const double n = static_cast<double>(size) * size;
    const double var = sum_sq - sum * sum / n;
    // Below ~1e-3 std the window is flat up to quantization and rounding.
    if (!(var > 1e-6 * n)) return 0.0;
    double a = 0.0, b = 0.0;
    for (int y = -r; y <= r; ++y) {
        const std::size_t row = static_cast<std::size_t>(y + r) * size;
        for (int x = -r; x <= r; ++x) {
            const double v = img(cx + x, cy + y);
            a += k.sin2[row + x + r] * v;
            b += k.cos2[row + x + r] * v;
        }
    }
    const double sd = std::sqrt(var);
    const double na = a / (k.norm_sin * sd);
    const double nb = b / (k.norm_cos * sd);
    return std::sqrt(na * na + nb * nb);
}

// Response of an ideal junction at the kernel centre; scales responses to [0, 1].
double ideal_response(const AngularKernels& k) {
    const int r = k.radius;
    const int size = 2 * r + 1;
    Image pattern(size, size);
    double sum = 0.0, sum_sq = 0.0;
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            // 45-degree junction so that no pixel sits on an edge.
            const double u = x + y;
            const double v = x - y;
            const double val = (u == 0.0 || v == 0.0) ? 0.5 : ((u > 0) == (v > 0) ? 1.0 : 0.0);
            pattern(x + r, y + r) = val;
            sum += val;
            sum_sq += val * val;
        }
    }
    return raw_response(pattern, k, r, r, sum, sum_sq);
}

constexpr int kPreSmoothKernel = 7;
constexpr double kPreSmoothSigma = 1.0;

}  // namespace

Heatmap response_detect(const Image& input, int kernel_radius) {
    if (kernel_radius < 1) throw PreconditionError("response_detect: kernel radius must be positive");
    if (input.width() <= 2 * kernel_radius + 1 || input.height() <= 2 * kernel_radius + 1) {
        throw PreconditionError("response_detect: image smaller than the kernel");
    }
    const AngularKernels k = make_kernels(kernel_radius);
    const double scale = 1.0 / ideal_response(k);
    const Image img = gaussian_blur(input, kPreSmoothKernel, kPreSmoothSigma);

    const int w = img.width();
    const int h = img.height();
    // Integral images of I and I^2 for the window statistics.
    std::vector<double> s1(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    std::vector<double> s2(s1.size(), 0.0);
    auto at = [w](std::vector<double>& s, int x, int y) -> double& { return s[static_cast<std::size_t>(y) * (w + 1) + x]; };
    for (int y = 0; y < h; ++y) {
        double r1 = 0.0, r2 = 0.0;
        for (int x = 0; x < w; ++x) {
            r1 += img(x, y);
            r2 += img(x, y) * img(x, y);
            at(s1, x + 1, y + 1) = at(s1, x + 1, y) + r1;
            at(s2, x + 1, y + 1) = at(s2, x + 1, y) + r2;
        }
    }
    auto box = [&](std::vector<double>& s, int x0, int y0, int x1, int y1) {
        return at(s, x1 + 1, y1 + 1) - at(s, x0, y1 + 1) - at(s, x1 + 1, y0) + at(s, x0, y0);
    };

    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    const int r = kernel_radius;
    for (int y = r; y < h - r; ++y) {
        for (int x = r; x < w - r; ++x) {
            const double sum = box(s1, x - r, y - r, x + r, y + r);
            const double sum_sq = box(s2, x - r, y - r, x + r, y + r);
            const double r = std::min(1.0, scale * raw_response(img, k, x, y, sum, sum_sq));
            out[static_cast<std::size_t>(y) * w + x] = r * r * r * r;
        }
    }
    return Heatmap(w, h, std::move(out));
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_hmap(const std::filesystem::path& path, const Heatmap& h) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open heatmap for writing: " + path.string());
    out.write("HMAP", 4);
    put_u32(out, static_cast<std::uint32_t>(h.width()));
    put_u32(out, static_cast<std::uint32_t>(h.height()));
    for (double v : h.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!out) throw IoError("failed writing heatmap: " + path.string());
}

Heatmap read_hmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open heatmap: " + path.string());
    unsigned char header[12];
    in.read(reinterpret_cast<char*>(header), 12);
    if (in.gcount() != 12 || std::memcmp(header, "HMAP", 4) != 0) {
        throw IoError("not an HMAP file: " + path.string());
    }
    const std::uint32_t w = get_u32(header + 4);
    const std::uint32_t h = get_u32(header + 8);
    const std::size_t count = static_cast<std::size_t>(w) * h;
    std::vector<unsigned char> bytes(count * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw IoError("truncated HMAP file: " + path.string());
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(bytes.data() + 4 * i));
    try {
        return Heatmap(static_cast<int>(w), static_cast<int>(h), std::move(values));
    } catch (const PreconditionError& e) {
        throw IoError("invalid HMAP payload in " + path.string() + ": " + e.what());
    }
}

const char* status_name(ObservationStatus s) {
    switch (s) {
        case ObservationStatus::inlier: return "inlier";
        case ObservationStatus::rejected_sigma: return "rejected_sigma";
        case ObservationStatus::rejected_residual: return "rejected_residual";
        case ObservationStatus::recovered: return "recovered";
    }
    return "inlier";
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double from_nullable(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const CornerObservation& o) {
    j = {{"mu", {o.mu.x(), o.mu.y()}},
         {"sigma", {finite_or_null(o.sigma.x()), finite_or_null(o.sigma.y())}},
         {"residual", finite_or_null(o.fit_residual)},
         {"status", status_name(o.status)}};
}

void from_json(const nlohmann::json& j, CornerObservation& o) {
    o.mu = Vec2(j.at("mu").at(0).get<double>(), j.at("mu").at(1).get<double>());
    o.sigma = Vec2(from_nullable(j.at("sigma").at(0)), from_nullable(j.at("sigma").at(1)));
    o.fit_residual = from_nullable(j.at("residual"));
    const auto s = j.at("status").get<std::string>();
    if (s == "inlier") o.status = ObservationStatus::inlier;
    else if (s == "rejected_sigma") o.status = ObservationStatus::rejected_sigma;
    else if (s == "rejected_residual") o.status = ObservationStatus::rejected_residual;
    else if (s == "recovered") o.status = ObservationStatus::recovered;
    else throw PreconditionError("unknown observation status '" + s + "'");
}

}  // namespace hybridcal
