#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/image.h"
#include "hybridcal/types.h"

namespace hybridcal {

// Corner-likelihood raster. Values are finite and clamped to [0, 1].
class Heatmap {
public:
    Heatmap() = default;
    Heatmap(int width, int height);
    Heatmap(int width, int height, std::vector<double> values);
    explicit Heatmap(const Image& img);

    int width() const { return width_; }
    int height() const { return height_; }
    ImageSize size() const { return {width_, height_}; }

    double operator()(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    const std::vector<double>& values() const { return values_; }

    Image to_image() const { return Image(width_, height_, values_); }

    friend bool operator==(const Heatmap&, const Heatmap&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

enum class ObservationStatus { inlier, rejected_sigma, rejected_residual, recovered };

struct CornerObservation {
    Vec2 mu = Vec2::Zero();     // sub-pixel centre
    Vec2 sigma = Vec2::Ones();  // per-axis standard deviation (px)
    double fit_residual = 0.0;  // RMS of heatmap minus fitted surface
    ObservationStatus status = ObservationStatus::inlier;
};

// The local surface cannot be fitted (too few usable pixels, rank-deficient system).
class FitError : public DegenerateError {
public:
    using DegenerateError::DegenerateError;
};

inline constexpr double kDefaultSigmaRef = 1.5;
inline constexpr int kDefaultFitWindow = 7;

// Each corner becomes exp(-|p - mu|^2 / (2 sigma^2)), truncated beyond
// 5 sigma; overlaps combine by per-pixel max.
Heatmap render_heatmap(std::span<const Vec2> corners, double sigma_ref, ImageSize size);

// Mean squared per-pixel difference.
double heatmap_mse(const Heatmap& a, const Heatmap& b);

struct Peak {
    int x = 0;
    int y = 0;
    double value = 0.0;
};

// Local maxima over 3x3 neighbourhoods with value >= threshold, suppressed
// greedily within min_separation. Plateau ties go to the first pixel in
// row-major order. Output is sorted by descending value, then row-major.
std::vector<Peak> detect_peaks(const Heatmap& h, double threshold, double min_separation);

// Log-linear Gaussian surface fit around an integer peak: rows
// I ln I = [I, I x, I y, I x^2, I y^2] . c over the window pixels whose value
// exceeds max(0.05 * peak, 1e-6), solved by SVD least squares. A surface
// with non-negative curvature is returned with status rejected_residual and
// infinite sigma.
CornerObservation fit_gaussian_surface(const Heatmap& h, int peak_x, int peak_y, int window = kDefaultFitWindow);

struct RejectionParams {
    double sigma_ref = kDefaultSigmaRef;
    double tau = 2.0;
    double residual_max = 0.05;
};

// Marks an observation inlier iff both sigmas lie in [sigma_ref / tau,
// sigma_ref * tau] and its fit residual is at most residual_max. Order and
// positions are preserved.
std::vector<CornerObservation> reject_outliers(std::span<const CornerObservation> obs, const RejectionParams& params);

// Orientation-invariant checkerboard-junction response. The image is
// smoothed (sigma 1 px), correlated with the second-order angular kernels
// g(r) sin(2 phi) and g(r) cos(2 phi) (normalized cross-correlation), and the
// magnitude, scaled so an ideal junction scores 1, is raised to the 4th power.
// The power leaves peak locations unchanged but makes peaks close to Gaussian.
Heatmap response_detect(const Image& img, int kernel_radius = 5);

// "HMAP" | u32 LE width | u32 LE height | width*height float32 LE row-major.
void write_hmap(const std::filesystem::path& path, const Heatmap& h);
Heatmap read_hmap(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const CornerObservation& o);
void from_json(const nlohmann::json& j, CornerObservation& o);

const char* status_name(ObservationStatus s);

}  // namespace hybridcal
