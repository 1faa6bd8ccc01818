#pragma once

#include <array>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/image.h"
#include "hybridcal/types.h"

namespace hybridcal {

// Normalized radius up to which a model must be valid. With the default
// normalization (r_norm = image diagonal) the image corners sit at 0.5, and
// the bound adds a 5% margin.
inline constexpr double kDefaultModelDomain = 0.525;

// Forward radial model: r_d = r_c * (k0 + k1 r_c^2 + k2 r_c^4), radii
// normalized by r_norm about `center`.
struct DistortionModel {
    std::array<double, 3> k{1.0, 0.0, 0.0};
    Vec2 center = Vec2::Zero();
    double r_norm = 1.0;
    double domain = kDefaultModelDomain;

    // Radial factor r_d / r_c at normalized radius r.
    double factor(double r) const { return k[0] + k[1] * r * r + k[2] * r * r * r * r; }
    double radius(double r) const { return r * factor(r); }

    // Throws PreconditionError unless r_norm > 0 and r -> r_d is strictly
    // increasing on [0, domain], checked by sampling at step 1e-3.
    void validate() const;
    bool is_monotone() const;
};

// Correction model: r_c = r_d * (k0' + k1' r_d + k2' r_d^2 + k3' r_d^3 + k4' r_d^4).
struct CorrectionModel {
    std::array<double, 5> kp{1.0, 0.0, 0.0, 0.0, 0.0};
    Vec2 center = Vec2::Zero();
    double r_norm = 1.0;
    double domain = kDefaultModelDomain;

    double factor(double r) const {
        return kp[0] + r * (kp[1] + r * (kp[2] + r * (kp[3] + r * kp[4])));
    }
    double radius(double r) const { return r * factor(r); }

    void validate() const;
    bool is_monotone() const;
};

// Default normalization for an image: centre of the pixel grid, r_norm equal
// to the image diagonal.
Vec2 image_center(ImageSize size);
double normalization_radius(ImageSize size);

Vec2 distort_point(const DistortionModel& m, const Vec2& p);
Vec2 correct_point(const CorrectionModel& c, const Vec2& p);

// Numerical inverses (monotone bracketing + Newton). Valid inside the model domain.
Vec2 undistort_point(const DistortionModel& m, const Vec2& p);
Vec2 uncorrect_point(const CorrectionModel& c, const Vec2& p);

struct CorrectionFit {
    CorrectionModel model;
    double max_residual = 0.0;  // max |r_c - r_d * poly(r_d)| over the samples (normalized)
};

// Least-squares degree-5 correction inverting `m` over [0, m.domain].
CorrectionFit fit_correction_model(const DistortionModel& m, int n_samples = 256);

struct LineCorrectionOptions {
    int max_iterations = 200;
    double tolerance = 1e-12;
};

struct LineCorrectionResult {
    CorrectionModel model;
    double rms_residual = 0.0;  // RMS perpendicular distance (px) of corrected points to their lines
    int iterations = 0;
    bool converged = false;
};

// Correction that straightens the given point sets (each one a projected
// straight line). k0' stays fixed at 1 because a uniform scale leaves lines
// straight.
LineCorrectionResult estimate_correction_from_lines(std::span<const Points2> lines, const Vec2& center,
                                                    double r_norm, LineCorrectionOptions opts = {});

// Resample `img` so the output is the corrected view: output pixel p reads the
// input at the distorted-side location uncorrect_point(c, p), bilinearly.
// Out-of-bounds reads give 0.
Image warp_image(const Image& img, const CorrectionModel& c);

// Mean L1 distance between corresponding points.
double grid_loss(std::span<const Vec2> p_dst, std::span<const Vec2> p_cor);

void to_json(nlohmann::json& j, const DistortionModel& m);
void from_json(const nlohmann::json& j, DistortionModel& m);
void to_json(nlohmann::json& j, const CorrectionModel& c);
void from_json(const nlohmann::json& j, CorrectionModel& c);

}  // namespace hybridcal
