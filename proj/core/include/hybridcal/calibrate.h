#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hybridcal/camgeom.h"
#include "hybridcal/corner_grid.h"
#include "hybridcal/types.h"

namespace hybridcal {

struct CalibrationResult {
    Intrinsics intrinsics;
    std::vector<Extrinsics> extrinsics;  // one per input image
    double rpe = 0.0;                    // mean Euclidean px over the corners of the inlier images
    std::vector<double> per_image_rpe;   // mean Euclidean px, one per input image
    std::vector<int> inlier_images;      // ascending
    bool converged = false;
    int iterations = 0;                  // accepted refinement steps
};

struct CalibrationOptions {
    bool refine = true;
    bool fix_skew = false;  // skew held at 0 in both the closed form and the refinement
    int max_iterations = 100;
};

// Closed-form Zhang estimate from >= 3 grids, optionally refined jointly.
CalibrationResult calibrate_zhang(std::span<const CornerGrid> grids, const BoardSpec& board,
                                  CalibrationOptions opts = {});

// Parameter vector layout: [fx, fy, skew, px, py, then per image
// (axis-angle w, translation t)].
Eigen::VectorXd pack_parameters(const Intrinsics& k, std::span<const Extrinsics> extrinsics);
void unpack_parameters(const Eigen::VectorXd& p, Intrinsics& k, std::vector<Extrinsics>& extrinsics);

// Stacked (projected - observed) pairs over the valid cells of every grid,
// grid by grid in row-major cell order.
Eigen::VectorXd reprojection_residuals(const Eigen::VectorXd& p, std::span<const CornerGrid> grids,
                                       const BoardSpec& board);
// Analytic derivative of reprojection_residuals with respect to p.
Eigen::MatrixXd reprojection_jacobian(const Eigen::VectorXd& p, std::span<const CornerGrid> grids,
                                      const BoardSpec& board);

struct RefineOptions {
    int max_iterations = 100;
    bool fix_skew = false;
    bool fix_intrinsics = false;  // pose-only refinement
    // Receives the mean squared objective at the start and after every
    // accepted step.
    std::vector<double>* objective_trace = nullptr;
};

// Levenberg-Marquardt on the mean squared reprojection error. Returns the
// best iterate; converged is false when the iteration budget runs out or the
// damping overflows before the stopping tests pass.
CalibrationResult refine_parameters(const CalibrationResult& initial, std::span<const CornerGrid> grids,
                                    const BoardSpec& board, RefineOptions opts = {});

// Mean Euclidean reprojection error of one grid.
double image_rpe(const Intrinsics& k, const Extrinsics& e, const CornerGrid& grid, const BoardSpec& board);

// Pose of one image under fixed intrinsics: homography decomposition followed
// by pose-only refinement.
Extrinsics estimate_pose(const Intrinsics& k, const CornerGrid& grid, const BoardSpec& board);

struct RansacConfig {
    int subset_size = 5;
    double rpe_threshold = 1.0;
    double min_inlier_fraction = 0.8;
    int max_trials = 50;
    std::uint64_t seed = 0;
    void validate() const;
};

// No RANSAC trial reached subset_size inliers.
class RansacError : public Error {
public:
    using Error::Error;
};

// Image-level RANSAC. Trial t draws its subset from derive_seed(seed, t); the
// first trial (in index order) whose inlier count reaches
// ceil(min_inlier_fraction * N) wins, otherwise the trial with the most
// inliers (ties: lowest mean inlier RPE, then lowest index). The result is
// refit on the winning inlier set. `threads` changes only the speed.
CalibrationResult ransac_calibrate(std::span<const CornerGrid> grids, const BoardSpec& board, const RansacConfig& cfg,
                                   CalibrationOptions opts = {}, int threads = 1);

struct IntrinsicsMetrics {
    double e_fl = 0.0;  // |fx - fx'| + |fy - fy'|
    double e_pp = 0.0;  // |px - px'| + |py - py'|
    double e_ip = 0.0;  // (e_fl + e_pp) / 2
};

IntrinsicsMetrics intrinsics_metrics(const Intrinsics& gt, const Intrinsics& est);

void to_json(nlohmann::json& j, const CalibrationResult& r);
void from_json(const nlohmann::json& j, CalibrationResult& r);
void to_json(nlohmann::json& j, const RansacConfig& c);
void from_json(const nlohmann::json& j, RansacConfig& c);

}  // namespace hybridcal
