#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/corner_grid.h"
#include "hybridcal/types.h"

namespace hybridcal {

// Pinhole intrinsics. `skew` is the K(0,1) entry.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double skew = 0.0;
    double px = 0.0;
    double py = 0.0;

    Mat3 matrix() const;
    // Throws PreconditionError unless fx > 0, fy > 0 and every field is finite.
    void validate() const;

    friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// World (board) frame to camera frame.
struct Extrinsics {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    // Throws PreconditionError unless R^T R = I and det R = +1 within 1e-9.
    void validate() const;
};

// Projective map between the board plane and the image, stored at canonical
// scale: unit Frobenius norm and non-negative (2,2) entry.
class Homography {
public:
    Homography() : h_(Mat3::Identity() / std::sqrt(3.0)) {}
    explicit Homography(const Mat3& h);

    const Mat3& matrix() const { return h_; }
    Vec2 apply(const Vec2& p) const;
    Homography inverse() const;

private:
    Mat3 h_;
};

struct BoardSpec {
    int rows = 8;   // interior corners along the vertical board axis
    int cols = 11;  // interior corners along the horizontal board axis
    double square_size = 1.0;

    void validate() const;
    int corner_count() const { return rows * cols; }
    Vec3 world_point(int r, int c) const { return {c * square_size, r * square_size, 0.0}; }

    friend bool operator==(const BoardSpec&, const BoardSpec&) = default;
};

Vec2 project_point(const Intrinsics& k, const Extrinsics& e, const Vec3& world);

// Analytic board-to-image homography K [r1 r2 t].
Homography board_homography(const Intrinsics& k, const Extrinsics& e);

// Normalized DLT (Hartley isotropic conditioning) from >= 4 correspondences.
Homography estimate_homography_dlt(std::span<const Vec2> world, std::span<const Vec2> image);

struct IntrinsicsOptions {
    // Adds the B12 = 0 constraint; allows solving from two homographies.
    bool fix_skew = false;
};

// Closed-form K from the absolute-conic constraints of >= 3 board homographies.
Intrinsics intrinsics_from_homographies(std::span<const Homography> hs, IntrinsicsOptions opts = {});

// Pose from H = K [r1 r2 t] with lambda = 1 / |K^-1 h1|, t_z > 0 and the
// rotation projected onto SO(3).
Extrinsics extrinsics_from_homography(const Intrinsics& k, const Homography& h);

// Closest rotation in Frobenius norm (det +1).
Mat3 nearest_rotation(const Mat3& m);

enum class RpeMode {
    mean_euclidean,  // mean of |p - proj| in px
    mean_squared,    // (1/NM) sum |p - proj|^2 in px^2
};

double reprojection_error(const Intrinsics& k, std::span<const Extrinsics> extrinsics,
                          std::span<const CornerGrid> grids, const BoardSpec& board,
                          RpeMode mode = RpeMode::mean_euclidean);

// Valid cells of a grid as (board plane, image) correspondences.
void grid_correspondences(const CornerGrid& grid, const BoardSpec& board, Points2& world,
                          Points2& image);

void to_json(nlohmann::json& j, const Intrinsics& k);
void from_json(const nlohmann::json& j, Intrinsics& k);
void to_json(nlohmann::json& j, const Extrinsics& e);
void from_json(const nlohmann::json& j, Extrinsics& e);
void to_json(nlohmann::json& j, const BoardSpec& b);
void from_json(const nlohmann::json& j, BoardSpec& b);

}  // namespace hybridcal
