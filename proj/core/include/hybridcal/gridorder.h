#pragma once

#include <span>
#include <vector>

#include "hybridcal/corner_grid.h"
#include "hybridcal/types.h"

namespace hybridcal {

// Line n . p = d with unit normal n.
struct Line2D {
    Vec2 normal = Vec2::UnitY();
    double offset = 0.0;

    double signed_distance(const Vec2& p) const { return normal.dot(p) - offset; }
};

// Orthogonal-regression line: through the centroid, normal along the
// smallest-eigenvalue eigenvector of the scatter matrix.
Line2D fit_line_tls(std::span<const Vec2> points);

Vec2 intersect_lines(const Line2D& a, const Line2D& b);

struct SortOptions {
    double cell_tolerance = 0.3;         // max distance (cells) from a lattice node
    double edge_angle_deg = 15.0;        // edge-neighbour cone around the hull edge
    double degenerate_angle_deg = 165.0;  // interior hull angle treated as no corner
};

// Orders an unordered set of (undistorted) lattice corners into a rows x cols
// grid. Cell (0, 0) is the extreme point with minimal x + y among the
// orientations consistent with the board dimensions and handedness.
CornerGrid sort_corners(std::span<const Vec2> points, int rows, int cols, SortOptions opts = {});

// Replaces every cell with the intersection of its row and column TLS lines
// and fills cells that were missing. Rows/columns with fewer than two valid
// points are left untouched.
CornerGrid collineation_refine(const CornerGrid& grid);

// Groups lattice points into row and column point sets without assuming
// straight lines, by growing the lattice from the point nearest `seed` using
// local neighbour predictions. Used to harvest curved lines from distorted
// views. Sets with fewer than `min_points` members are dropped.
std::vector<Points2> group_lattice_lines(std::span<const Vec2> points, const Vec2& seed, std::size_t min_points = 5);

}  // namespace hybridcal
