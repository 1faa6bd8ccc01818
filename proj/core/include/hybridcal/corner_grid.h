#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridcal/types.h"

namespace hybridcal {

enum class Provenance : std::uint8_t {
    missing,    // no position; the cell is invalid
    detected,   // position comes from the detector
    recovered,  // position reconstructed from the lattice lines
};

// Row/column ordered lattice of interior board corners. Cell (r, c) holds the
// image of world point (c * square, r * square, 0).
struct CornerGrid {
    int rows = 0;
    int cols = 0;
    std::vector<Vec2> points;          // rows * cols, row-major
    std::vector<Provenance> provenance;  // rows * cols, row-major

    CornerGrid() = default;
    CornerGrid(int rows, int cols);

    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
    bool valid(int r, int c) const { return provenance[index(r, c)] != Provenance::missing; }
    const Vec2& at(int r, int c) const { return points[index(r, c)]; }

    void set(int r, int c, const Vec2& p, Provenance prov = Provenance::detected);
    void invalidate(int r, int c);

    int valid_count() const;
    int cell_count() const { return rows * cols; }
};

// Complete grid from a row-major point list of length rows * cols.
CornerGrid make_full_grid(int rows, int cols, const Points2& row_major);

void to_json(nlohmann::json& j, const CornerGrid& g);
void from_json(const nlohmann::json& j, CornerGrid& g);

}  // namespace hybridcal
