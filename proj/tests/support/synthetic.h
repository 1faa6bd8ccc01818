#pragma once

#include <cstdint>
#include <vector>

#include "hybridcal/camgeom.h"
#include "hybridcal/corner_grid.h"
#include "hybridcal/rng.h"
#include "hybridcal/synthgen.h"

namespace hybridcal::testing {

inline CornerGrid project_grid(const Intrinsics& k, const Extrinsics& e, const BoardSpec& board) {
    CornerGrid g(board.rows, board.cols);
    for (int r = 0; r < board.rows; ++r) {
        for (int c = 0; c < board.cols; ++c) g.set(r, c, project_point(k, e, board.world_point(r, c)));
    }
    return g;
}

inline CornerGrid with_noise(CornerGrid g, double sigma, Rng& rng) {
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (!g.valid(r, c)) continue;
            g.set(r, c, g.at(r, c) + sigma * Vec2(rng.normal(), rng.normal()), g.provenance[g.index(r, c)]);
        }
    }
    return g;
}

struct SyntheticViews {
    Intrinsics k;
    BoardSpec board;
    std::vector<Extrinsics> poses;
    std::vector<CornerGrid> grids;  // exact projections
};

// `views` poses of one sampled camera, drawn with the generator's pose sampler.
inline SyntheticViews make_views(std::uint64_t seed, int views, BoardSpec board = {}) {
    SyntheticViews s;
    s.k = sample_camera(derive_seed(seed, 1000));
    s.board = board;
    for (int i = 0; i < views; ++i) {
        s.poses.push_back(sample_pose(s.k, board, ImageSize{}, derive_seed(seed, static_cast<std::uint64_t>(i))));
        s.grids.push_back(project_grid(s.k, s.poses.back(), board));
    }
    return s;
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace hybridcal::testing
