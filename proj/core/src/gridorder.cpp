#include "hybridcal/gridorder.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <optional>

#include "hybridcal/camgeom.h"

namespace hybridcal {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; strictly convex vertices in positive (signed-area) order.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        const Vec2& p = pts[i - 1];
        while (k >= t && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    return hull;
}

double quad_area(const std::array<Vec2, 4>& q) {
    double a = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec2& p = q[i];
        const Vec2& n = q[(i + 1) % 4];
        a += p.x() * n.y() - n.x() * p.y();
    }
    return 0.5 * a;
}

std::array<Vec2, 4> max_area_quadrilateral(const std::vector<Vec2>& hull) {
    const std::size_t h = hull.size();
    std::array<Vec2, 4> best{};
    double best_area = -1.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = i + 1; j < h; ++j)
            for (std::size_t k = j + 1; k < h; ++k)
                for (std::size_t l = k + 1; l < h; ++l) {
                    const std::array<Vec2, 4> q{hull[i], hull[j], hull[k], hull[l]};
                    const double a = quad_area(q);
                    if (a > best_area) {
                        best_area = a;
                        best = q;
                    }
                }
    return best;
}

double median_nn_distance(std::span<const Vec2> pts) {
    std::vector<double> d;
    d.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (i != j) m = std::min(m, (pts[i] - pts[j]).norm());
        d.push_back(m);
    }
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return d[d.size() / 2];
}

// Extreme points by max/min of x + y and x - y, accepted only when they are
// distinct and bound every point (up to `tol`); ordered with positive area.
std::optional<std::array<Vec2, 4>> sum_diff_extremes(std::span<const Vec2> pts, double tol) {
    auto arg = [&](auto key, bool want_max) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const double a = key(pts[i]);
            const double b = key(pts[best]);
            if (want_max ? a > b : a < b) best = i;
        }
        return best;
    };
    auto sum = [](const Vec2& p) { return p.x() + p.y(); };
    auto diff = [](const Vec2& p) { return p.x() - p.y(); };
    // Image coordinates (y down): top-left, top-right, bottom-right, bottom-left.
    const std::array<std::size_t, 4> idx{arg(sum, false), arg(diff, true), arg(sum, true), arg(diff, false)};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (idx[i] == idx[j]) return std::nullopt;
    std::array<Vec2, 4> q{pts[idx[0]], pts[idx[1]], pts[idx[2]], pts[idx[3]]};
    if (quad_area(q) < 0.0) std::swap(q[1], q[3]);
    for (int i = 0; i < 4; ++i) {
        const Vec2& a = q[i];
        const Vec2& b = q[(i + 1) % 4];
        const double len = (b - a).norm();
        if (len <= 0.0) return std::nullopt;
        for (const auto& p : pts)
            if (cross(a, b, p) / len < -tol) return std::nullopt;
        // Interior angle must be a real corner, not a point along an edge.
        const Vec2& prev = q[(i + 3) % 4];
        const Vec2 u = (prev - a).normalized();
        const Vec2 v = (b - a).normalized();
        if (u.dot(v) < std::cos(170.0 * std::numbers::pi / 180.0)) return std::nullopt;
    }
    return q;
}

// Board edge through `from` toward `toward`: `from` plus its two nearest
// points lying within `cone_deg` of that direction.
Line2D edge_line(std::span<const Vec2> pts, const Vec2& from, const Vec2& toward, double cone_deg) {
    const Vec2 dir = (toward - from).normalized();
    const double cos_cone = std::cos(cone_deg * std::numbers::pi / 180.0);
    std::vector<std::pair<double, Vec2>> cand;
    for (const auto& p : pts) {
        const Vec2 d = p - from;
        const double n = d.norm();
        if (n <= 0.0) continue;
        if (d.dot(dir) / n >= cos_cone) cand.emplace_back(n, p);
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Points2 line{from};
    for (std::size_t i = 0; i < cand.size() && i < 2; ++i) line.push_back(cand[i].second);
    if (line.size() < 2) line.push_back(toward);
    return fit_line_tls(line);
}

// True when every point of `q` is a hull vertex whose interior angle is
// below `max_angle_deg`.
bool all_hull_corners(const std::array<Vec2, 4>& q, const std::vector<Vec2>& hull, double max_angle_deg) {
    const double cos_max = std::cos(max_angle_deg * std::numbers::pi / 180.0);
    const std::size_t h = hull.size();
    for (const auto& p : q) {
        const auto it = std::find(hull.begin(), hull.end(), p);
        if (it == hull.end()) return false;
        const auto i = static_cast<std::size_t>(it - hull.begin());
        const Vec2 u = (hull[(i + h - 1) % h] - p).normalized();
        const Vec2 v = (hull[(i + 1) % h] - p).normalized();
        if (u.dot(v) <= cos_max) return false;
    }
    return true;
}

struct Assignment {
    std::vector<std::pair<std::size_t, std::array<int, 2>>> cells;  // point index -> (row, col)
    bool ambiguous = false;
};

Assignment assign_cells(std::span<const Vec2> pts, const Homography& image_to_lattice, int rows, int cols,
                        double tol) {
    Assignment a;
    std::map<std::pair<int, int>, std::size_t> used;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 q = image_to_lattice.apply(pts[i]);
        if (!q.allFinite()) continue;
        const double cx = std::round(q.x());
        const double cy = std::round(q.y());
        if (std::abs(q.x() - cx) > tol || std::abs(q.y() - cy) > tol) continue;
        if (cx < 0 || cy < 0 || cx > cols - 1 || cy > rows - 1) continue;
        const int r = static_cast<int>(cy);
        const int c = static_cast<int>(cx);
        if (!used.emplace(std::make_pair(r, c), i).second) a.ambiguous = true;
        a.cells.push_back({i, {r, c}});
    }
    return a;
}

}  // namespace

Line2D fit_line_tls(std::span<const Vec2> points) {
    if (points.size() < 2) throw PreconditionError("fit_line_tls: at least 2 points required");
    Vec2 c = Vec2::Zero();
    for (const auto& p : points) c += p;
    c /= static_cast<double>(points.size());
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : points) {
        const Vec2 d = p - c;
        sxx += d.x() * d.x();
        sxy += d.x() * d.y();
        syy += d.y() * d.y();
    }
    if (sxx + syy <= 0.0) throw DegenerateError("fit_line_tls: all points are identical");
    // Direction of largest spread; the normal is perpendicular to it.
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    Line2D l;
    l.normal = Vec2(-std::sin(theta), std::cos(theta));
    l.offset = l.normal.dot(c);
    if (l.offset < 0.0) {
        l.normal = -l.normal;
        l.offset = -l.offset;
    }
    return l;
}

Vec2 intersect_lines(const Line2D& a, const Line2D& b) {
    const double det = a.normal.x() * b.normal.y() - a.normal.y() * b.normal.x();
    if (std::abs(det) <= 1e-10) throw DegenerateError("intersect_lines: lines are parallel");
    return {(a.offset * b.normal.y() - b.offset * a.normal.y()) / det,
            (a.normal.x() * b.offset - b.normal.x() * a.offset) / det};
}

CornerGrid sort_corners(std::span<const Vec2> points, int rows, int cols, SortOptions opts) {
    if (rows < 2 || cols < 2) throw PreconditionError("sort_corners: lattice must be at least 2x2");
    if (points.size() < 4) throw PreconditionError("sort_corners: at least 4 points required");
    if (points.size() > static_cast<std::size_t>(rows) * cols) {
        throw PreconditionError("sort_corners: more points than lattice cells");
    }

    // (1) Extreme points. The sum/difference extremes are kept only when each
    // one is a proper hull corner; a neighbour of a corner can win the x + y
    // ordering on an edge running near 45 degrees.
    const double spacing = median_nn_distance(points);
    const auto hull = convex_hull({points.begin(), points.end()});
    if (hull.size() < 4) throw DegenerateError("sort_corners: cannot find four extreme points");
    std::array<Vec2, 4> quad;
    const auto sd = sum_diff_extremes(points, 0.25 * spacing);
    if (sd && all_hull_corners(*sd, hull, opts.degenerate_angle_deg)) {
        quad = *sd;
    } else {
        quad = max_area_quadrilateral(hull);
    }
    if (!(quad_area(quad) > 0.0)) throw DegenerateError("sort_corners: extreme points are degenerate");

    // (2) Board edges; an extreme without a proper corner angle is re-derived
    // as the intersection of its two adjacent edges.
    const double cos_degenerate = std::cos(opts.degenerate_angle_deg * std::numbers::pi / 180.0);
    std::array<Vec2, 4> refined = quad;
    for (int i = 0; i < 4; ++i) {
        const Vec2& prev = quad[(i + 3) % 4];
        const Vec2& next = quad[(i + 1) % 4];
        const Vec2 u = (prev - quad[i]).normalized();
        const Vec2 v = (next - quad[i]).normalized();
        if (u.dot(v) > cos_degenerate) continue;
        const Line2D a = edge_line(points, prev, quad[i], opts.edge_angle_deg);
        const Line2D b = edge_line(points, next, quad[i], opts.edge_angle_deg);
        refined[i] = intersect_lines(a, b);
    }

    // (3) Homography to the unit-spaced rectangle; try the four cyclic
    // correspondences of both the raw and the refined extremes and keep the
    // one that indexes the most points. Strong perspective can leave a true
    // corner with an interior angle near 180 degrees, where the edge
    // intersection is worse than the point itself.
    const std::array<Vec2, 4> rect{Vec2(0, 0), Vec2(cols - 1, 0), Vec2(cols - 1, rows - 1), Vec2(0, rows - 1)};
    const std::array<const std::array<Vec2, 4>*, 2> candidates{&quad, &refined};
    const std::array<Vec2, 4>* best_q = nullptr;
    int best_s = -1;
    std::size_t best_count = 0;
    for (const auto* cand : candidates) {
        if (cand == &refined && refined == quad) continue;
        for (int s = 0; s < 4; ++s) {
            Points2 src, dst;
            for (int i = 0; i < 4; ++i) {
                src.push_back((*cand)[(s + i) % 4]);
                dst.push_back(rect[i]);
            }
            Homography h;
            try {
                h = estimate_homography_dlt(src, dst);
            } catch (const DegenerateError&) {
                continue;
            }
            const auto a = assign_cells(points, h, rows, cols, opts.cell_tolerance);
            const std::size_t count = a.ambiguous ? 0 : a.cells.size();
            const bool better = best_s < 0 || count > best_count ||
                                (count == best_count && (*cand)[s].sum() < (*best_q)[best_s].sum());
            if (better) {
                best_q = cand;
                best_s = s;
                best_count = count;
            }
        }
    }
    if (best_s < 0 || 2 * best_count < points.size()) {
        throw DegenerateError("sort_corners: extreme points do not describe the lattice (missing outer corner?)");
    }

    Points2 src, dst;
    for (int i = 0; i < 4; ++i) {
        src.push_back((*best_q)[(best_s + i) % 4]);
        dst.push_back(rect[i]);
    }
    Homography h = estimate_homography_dlt(src, dst);
    Assignment a = assign_cells(points, h, rows, cols, opts.cell_tolerance);
    if (a.cells.size() >= 4) {
        // Re-estimate the mapping from every indexed point and assign again.
        Points2 img, lat;
        for (const auto& [i, rc] : a.cells) {
            img.push_back(points[i]);
            lat.emplace_back(rc[1], rc[0]);
        }
        try {
            const Homography h2 = estimate_homography_dlt(img, lat);
            Assignment a2 = assign_cells(points, h2, rows, cols, opts.cell_tolerance);
            if (a2.cells.size() >= a.cells.size()) a = std::move(a2);
        } catch (const DegenerateError&) {
        }
    }
    if (a.ambiguous) throw DegenerateError("sort_corners: ambiguous assignment (two points in one cell)");
    // A wrong extreme (a missing corner replaced by its neighbour) still maps
    // a fraction of the points onto integer cells; a correct one maps nearly all.
    if (10 * a.cells.size() < 9 * points.size()) {
        throw DegenerateError("sort_corners: extreme points do not describe the lattice (missing outer corner?)");
    }
    std::array<bool, 4> corner_seen{};
    for (const auto& [i, rc] : a.cells) {
        if ((rc[0] == 0 || rc[0] == rows - 1) && (rc[1] == 0 || rc[1] == cols - 1)) {
            corner_seen[(rc[0] ? 2 : 0) + (rc[1] ? 1 : 0)] = true;
        }
    }
    if (std::count(corner_seen.begin(), corner_seen.end(), true) < 4) {
        throw DegenerateError("sort_corners: an outer lattice corner is missing");
    }

    CornerGrid grid(rows, cols);
    for (const auto& [i, rc] : a.cells) grid.set(rc[0], rc[1], points[i], Provenance::detected);
    return grid;
}

CornerGrid collineation_refine(const CornerGrid& grid) {
    std::vector<std::optional<Line2D>> row_lines(grid.rows), col_lines(grid.cols);
    Points2 buf;
    for (int r = 0; r < grid.rows; ++r) {
        buf.clear();
        for (int c = 0; c < grid.cols; ++c)
            if (grid.valid(r, c)) buf.push_back(grid.at(r, c));
        if (buf.size() >= 2) {
            try {
                row_lines[r] = fit_line_tls(buf);
            } catch (const DegenerateError&) {
            }
        }
    }
    for (int c = 0; c < grid.cols; ++c) {
        buf.clear();
        for (int r = 0; r < grid.rows; ++r)
            if (grid.valid(r, c)) buf.push_back(grid.at(r, c));
        if (buf.size() >= 2) {
            try {
                col_lines[c] = fit_line_tls(buf);
            } catch (const DegenerateError&) {
            }
        }
    }

    CornerGrid out = grid;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            if (!row_lines[r] || !col_lines[c]) continue;
            Vec2 p;
            try {
                p = intersect_lines(*row_lines[r], *col_lines[c]);
            } catch (const DegenerateError&) {
                continue;
            }
            out.set(r, c, p, grid.valid(r, c) ? grid.provenance[grid.index(r, c)] : Provenance::recovered);
        }
    }
    return out;
}

std::vector<Points2> group_lattice_lines(std::span<const Vec2> points, const Vec2& seed, std::size_t min_points) {
    const std::size_t n = points.size();
    if (n < 3) return {};

    std::size_t s0 = 0;
    for (std::size_t i = 1; i < n; ++i)
        if ((points[i] - seed).squaredNorm() < (points[s0] - seed).squaredNorm()) s0 = i;

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i)
        if (i != s0) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (points[a] - points[s0]).squaredNorm() < (points[b] - points[s0]).squaredNorm();
    });
    const Vec2 e1 = points[order[0]] - points[s0];
    std::optional<Vec2> e2;
    for (std::size_t k = 1; k < order.size() && k < 8; ++k) {
        const Vec2 d = points[order[k]] - points[s0];
        const double c = std::abs(d.normalized().dot(e1.normalized()));
        if (c < std::cos(45.0 * std::numbers::pi / 180.0)) {
            e2 = d;
            break;
        }
    }
    if (!e2) return {};

    std::map<std::pair<int, int>, std::size_t> cell_of;
    std::vector<bool> taken(n, false);
    std::deque<std::pair<int, int>> queue;
    auto assign = [&](int i, int j, std::size_t idx) {
        cell_of[{i, j}] = idx;
        taken[idx] = true;
        queue.emplace_back(i, j);
    };
    assign(0, 0, s0);

    auto find = [&](int i, int j) -> std::optional<Vec2> {
        auto it = cell_of.find({i, j});
        if (it == cell_of.end()) return std::nullopt;
        return points[it->second];
    };

    while (!queue.empty()) {
        const auto [i, j] = queue.front();
        queue.pop_front();
        const Vec2 p = *find(i, j);
        for (const auto& [di, dj] : std::array<std::pair<int, int>, 4>{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}}) {
            if (cell_of.count({i + di, j + dj})) continue;
            Vec2 step = di != 0 ? e1 * di : *e2 * dj;
            if (auto back = find(i - di, j - dj)) {
                step = p - *back;
            } else {
                for (int side : {1, -1}) {
                    const int oi = di != 0 ? i : i + side;
                    const int oj = di != 0 ? j + side : j;
                    auto a = find(oi, oj);
                    auto b = find(oi + di, oj + dj);
                    if (a && b) {
                        step = *b - *a;
                        break;
                    }
                }
            }
            const Vec2 predicted = p + step;
            const double radius = 0.35 * step.norm();
            std::optional<std::size_t> best;
            double best_d = radius;
            for (std::size_t k = 0; k < n; ++k) {
                if (taken[k]) continue;
                const double d = (points[k] - predicted).norm();
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            if (best) assign(i + di, j + dj, *best);
        }
    }

    std::map<int, std::vector<std::pair<int, Vec2>>> rows, cols;
    for (const auto& [cell, idx] : cell_of) {
        rows[cell.second].emplace_back(cell.first, points[idx]);
        cols[cell.first].emplace_back(cell.second, points[idx]);
    }
    std::vector<Points2> out;
    for (auto* groups : {&rows, &cols}) {
        for (auto& [key, members] : *groups) {
            if (members.size() < min_points) continue;
            std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            Points2 line;
            for (const auto& m : members) line.push_back(m.second);
            out.push_back(std::move(line));
        }
    }
    return out;
}

}  // namespace hybridcal
