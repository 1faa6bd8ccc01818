#include "hybridcal/corner_grid.h"

#include <algorithm>
#include <cmath>

namespace hybridcal {

CornerGrid::CornerGrid(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw PreconditionError("grid dimensions must be non-negative");
    points.assign(static_cast<std::size_t>(r) * c, Vec2::Zero());
    provenance.assign(static_cast<std::size_t>(r) * c, Provenance::missing);
}

void CornerGrid::set(int r, int c, const Vec2& p, Provenance prov) {
    points[index(r, c)] = p;
    provenance[index(r, c)] = prov;
}

void CornerGrid::invalidate(int r, int c) {
    points[index(r, c)] = Vec2::Zero();
    provenance[index(r, c)] = Provenance::missing;
}

int CornerGrid::valid_count() const {
    return static_cast<int>(
        std::count_if(provenance.begin(), provenance.end(), [](Provenance p) { return p != Provenance::missing; }));
}

CornerGrid make_full_grid(int rows, int cols, const Points2& row_major) {
    if (row_major.size() != static_cast<std::size_t>(rows) * cols) {
        throw PreconditionError("point count does not match grid dimensions");
    }
    CornerGrid g(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g.set(r, c, row_major[g.index(r, c)]);
    return g;
}

namespace {

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::detected: return "detected";
        case Provenance::recovered: return "recovered";
        case Provenance::missing: break;
    }
    return "missing";
}

Provenance provenance_from(const std::string& s) {
    if (s == "detected") return Provenance::detected;
    if (s == "recovered") return Provenance::recovered;
    if (s == "missing") return Provenance::missing;
    throw PreconditionError("unknown provenance '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const CornerGrid& g) {
    auto pts = nlohmann::json::array();
    auto prov = nlohmann::json::array();
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        if (g.provenance[i] == Provenance::missing) {
            pts.push_back(nullptr);
        } else {
            pts.push_back({g.points[i].x(), g.points[i].y()});
        }
        prov.push_back(provenance_name(g.provenance[i]));
    }
    j = {{"rows", g.rows}, {"cols", g.cols}, {"points", std::move(pts)}, {"provenance", std::move(prov)}};
}

void from_json(const nlohmann::json& j, CornerGrid& g) {
    g = CornerGrid(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& pts = j.at("points");
    if (pts.size() != g.points.size()) throw PreconditionError("grid JSON point count mismatch");
    const bool has_prov = j.contains("provenance");
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].is_null()) continue;
        const Vec2 p(pts[i].at(0).get<double>(), pts[i].at(1).get<double>());
        if (!std::isfinite(p.x()) || !std::isfinite(p.y())) throw PreconditionError("grid JSON point not finite");
        g.points[i] = p;
        g.provenance[i] = has_prov ? provenance_from(j["provenance"][i].get<std::string>()) : Provenance::detected;
        if (g.provenance[i] == Provenance::missing) g.provenance[i] = Provenance::detected;
    }
}

}  // namespace hybridcal
