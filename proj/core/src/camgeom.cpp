#include "hybridcal/camgeom.h"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>

namespace hybridcal {

namespace {

bool finite(double v) { return std::isfinite(v); }

// Similarity taking the points' centroid to the origin with mean distance sqrt(2).
Mat3 isotropic_normalization(std::span<const Vec2> pts) {
    Vec2 centroid = Vec2::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += (p - centroid).norm();
    mean_dist /= static_cast<double>(pts.size());
    if (!(mean_dist > 0.0)) throw DegenerateError("homography: all points coincide");
    const double s = std::sqrt(2.0) / mean_dist;
    Mat3 t;
    t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
    return t;
}

Vec2 apply_h(const Mat3& h, const Vec2& p) {
    const Vec3 q = h * p.homogeneous();
    return q.hnormalized();
}

// Row of the conic constraint system for columns i, j of H.
Eigen::Matrix<double, 1, 6> conic_row(const Mat3& h, int i, int j) {
    Eigen::Matrix<double, 1, 6> v;
    v << h(0, i) * h(0, j), h(0, i) * h(1, j) + h(1, i) * h(0, j), h(1, i) * h(1, j),
        h(2, i) * h(0, j) + h(0, i) * h(2, j), h(2, i) * h(1, j) + h(1, i) * h(2, j), h(2, i) * h(2, j);
    return v;
}

}  // namespace

Mat3 Intrinsics::matrix() const {
    Mat3 k;
    k << fx, skew, px, 0.0, fy, py, 0.0, 0.0, 1.0;
    return k;
}

void Intrinsics::validate() const {
    if (!(finite(fx) && finite(fy) && finite(skew) && finite(px) && finite(py))) {
        throw PreconditionError("intrinsics contain non-finite values");
    }
    if (!(fx > 0.0 && fy > 0.0)) throw PreconditionError("intrinsics require fx > 0 and fy > 0");
}

void Extrinsics::validate() const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw PreconditionError("extrinsics contain non-finite values");
    }
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw PreconditionError("rotation is not orthonormal");
    }
    if (std::abs(rotation.determinant() - 1.0) > 1e-9) throw PreconditionError("rotation determinant is not +1");
}

Homography::Homography(const Mat3& h) {
    const double n = h.norm();
    if (!(n > 0.0) || !h.allFinite()) throw DegenerateError("homography must be finite and nonzero");
    h_ = h / n;
    if (h_(2, 2) < 0.0) h_ = -h_;
}

Vec2 Homography::apply(const Vec2& p) const { return apply_h(h_, p); }

Homography Homography::inverse() const {
    Eigen::FullPivLU<Mat3> lu(h_);
    if (!lu.isInvertible()) throw DegenerateError("homography is singular");
    return Homography(lu.inverse());
}

void BoardSpec::validate() const {
    if (rows < 3 || cols < 3) throw PreconditionError("board needs at least 3x3 interior corners");
    if (!(square_size > 0.0) || !finite(square_size)) throw PreconditionError("board square size must be positive");
}

Vec2 project_point(const Intrinsics& k, const Extrinsics& e, const Vec3& world) {
    const Vec3 cam = e.rotation * world + e.translation;
    if (!(cam.z() > 1e-12)) throw DegenerateError("point projects from behind or on the camera plane");
    const double x = cam.x() / cam.z();
    const double y = cam.y() / cam.z();
    return {k.fx * x + k.skew * y + k.px, k.fy * y + k.py};
}

Homography board_homography(const Intrinsics& k, const Extrinsics& e) {
    Mat3 rt;
    rt.col(0) = e.rotation.col(0);
    rt.col(1) = e.rotation.col(1);
    rt.col(2) = e.translation;
    return Homography(k.matrix() * rt);
}

Homography estimate_homography_dlt(std::span<const Vec2> world, std::span<const Vec2> image) {
    if (world.size() != image.size()) throw PreconditionError("homography: correspondence count mismatch");
    if (world.size() < 4) throw PreconditionError("homography: at least 4 correspondences required");

    const Mat3 tw = isotropic_normalization(world);
    const Mat3 ti = isotropic_normalization(image);
    const auto n = static_cast<Eigen::Index>(world.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec2 w = apply_h(tw, world[i]);
        const Vec2 m = apply_h(ti, image[i]);
        a.row(2 * i) << -w.x(), -w.y(), -1.0, 0.0, 0.0, 0.0, m.x() * w.x(), m.x() * w.y(), m.x();
        a.row(2 * i + 1) << 0.0, 0.0, 0.0, -w.x(), -w.y(), -1.0, m.y() * w.x(), m.y() * w.y(), m.y();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // A unique solution needs rank 8: the eighth singular value must not vanish.
    if (!(sv(7) > 1e-10 * sv(0))) throw DegenerateError("homography: design matrix is rank deficient");
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    return Homography(ti.inverse() * hn * tw);
}

Intrinsics intrinsics_from_homographies(std::span<const Homography> hs, IntrinsicsOptions opts) {
    const std::size_t min_count = opts.fix_skew ? 2 : 3;
    if (hs.size() < min_count) {
        throw PreconditionError("intrinsics: need at least " + std::to_string(min_count) + " homographies");
    }
    const auto n = static_cast<Eigen::Index>(hs.size());
    Eigen::MatrixXd v(2 * n + (opts.fix_skew ? 1 : 0), 6);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Mat3& h = hs[i].matrix();
        Eigen::Matrix<double, 1, 6> r0 = conic_row(h, 0, 1);
        Eigen::Matrix<double, 1, 6> r1 = conic_row(h, 0, 0) - conic_row(h, 1, 1);
        v.row(2 * i) = r0 / std::max(r0.norm(), 1e-300);
        v.row(2 * i + 1) = r1 / std::max(r1.norm(), 1e-300);
    }
    if (opts.fix_skew) v.row(2 * n) << 0.0, 1.0, 0.0, 0.0, 0.0, 0.0;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv.size() < 5 || !(sv(4) > 1e-12 * sv(0))) {
        throw DegenerateError("intrinsics: homographies do not constrain the image of the absolute conic");
    }
    const Eigen::VectorXd b = svd.matrixV().col(5);
    Mat3 bm;
    bm << b(0), b(1), b(3), b(1), b(2), b(4), b(3), b(4), b(5);

    // B = lambda K^-T K^-1 with unknown sign; its Cholesky factor is K^-T.
    for (const double sign : {1.0, -1.0}) {
        Eigen::LLT<Mat3> llt(sign * bm);
        if (llt.info() != Eigen::Success) continue;
        const Mat3 kinv = llt.matrixU();
        Mat3 k = kinv.inverse();
        k /= k(2, 2);
        Intrinsics out{k(0, 0), k(1, 1), opts.fix_skew ? 0.0 : k(0, 1), k(0, 2), k(1, 2)};
        if (!(out.fx > 0.0 && out.fy > 0.0) || !k.allFinite()) break;
        return out;
    }
    throw DegenerateError("intrinsics: conic estimate is not positive definite (degenerate poses)");
}

Mat3 nearest_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 r = u * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
    }
    return r;
}

Extrinsics extrinsics_from_homography(const Intrinsics& k, const Homography& h) {
    const Mat3 kinv = k.matrix().inverse();
    const Vec3 a1 = kinv * h.matrix().col(0);
    const Vec3 a2 = kinv * h.matrix().col(1);
    const Vec3 a3 = kinv * h.matrix().col(2);
    const double norm1 = a1.norm();
    if (!(norm1 >= 1e-12)) throw DegenerateError("extrinsics: |K^-1 h1| vanishes");
    double lambda = 1.0 / norm1;
    if (lambda * a3.z() < 0.0) lambda = -lambda;

    const Vec3 r1 = lambda * a1;
    const Vec3 r2 = lambda * a2;
    Mat3 r;
    r.col(0) = r1;
    r.col(1) = r2;
    r.col(2) = r1.cross(r2);

    Extrinsics e;
    e.rotation = nearest_rotation(r);
    e.translation = lambda * a3;
    return e;
}

void grid_correspondences(const CornerGrid& grid, const BoardSpec& board, Points2& world, Points2& image) {
    world.clear();
    image.clear();
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            if (!grid.valid(r, c)) continue;
            world.push_back(board.world_point(r, c).head<2>());
            image.push_back(grid.at(r, c));
        }
    }
}

double reprojection_error(const Intrinsics& k, std::span<const Extrinsics> extrinsics,
                          std::span<const CornerGrid> grids, const BoardSpec& board, RpeMode mode) {
    if (extrinsics.size() != grids.size()) throw PreconditionError("reprojection: one pose per grid required");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        const CornerGrid& g = grids[i];
        if (g.rows != board.rows || g.cols != board.cols) {
            throw PreconditionError("reprojection: grid dimensions do not match the board");
        }
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                if (!g.valid(r, c)) continue;
                const Vec2 d = g.at(r, c) - project_point(k, extrinsics[i], board.world_point(r, c));
                sum += mode == RpeMode::mean_squared ? d.squaredNorm() : d.norm();
                ++count;
            }
        }
    }
    if (count == 0) throw PreconditionError("reprojection: no valid corners");
    return sum / static_cast<double>(count);
}

void to_json(nlohmann::json& j, const Intrinsics& k) {
    j = {{"fx", k.fx}, {"fy", k.fy}, {"skew", k.skew}, {"px", k.px}, {"py", k.py}};
}

void from_json(const nlohmann::json& j, Intrinsics& k) {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.skew = j.value("skew", 0.0);
    k.px = j.at("px").get<double>();
    k.py = j.at("py").get<double>();
}

void to_json(nlohmann::json& j, const Extrinsics& e) {
    auto rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({e.rotation(r, 0), e.rotation(r, 1), e.rotation(r, 2)});
    j = {{"rotation", std::move(rot)},
         {"translation", {e.translation.x(), e.translation.y(), e.translation.z()}}};
}

void from_json(const nlohmann::json& j, Extrinsics& e) {
    const auto& rot = j.at("rotation");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) e.rotation(r, c) = rot.at(r).at(c).get<double>();
    const auto& t = j.at("translation");
    for (int i = 0; i < 3; ++i) e.translation(i) = t.at(i).get<double>();
}

void to_json(nlohmann::json& j, const BoardSpec& b) {
    j = {{"rows", b.rows}, {"cols", b.cols}, {"square_size", b.square_size}};
}

void from_json(const nlohmann::json& j, BoardSpec& b) {
    b.rows = j.at("rows").get<int>();
    b.cols = j.at("cols").get<int>();
    b.square_size = j.at("square_size").get<double>();
}

}  // namespace hybridcal
