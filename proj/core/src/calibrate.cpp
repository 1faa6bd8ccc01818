#include "hybridcal/calibrate.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "hybridcal/rng.h"

namespace hybridcal {

namespace {

constexpr int kIntrinsicCount = 5;
constexpr int kPoseCount = 6;

Mat3 skew_matrix(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

Mat3 rotation_from_axis_angle(const Vec3& w) {
    const double theta = w.norm();
    if (theta < 1e-300) return Mat3::Identity();
    return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Vec3 axis_angle_from_rotation(const Mat3& r) {
    const Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

// dR/dw_i for i = 0..2.
std::array<Mat3, 3> rotation_derivatives(const Vec3& w, const Mat3& r) {
    std::array<Mat3, 3> d;
    const double theta2 = w.squaredNorm();
    for (int i = 0; i < 3; ++i) {
        const Vec3 e = Vec3::Unit(i);
        if (theta2 < 1e-14) {
            d[i] = skew_matrix(e) * r;
        } else {
            const Vec3 v = w.cross((Mat3::Identity() - r) * e);
            d[i] = (w(i) * skew_matrix(w) + skew_matrix(v)) * r / theta2;
        }
    }
    return d;
}

std::size_t image_count(const Eigen::VectorXd& p) {
    const auto n = (p.size() - kIntrinsicCount) / kPoseCount;
    if (p.size() < kIntrinsicCount || (p.size() - kIntrinsicCount) % kPoseCount != 0) {
        throw PreconditionError("parameter vector has an invalid length");
    }
    return static_cast<std::size_t>(n);
}

Eigen::Index residual_rows(std::span<const CornerGrid> grids) {
    Eigen::Index rows = 0;
    for (const auto& g : grids) rows += 2 * g.valid_count();
    return rows;
}

void check_grids_match(std::span<const CornerGrid> grids, const BoardSpec& board) {
    for (const auto& g : grids) {
        if (g.rows != board.rows || g.cols != board.cols) {
            throw PreconditionError("grid dimensions do not match the board");
        }
    }
}

void check_grid_usable(const CornerGrid& g, std::size_t index) {
    std::vector<bool> rows(g.rows, false), cols(g.cols, false);
    int valid = 0;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (!g.valid(r, c)) continue;
            rows[r] = cols[c] = true;
            ++valid;
        }
    }
    const auto nr = std::count(rows.begin(), rows.end(), true);
    const auto nc = std::count(cols.begin(), cols.end(), true);
    if (valid < 4 || nr < 2 || nc < 2) {
        throw PreconditionError("grid " + std::to_string(index) +
                                " needs >= 4 valid corners spanning >= 2 rows and 2 columns");
    }
}

Homography grid_homography(const CornerGrid& g, const BoardSpec& board) {
    Points2 world, image;
    grid_correspondences(g, board, world, image);
    return estimate_homography_dlt(world, image);
}

double corner_weighted_rpe(const Intrinsics& k, std::span<const Extrinsics> ext, std::span<const CornerGrid> grids,
                           const BoardSpec& board, std::span<const int> subset) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int i : subset) {
        const CornerGrid& g = grids[i];
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                if (!g.valid(r, c)) continue;
                sum += (g.at(r, c) - project_point(k, ext[i], board.world_point(r, c))).norm();
                ++count;
            }
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

void fill_statistics(CalibrationResult& res, std::span<const CornerGrid> grids, const BoardSpec& board) {
    res.per_image_rpe.resize(grids.size());
    for (std::size_t i = 0; i < grids.size(); ++i) {
        res.per_image_rpe[i] = image_rpe(res.intrinsics, res.extrinsics[i], grids[i], board);
    }
    res.rpe = corner_weighted_rpe(res.intrinsics, res.extrinsics, grids, board, res.inlier_images);
}

std::vector<int> all_indices(std::size_t n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

}  // namespace

Eigen::VectorXd pack_parameters(const Intrinsics& k, std::span<const Extrinsics> extrinsics) {
    Eigen::VectorXd p(kIntrinsicCount + kPoseCount * static_cast<Eigen::Index>(extrinsics.size()));
    p.head<kIntrinsicCount>() << k.fx, k.fy, k.skew, k.px, k.py;
    for (std::size_t i = 0; i < extrinsics.size(); ++i) {
        const Eigen::Index o = kIntrinsicCount + kPoseCount * static_cast<Eigen::Index>(i);
        p.segment<3>(o) = axis_angle_from_rotation(extrinsics[i].rotation);
        p.segment<3>(o + 3) = extrinsics[i].translation;
    }
    return p;
}

void unpack_parameters(const Eigen::VectorXd& p, Intrinsics& k, std::vector<Extrinsics>& extrinsics) {
    const std::size_t n = image_count(p);
    k = Intrinsics{p(0), p(1), p(2), p(3), p(4)};
    extrinsics.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index o = kIntrinsicCount + kPoseCount * static_cast<Eigen::Index>(i);
        extrinsics[i].rotation = rotation_from_axis_angle(p.segment<3>(o));
        extrinsics[i].translation = p.segment<3>(o + 3);
    }
}

Eigen::VectorXd reprojection_residuals(const Eigen::VectorXd& p, std::span<const CornerGrid> grids,
                                       const BoardSpec& board) {
    if (image_count(p) != grids.size()) throw PreconditionError("one pose per grid required");
    check_grids_match(grids, board);
    Intrinsics k;
    std::vector<Extrinsics> ext;
    unpack_parameters(p, k, ext);
    Eigen::VectorXd res(residual_rows(grids));
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        const CornerGrid& g = grids[i];
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                if (!g.valid(r, c)) continue;
                res.segment<2>(row) = project_point(k, ext[i], board.world_point(r, c)) - g.at(r, c);
                row += 2;
            }
        }
    }
    return res;
}

Eigen::MatrixXd reprojection_jacobian(const Eigen::VectorXd& p, std::span<const CornerGrid> grids,
                                      const BoardSpec& board) {
    if (image_count(p) != grids.size()) throw PreconditionError("one pose per grid required");
    check_grids_match(grids, board);
    const double fx = p(0), fy = p(1), s = p(2);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(residual_rows(grids), p.size());
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        const Eigen::Index o = kIntrinsicCount + kPoseCount * static_cast<Eigen::Index>(i);
        const Vec3 w = p.segment<3>(o);
        const Vec3 t = p.segment<3>(o + 3);
        const Mat3 rot = rotation_from_axis_angle(w);
        const auto dr = rotation_derivatives(w, rot);
        const CornerGrid& g = grids[i];
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                if (!g.valid(r, c)) continue;
                const Vec3 x = board.world_point(r, c);
                const Vec3 pc = rot * x + t;
                if (pc.z() <= 1e-12) throw DegenerateError("point behind the camera");
                const double iz = 1.0 / pc.z();
                const double xn = pc.x() * iz;
                const double yn = pc.y() * iz;
                jac.block<2, 5>(row, 0) << xn, 0.0, yn, 1.0, 0.0, 0.0, yn, 0.0, 0.0, 1.0;
                Eigen::Matrix<double, 2, 3> dn;  // d(xn, yn) / d pc
                dn << iz, 0.0, -xn * iz, 0.0, iz, -yn * iz;
                Eigen::Matrix2d dk;
                dk << fx, s, 0.0, fy;
                const Eigen::Matrix<double, 2, 3> dpc = dk * dn;
                for (int a = 0; a < 3; ++a) jac.block<2, 1>(row, o + a) = dpc * (dr[a] * x);
                jac.block<2, 3>(row, o + 3) = dpc;
                row += 2;
            }
        }
    }
    return jac;
}

double image_rpe(const Intrinsics& k, const Extrinsics& e, const CornerGrid& grid, const BoardSpec& board) {
    const Extrinsics* pe = &e;
    return reprojection_error(k, std::span<const Extrinsics>(pe, 1), std::span<const CornerGrid>(&grid, 1), board);
}

CalibrationResult refine_parameters(const CalibrationResult& initial, std::span<const CornerGrid> grids,
                                    const BoardSpec& board, RefineOptions opts) {
    if (initial.extrinsics.size() != grids.size()) throw PreconditionError("one pose per grid required");
    initial.intrinsics.validate();
    for (const auto& e : initial.extrinsics) e.validate();

    Eigen::VectorXd p = pack_parameters(initial.intrinsics, initial.extrinsics);
    Eigen::VectorXd r = reprojection_residuals(p, grids, board);
    const double corners = static_cast<double>(r.size() / 2);
    if (r.size() == 0) throw PreconditionError("no valid corners to refine");
    double cost = r.squaredNorm();
    if (!std::isfinite(cost)) throw PreconditionError("non-finite objective at the initial parameters");
    if (opts.objective_trace) opts.objective_trace->push_back(cost / corners);

    std::vector<bool> fixed(static_cast<std::size_t>(p.size()), false);
    if (opts.fix_intrinsics) std::fill(fixed.begin(), fixed.begin() + kIntrinsicCount, true);
    if (opts.fix_skew) fixed[2] = true;

    double lambda = 1e-3;
    int accepted = 0;
    bool converged = false;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        const Eigen::MatrixXd jac = reprojection_jacobian(p, grids, board);
        Eigen::VectorXd g = jac.transpose() * r;
        Eigen::MatrixXd a = jac.transpose() * jac;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (!fixed[static_cast<std::size_t>(i)]) continue;
            g(i) = 0.0;
            a.row(i).setZero();
            a.col(i).setZero();
            a(i, i) = 1.0;
        }
        if (2.0 * g.lpNorm<Eigen::Infinity>() / corners < 1e-8) {
            converged = true;
            break;
        }
        bool stepped = false;
        while (lambda <= 1e16) {
            Eigen::MatrixXd damped = a;
            for (Eigen::Index i = 0; i < p.size(); ++i) damped(i, i) += lambda * std::max(a(i, i), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);
            if (delta.norm() < 1e-12 * (1.0 + p.norm())) {
                converged = true;
                break;
            }
            const Eigen::VectorXd candidate = p + delta;
            double new_cost = std::numeric_limits<double>::infinity();
            Eigen::VectorXd new_r;
            try {
                new_r = reprojection_residuals(candidate, grids, board);
                new_cost = new_r.squaredNorm();
            } catch (const DegenerateError&) {
            }
            if (std::isfinite(new_cost) && new_cost < cost) {
                p = candidate;
                r = std::move(new_r);
                cost = new_cost;
                lambda = std::max(lambda / 10.0, 1e-12);
                ++accepted;
                if (opts.objective_trace) opts.objective_trace->push_back(cost / corners);
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if (converged || !stepped) break;
    }

    CalibrationResult out;
    unpack_parameters(p, out.intrinsics, out.extrinsics);
    if (opts.fix_intrinsics) out.intrinsics = initial.intrinsics;
    if (opts.fix_skew) out.intrinsics.skew = initial.intrinsics.skew;
    out.inlier_images = all_indices(grids.size());
    out.converged = converged;
    out.iterations = accepted;
    fill_statistics(out, grids, board);
    return out;
}

CalibrationResult calibrate_zhang(std::span<const CornerGrid> grids, const BoardSpec& board, CalibrationOptions opts) {
    board.validate();
    if (grids.size() < 3) throw PreconditionError("calibration needs at least 3 grids");
    check_grids_match(grids, board);
    for (std::size_t i = 0; i < grids.size(); ++i) check_grid_usable(grids[i], i);

    std::vector<Homography> hs;
    hs.reserve(grids.size());
    for (const auto& g : grids) hs.push_back(grid_homography(g, board));

    CalibrationResult res;
    res.intrinsics = intrinsics_from_homographies(hs, IntrinsicsOptions{opts.fix_skew});
    for (const auto& h : hs) res.extrinsics.push_back(extrinsics_from_homography(res.intrinsics, h));
    res.inlier_images = all_indices(grids.size());
    if (opts.refine) {
        return refine_parameters(res, grids, board, RefineOptions{opts.max_iterations, opts.fix_skew, false, nullptr});
    }
    fill_statistics(res, grids, board);
    return res;
}

Extrinsics estimate_pose(const Intrinsics& k, const CornerGrid& grid, const BoardSpec& board) {
    check_grid_usable(grid, 0);
    CalibrationResult init;
    init.intrinsics = k;
    init.extrinsics.push_back(extrinsics_from_homography(k, grid_homography(grid, board)));
    const auto refined =
        refine_parameters(init, std::span<const CornerGrid>(&grid, 1), board, RefineOptions{50, false, true, nullptr});
    return refined.extrinsics.front();
}

void RansacConfig::validate() const {
    if (subset_size < 3) throw PreconditionError("ransac.subset_size must be >= 3");
    if (!(rpe_threshold > 0.0)) throw PreconditionError("ransac.rpe_threshold must be positive");
    if (!(min_inlier_fraction > 0.0 && min_inlier_fraction <= 1.0)) {
        throw PreconditionError("ransac.min_inlier_fraction must lie in (0, 1]");
    }
    if (max_trials < 1) throw PreconditionError("ransac.max_trials must be >= 1");
}

namespace {

struct TrialOutcome {
    bool ok = false;
    std::vector<int> inliers;
    double mean_inlier_rpe = std::numeric_limits<double>::infinity();
};

TrialOutcome run_trial(std::span<const CornerGrid> grids, const BoardSpec& board, const RansacConfig& cfg,
                       const CalibrationOptions& opts, int trial) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(trial)));
    std::vector<int> order = all_indices(grids.size());
    for (int i = 0; i < cfg.subset_size; ++i) {
        const auto j = i + static_cast<int>(rng.below(order.size() - static_cast<std::size_t>(i)));
        std::swap(order[i], order[j]);
    }
    std::vector<int> subset(order.begin(), order.begin() + cfg.subset_size);
    std::sort(subset.begin(), subset.end());

    TrialOutcome out;
    try {
        std::vector<CornerGrid> chosen;
        for (int i : subset) chosen.push_back(grids[i]);
        const Intrinsics k = calibrate_zhang(chosen, board, opts).intrinsics;
        double sum = 0.0;
        for (std::size_t i = 0; i < grids.size(); ++i) {
            double rpe = std::numeric_limits<double>::infinity();
            try {
                rpe = image_rpe(k, estimate_pose(k, grids[i], board), grids[i], board);
            } catch (const Error&) {
            }
            if (rpe < cfg.rpe_threshold) {
                out.inliers.push_back(static_cast<int>(i));
                sum += rpe;
            }
        }
        out.ok = true;
        if (!out.inliers.empty()) out.mean_inlier_rpe = sum / static_cast<double>(out.inliers.size());
    } catch (const Error&) {
        out.ok = false;
    }
    return out;
}

bool better(const TrialOutcome& a, const TrialOutcome& b) {
    if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
    return a.mean_inlier_rpe < b.mean_inlier_rpe;
}

}  // namespace

CalibrationResult ransac_calibrate(std::span<const CornerGrid> grids, const BoardSpec& board, const RansacConfig& cfg,
                                   CalibrationOptions opts, int threads) {
    cfg.validate();
    board.validate();
    if (grids.size() < static_cast<std::size_t>(cfg.subset_size)) {
        throw PreconditionError("ransac needs at least subset_size (" + std::to_string(cfg.subset_size) +
                                ") images, got " + std::to_string(grids.size()));
    }
    check_grids_match(grids, board);
    const auto n = static_cast<double>(grids.size());
    const auto required = static_cast<std::size_t>(std::ceil(cfg.min_inlier_fraction * n - 1e-9));
    threads = std::max(1, threads);

    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(cfg.max_trials));
    int winner = -1;
    int best = -1;
    int failed = 0;
    for (int start = 0; start < cfg.max_trials && winner < 0; start += threads) {
        const int stop = std::min(cfg.max_trials, start + threads);
        if (stop - start == 1) {
            outcomes[start] = run_trial(grids, board, cfg, opts, start);
        } else {
            std::vector<std::thread> pool;
            for (int t = start; t < stop; ++t) {
                pool.emplace_back([&, t] { outcomes[t] = run_trial(grids, board, cfg, opts, t); });
            }
            for (auto& th : pool) th.join();
        }
        for (int t = start; t < stop; ++t) {
            const auto& o = outcomes[t];
            if (!o.ok) {
                ++failed;
                continue;
            }
            if (o.inliers.size() >= required) {
                winner = t;
                break;
            }
            if (best < 0 || better(o, outcomes[best])) best = t;
        }
    }
    if (winner < 0) winner = best;
    if (winner < 0 || outcomes[winner].inliers.size() < static_cast<std::size_t>(cfg.subset_size)) {
        std::ostringstream msg;
        msg << "ransac: no trial reached " << cfg.subset_size << " inliers (trials=" << cfg.max_trials
            << ", failed=" << failed
            << ", best inliers=" << (winner < 0 ? 0 : outcomes[winner].inliers.size()) << ")";
        throw RansacError(msg.str());
    }

    const std::vector<int>& inliers = outcomes[winner].inliers;
    std::vector<CornerGrid> chosen;
    for (int i : inliers) chosen.push_back(grids[i]);
    const CalibrationResult fit = calibrate_zhang(chosen, board, opts);

    CalibrationResult res;
    res.intrinsics = fit.intrinsics;
    res.converged = fit.converged;
    res.iterations = fit.iterations;
    res.inlier_images = inliers;
    res.extrinsics.resize(grids.size());
    res.per_image_rpe.resize(grids.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
        if (next < inliers.size() && inliers[next] == static_cast<int>(i)) {
            res.extrinsics[i] = fit.extrinsics[next];
            res.per_image_rpe[i] = fit.per_image_rpe[next];
            ++next;
            continue;
        }
        try {
            res.extrinsics[i] = estimate_pose(res.intrinsics, grids[i], board);
            res.per_image_rpe[i] = image_rpe(res.intrinsics, res.extrinsics[i], grids[i], board);
        } catch (const Error&) {
            res.extrinsics[i] = Extrinsics{};
            res.per_image_rpe[i] = std::numeric_limits<double>::infinity();
        }
    }
    res.rpe = fit.rpe;
    return res;
}

IntrinsicsMetrics intrinsics_metrics(const Intrinsics& gt, const Intrinsics& est) {
    IntrinsicsMetrics m;
    m.e_fl = std::abs(gt.fx - est.fx) + std::abs(gt.fy - est.fy);
    m.e_pp = std::abs(gt.px - est.px) + std::abs(gt.py - est.py);
    m.e_ip = (m.e_fl + m.e_pp) / 2.0;
    return m;
}

void to_json(nlohmann::json& j, const CalibrationResult& r) {
    nlohmann::json per = nlohmann::json::array();
    for (double v : r.per_image_rpe) per.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    j = {{"intrinsics", r.intrinsics},   {"extrinsics", r.extrinsics},       {"rpe", r.rpe},
         {"per_image_rpe", per},         {"inlier_images", r.inlier_images}, {"converged", r.converged},
         {"iterations", r.iterations}};
}

void from_json(const nlohmann::json& j, CalibrationResult& r) {
    j.at("intrinsics").get_to(r.intrinsics);
    j.at("extrinsics").get_to(r.extrinsics);
    r.rpe = j.at("rpe").get<double>();
    r.per_image_rpe.clear();
    for (const auto& v : j.at("per_image_rpe")) {
        r.per_image_rpe.push_back(v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>());
    }
    j.at("inlier_images").get_to(r.inlier_images);
    r.converged = j.at("converged").get<bool>();
    r.iterations = j.at("iterations").get<int>();
}

void to_json(nlohmann::json& j, const RansacConfig& c) {
    j = {{"subset_size", c.subset_size},
         {"rpe_threshold", c.rpe_threshold},
         {"min_inlier_fraction", c.min_inlier_fraction},
         {"max_trials", c.max_trials},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RansacConfig& c) {
    const RansacConfig d;
    c.subset_size = j.value("subset_size", d.subset_size);
    c.rpe_threshold = j.value("rpe_threshold", d.rpe_threshold);
    c.min_inlier_fraction = j.value("min_inlier_fraction", d.min_inlier_fraction);
    c.max_trials = j.value("max_trials", d.max_trials);
    c.seed = j.value("seed", d.seed);
}

}  // namespace hybridcal
