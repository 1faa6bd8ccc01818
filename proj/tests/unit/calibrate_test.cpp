#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "hybridcal/calibrate.h"
#include "hybridcal/rng.h"
#include "synthetic.h"

namespace hybridcal {
namespace {

using testing::make_views;
using testing::with_noise;

double jacobian_relative_error(const Eigen::VectorXd& p, std::span<const CornerGrid> grids, const BoardSpec& board) {
    const Eigen::MatrixXd ja = reprojection_jacobian(p, grids, board);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double h = 1e-6;
        Eigen::VectorXd pp = p;
        Eigen::VectorXd pm = p;
        pp(j) += h;
        pm(j) -= h;
        const Eigen::VectorXd jn = (reprojection_residuals(pp, grids, board) - reprojection_residuals(pm, grids, board)) / (2 * h);
        const double scale = jn.cwiseAbs().maxCoeff();
        if (scale == 0.0) {
            worst = std::max(worst, ja.col(j).cwiseAbs().maxCoeff());
            continue;
        }
        worst = std::max(worst, (ja.col(j) - jn).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

TEST(IntrinsicsMetrics, HandCasesAndOracle) {
    const Intrinsics gt{200, 210, 2, 240, 250};
    const IntrinsicsMetrics zero = intrinsics_metrics(gt, gt);
    EXPECT_EQ(zero.e_fl, 0.0);
    EXPECT_EQ(zero.e_pp, 0.0);
    EXPECT_EQ(zero.e_ip, 0.0);
    Intrinsics est = gt;
    est.fx += 2;
    est.py += 4;
    const IntrinsicsMetrics m = intrinsics_metrics(gt, est);
    EXPECT_EQ(m.e_fl, 2.0);
    EXPECT_EQ(m.e_pp, 4.0);
    EXPECT_EQ(m.e_ip, 3.0);
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const Intrinsics a = sample_camera(rng.engine()());
        const Intrinsics b = sample_camera(rng.engine()());
        const IntrinsicsMetrics r = intrinsics_metrics(a, b);
        const double fl = std::abs(a.fx - b.fx) + std::abs(a.fy - b.fy);
        const double pp = std::abs(a.px - b.px) + std::abs(a.py - b.py);
        EXPECT_NEAR(r.e_fl, fl, 1e-12);
        EXPECT_NEAR(r.e_pp, pp, 1e-12);
        EXPECT_NEAR(r.e_ip, 0.5 * (fl + pp), 1e-12);
    }
}

TEST(PackParameters, RoundTrip) {
    const auto v = make_views(1, 3);
    const Eigen::VectorXd p = pack_parameters(v.k, v.poses);
    EXPECT_EQ(p.size(), 5 + 6 * 3);
    Intrinsics k;
    std::vector<Extrinsics> poses;
    unpack_parameters(p, k, poses);
    EXPECT_NEAR(k.fx, v.k.fx, 1e-15);
    ASSERT_EQ(poses.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_LT((poses[i].rotation - v.poses[i].rotation).norm(), 1e-12);
        EXPECT_LT((poses[i].translation - v.poses[i].translation).norm(), 1e-12);
    }
}

TEST(ReprojectionJacobian, MatchesCentralDifferences) {
    Rng rng(2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto v = make_views(seed, 3);
        for (auto& g : v.grids) g = with_noise(g, 0.5, rng);
        const Eigen::VectorXd p = pack_parameters(v.k, v.poses);
        EXPECT_LT(jacobian_relative_error(p, v.grids, v.board), 1e-4) << "seed " << seed;
    }
}

TEST(ReprojectionJacobian, SmallRotationAngles) {
    auto v = make_views(3, 2);
    Eigen::VectorXd p = pack_parameters(v.k, v.poses);
    p.segment<3>(5).setConstant(1e-9);
    EXPECT_LT(jacobian_relative_error(p, v.grids, v.board), 1e-4);
}

TEST(CalibrateZhang, ZeroNoiseTenViews) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto v = make_views(seed, 10);
        const CalibrationResult r = calibrate_zhang(v.grids, v.board);
        const IntrinsicsMetrics m = intrinsics_metrics(v.k, r.intrinsics);
        EXPECT_LT(m.e_fl, 1e-3);
        EXPECT_LT(m.e_pp, 1e-3);
        EXPECT_LT(r.rpe, 1e-6);
        EXPECT_TRUE(r.converged);
        ASSERT_EQ(r.per_image_rpe.size(), 10u);
        EXPECT_EQ(r.inlier_images.size(), 10u);
    }
}

TEST(CalibrateZhang, ClosedFormAloneIsExactOnCleanData) {
    const auto v = make_views(11, 6);
    const CalibrationResult closed = calibrate_zhang(v.grids, v.board, {.refine = false});
    EXPECT_LT(intrinsics_metrics(v.k, closed.intrinsics).e_ip, 1e-3);
    EXPECT_FALSE(closed.converged);
    const CalibrationResult refined = calibrate_zhang(v.grids, v.board);
    EXPECT_LE(refined.rpe, closed.rpe + 1e-12);
}

TEST(CalibrateZhang, NoiseLevelRpeAndMedianError) {
    Rng rng(4);
    std::vector<double> e_ip;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto v = make_views(seed + 1000, 10);
        for (auto& g : v.grids) g = with_noise(g, 0.1, rng);
        const CalibrationResult r = calibrate_zhang(v.grids, v.board);
        const double expected = 0.1 * std::sqrt(M_PI / 2.0);
        EXPECT_GT(r.rpe, expected / 1.5);
        EXPECT_LT(r.rpe, expected * 1.5);
        e_ip.push_back(intrinsics_metrics(v.k, r.intrinsics).e_ip);
    }
    std::nth_element(e_ip.begin(), e_ip.begin() + 25, e_ip.end());
    EXPECT_LT(e_ip[25], 1.0);
}

TEST(CalibrateZhang, RpeConsistentWithPerImageValues) {
    Rng rng(5);
    auto v = make_views(12, 5);
    for (auto& g : v.grids) g = with_noise(g, 0.3, rng);
    v.grids[2].invalidate(0, 0);
    const CalibrationResult r = calibrate_zhang(v.grids, v.board);
    double sum = 0.0;
    double count = 0.0;
    for (std::size_t i = 0; i < v.grids.size(); ++i) {
        sum += r.per_image_rpe[i] * v.grids[i].valid_count();
        count += v.grids[i].valid_count();
        EXPECT_NEAR(r.per_image_rpe[i], image_rpe(r.intrinsics, r.extrinsics[i], v.grids[i], v.board), 1e-12);
    }
    EXPECT_NEAR(r.rpe, sum / count, 1e-9);
}

TEST(CalibrateZhang, Preconditions) {
    const auto v = make_views(13, 3);
    const std::vector<CornerGrid> two(v.grids.begin(), v.grids.begin() + 2);
    EXPECT_THROW(calibrate_zhang(two, v.board), PreconditionError);
    std::vector<CornerGrid> sparse = v.grids;
    CornerGrid one_row(8, 11);
    for (int c = 0; c < 11; ++c) one_row.set(0, c, v.grids[0].at(0, c));
    sparse[0] = one_row;
    EXPECT_THROW(calibrate_zhang(sparse, v.board), PreconditionError);
}

TEST(RefineParameters, StationaryAtGroundTruth) {
    const auto v = make_views(14, 5);
    CalibrationResult init;
    init.intrinsics = v.k;
    init.extrinsics = v.poses;
    const CalibrationResult r = refine_parameters(init, v.grids, v.board);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.intrinsics.fx, v.k.fx, 1e-10);
    EXPECT_NEAR(r.intrinsics.py, v.k.py, 1e-10);
    for (int i = 0; i < 5; ++i) EXPECT_LT((r.extrinsics[i].translation - v.poses[i].translation).norm(), 1e-10);
}

TEST(RefineParameters, RecoversPerturbedFocalLength) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto v = make_views(seed + 20, 6);
        CalibrationResult init;
        init.intrinsics = v.k;
        init.intrinsics.fx *= 1.05;
        init.extrinsics = v.poses;
        std::vector<double> trace;
        const CalibrationResult r = refine_parameters(init, v.grids, v.board, {.objective_trace = &trace});
        EXPECT_TRUE(r.converged);
        EXPECT_LT(intrinsics_metrics(v.k, r.intrinsics).e_fl, 1e-3);
        ASSERT_GE(trace.size(), 2u);
        for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
    }
}

TEST(RefineParameters, FixedSkewAndPoseOnly) {
    Rng rng(6);
    auto v = make_views(30, 5);
    for (auto& g : v.grids) g = with_noise(g, 0.2, rng);
    CalibrationResult init;
    init.intrinsics = v.k;
    init.intrinsics.skew = 0.0;
    init.extrinsics = v.poses;
    const CalibrationResult a = refine_parameters(init, v.grids, v.board, {.fix_skew = true});
    EXPECT_EQ(a.intrinsics.skew, 0.0);
    init.intrinsics = v.k;
    const CalibrationResult b = refine_parameters(init, v.grids, v.board, {.fix_intrinsics = true});
    EXPECT_EQ(b.intrinsics, v.k);
}

TEST(RefineParameters, RejectsNonFiniteStart) {
    const auto v = make_views(31, 3);
    CalibrationResult init;
    init.intrinsics = v.k;
    init.intrinsics.px = NAN;
    init.extrinsics = v.poses;
    EXPECT_THROW(refine_parameters(init, v.grids, v.board), PreconditionError);
}

TEST(EstimatePose, RecoversPoseUnderKnownIntrinsics) {
    const auto v = make_views(32, 3);
    for (int i = 0; i < 3; ++i) {
        const Extrinsics e = estimate_pose(v.k, v.grids[i], v.board);
        EXPECT_LT((e.rotation - v.poses[i].rotation).norm(), 1e-8);
        EXPECT_LT((e.translation - v.poses[i].translation).norm(), 1e-8);
    }
}

struct RansacScene {
    testing::SyntheticViews views;
    std::vector<int> corrupted;
};

RansacScene corrupted_scene(std::uint64_t seed, int corrupted) {
    RansacScene s{make_views(seed, 12), {}};
    Rng rng(derive_seed(seed, 77));
    for (auto& g : s.views.grids) g = with_noise(g, 0.05, rng);
    for (int i = 0; i < corrupted; ++i) {
        const int idx = 12 - corrupted + i;
        s.views.grids[static_cast<std::size_t>(idx)] = with_noise(s.views.grids[static_cast<std::size_t>(idx)], 5.0, rng);
        s.corrupted.push_back(idx);
    }
    return s;
}

TEST(RansacCalibrate, CleanImagesAreAllInliers) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto v = make_views(seed + 40, 12);
        RansacConfig cfg;
        cfg.seed = seed;
        const CalibrationResult r = ransac_calibrate(v.grids, v.board, cfg);
        EXPECT_EQ(r.inlier_images.size(), 12u);
        const CalibrationResult z = calibrate_zhang(v.grids, v.board);
        EXPECT_EQ(r.intrinsics, z.intrinsics);
    }
}

TEST(RansacCalibrate, ExcludesCorruptedImages) {
    int excluded = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const RansacScene s = corrupted_scene(seed + 50, 3);
        RansacConfig cfg;
        cfg.seed = seed;
        const CalibrationResult r = ransac_calibrate(s.views.grids, s.views.board, cfg);
        const bool clean = std::none_of(s.corrupted.begin(), s.corrupted.end(), [&](int i) {
            return std::find(r.inlier_images.begin(), r.inlier_images.end(), i) != r.inlier_images.end();
        });
        if (clean) ++excluded;
    }
    EXPECT_GE(excluded, 19);
}

TEST(RansacCalibrate, DeterministicAcrossThreadCounts) {
    const RansacScene s = corrupted_scene(60, 3);
    RansacConfig cfg;
    cfg.seed = 1234;
    const CalibrationResult a = ransac_calibrate(s.views.grids, s.views.board, cfg, {}, 1);
    const CalibrationResult b = ransac_calibrate(s.views.grids, s.views.board, cfg, {}, 4);
    const CalibrationResult c = ransac_calibrate(s.views.grids, s.views.board, cfg, {}, 1);
    EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
    EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(c).dump());
}

TEST(RansacCalibrate, Preconditions) {
    const auto v = make_views(61, 4);
    EXPECT_THROW(ransac_calibrate(v.grids, v.board, RansacConfig{}), PreconditionError);
    RansacConfig bad;
    bad.subset_size = 2;
    EXPECT_THROW(bad.validate(), PreconditionError);
    bad = {};
    bad.min_inlier_fraction = 0.0;
    EXPECT_THROW(bad.validate(), PreconditionError);
    bad = {};
    bad.rpe_threshold = -1.0;
    EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(RansacCalibrate, FailsWhenNoTrialFindsEnoughInliers) {
    Rng rng(7);
    auto v = make_views(62, 6);
    for (auto& g : v.grids) g = with_noise(g, 20.0, rng);
    RansacConfig cfg;
    cfg.rpe_threshold = 1e-6;
    cfg.max_trials = 5;
    EXPECT_THROW(ransac_calibrate(v.grids, v.board, cfg), RansacError);
}

TEST(Json, CalibrationResultRoundTrip) {
    const auto v = make_views(63, 4);
    CalibrationResult r = calibrate_zhang(v.grids, v.board);
    r.per_image_rpe[1] = std::numeric_limits<double>::infinity();
    const nlohmann::json j = r;
    EXPECT_TRUE(j["per_image_rpe"][1].is_null());
    const CalibrationResult back = j.get<CalibrationResult>();
    EXPECT_EQ(back.intrinsics, r.intrinsics);
    EXPECT_EQ(back.inlier_images, r.inlier_images);
    EXPECT_TRUE(std::isinf(back.per_image_rpe[1]));
    const RansacConfig cfg = nlohmann::json{{"subset_size", 6}}.get<RansacConfig>();
    EXPECT_EQ(cfg.subset_size, 6);
    EXPECT_EQ(cfg.max_trials, 50);
}

}  // namespace
}  // namespace hybridcal
