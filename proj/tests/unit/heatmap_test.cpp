#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hybridcal/heatmap.h"
#include "hybridcal/rng.h"
#include "hybridcal/synthgen.h"

namespace hybridcal {
namespace {

constexpr ImageSize kSmall{40, 40};

Heatmap single(const Vec2& mu, double sigma, ImageSize size = kSmall) {
    const Points2 pts{mu};
    return render_heatmap(pts, sigma, size);
}

TEST(Heatmap, ClampsAndRejectsNonFinite) {
    const Heatmap h(2, 1, {-0.5, 1.5});
    EXPECT_EQ(h(0, 0), 0.0);
    EXPECT_EQ(h(1, 0), 1.0);
    EXPECT_THROW(Heatmap(1, 1, {NAN}), PreconditionError);
    EXPECT_THROW(Heatmap(2, 2, {0.0}), PreconditionError);
}

TEST(RenderHeatmap, GaussianValues) {
    const Heatmap h = single(Vec2(10, 10), 1.5);
    EXPECT_EQ(h(10, 10), 1.0);
    EXPECT_NEAR(h(10, 11), std::exp(-1.0 / 4.5), 1e-15);
    EXPECT_NEAR(h(10, 11), 0.8007, 1e-4);
    EXPECT_NEAR(h(12, 9), std::exp(-5.0 / 4.5), 1e-15);
}

TEST(RenderHeatmap, EmptyListIsZero) {
    const Heatmap h = render_heatmap(Points2{}, 1.5, kSmall);
    for (double v : h.values()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(render_heatmap(Points2{}, 0.0, kSmall), PreconditionError);
}

TEST(RenderHeatmap, DisjointCornersAdd) {
    const Points2 both{{8.3, 9.1}, {30.6, 28.2}};
    const Heatmap h = render_heatmap(both, 1.5, kSmall);
    const Heatmap a = single(both[0], 1.5);
    const Heatmap b = single(both[1], 1.5);
    for (std::size_t i = 0; i < h.values().size(); ++i) EXPECT_EQ(h.values()[i], a.values()[i] + b.values()[i]);
}

TEST(HeatmapMse, HandCasesAndOracle) {
    const Heatmap zero(2, 2, {0, 0, 0, 0});
    const Heatmap one(2, 2, {1, 1, 1, 1});
    EXPECT_EQ(heatmap_mse(zero, one), 1.0);
    EXPECT_EQ(heatmap_mse(one, one), 0.0);
    Rng rng(1);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> u(300);
        std::vector<double> v(300);
        for (auto& x : u) x = rng.uniform();
        for (auto& x : v) x = rng.uniform();
        double sum = 0.0;
        for (int i = 0; i < 300; ++i) sum += (u[i] - v[i]) * (u[i] - v[i]);
        const double mse = heatmap_mse(Heatmap(20, 15, u), Heatmap(20, 15, v));
        EXPECT_NEAR(mse, sum / 300, 1e-12);
        EXPECT_GE(mse, 0.0);
    }
    EXPECT_THROW(heatmap_mse(zero, Heatmap(3, 2)), PreconditionError);
}

TEST(DetectPeaks, SingleCornerAtNearestPixel) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const Vec2 mu(rng.uniform(10, 30), rng.uniform(10, 30));
        const auto peaks = detect_peaks(single(mu, 1.5), 0.5, 4);
        ASSERT_EQ(peaks.size(), 1u);
        EXPECT_EQ(peaks[0].x, static_cast<int>(std::lround(mu.x())));
        EXPECT_EQ(peaks[0].y, static_cast<int>(std::lround(mu.y())));
    }
}

TEST(DetectPeaks, HalfIntegerPlateauGivesOnePeak) {
    const auto peaks = detect_peaks(single(Vec2(12.5, 20.5), 1.5), 0.5, 4);
    ASSERT_EQ(peaks.size(), 1u);
    EXPECT_EQ(peaks[0].x, 12);
    EXPECT_EQ(peaks[0].y, 20);
}

TEST(DetectPeaks, ZeroHeatmapIsEmpty) { EXPECT_TRUE(detect_peaks(Heatmap(20, 20), 0.5, 4).empty()); }

TEST(DetectPeaks, FullGridFindsEveryCorner) {
    Points2 corners;
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 11; ++c) corners.emplace_back(40.3 + 12.0 * c + 0.1 * r, 60.7 + 11.0 * r);
    }
    const auto peaks = detect_peaks(render_heatmap(corners, 1.5, {200, 160}), 0.5, 4);
    EXPECT_EQ(peaks.size(), 88u);
    for (std::size_t i = 1; i < peaks.size(); ++i) EXPECT_GE(peaks[i - 1].value, peaks[i].value);
}

TEST(DetectPeaks, SuppressesCloseNeighbours) {
    const Points2 corners{{10, 10}, {13, 10}};
    EXPECT_EQ(detect_peaks(render_heatmap(corners, 1.0, kSmall), 0.5, 1.5).size(), 2u);
    EXPECT_EQ(detect_peaks(render_heatmap(corners, 1.0, kSmall), 0.5, 4).size(), 1u);
}

TEST(FitGaussianSurface, SubPixelCentre) {
    const Vec2 mu(10.37, 22.81);
    const Heatmap h = single(mu, 1.5);
    const CornerObservation o = fit_gaussian_surface(h, 10, 23, 7);
    EXPECT_LT((o.mu - mu).norm(), 1e-6);
    EXPECT_NEAR(o.sigma.x(), 1.5, 1e-6);
    EXPECT_NEAR(o.sigma.y(), 1.5, 1e-6);
    EXPECT_LT(o.fit_residual, 1e-9);
    EXPECT_EQ(o.status, ObservationStatus::inlier);
}

TEST(FitGaussianSurface, IntegralCentre) {
    const CornerObservation o = fit_gaussian_surface(single(Vec2(15, 17), 1.5), 15, 17);
    EXPECT_LT((o.mu - Vec2(15, 17)).norm(), 1e-9);
    EXPECT_NEAR(o.sigma.x(), 1.5, 1e-6);
}

TEST(FitGaussianSurface, ExactForAnyCentreAndSigma) {
    Rng rng(3);
    for (int t = 0; t < 300; ++t) {
        const Vec2 mu(rng.uniform(12, 28), rng.uniform(12, 28));
        const double sigma = rng.uniform(1.0, 3.0);
        const Heatmap h = single(mu, sigma);
        const auto peaks = detect_peaks(h, 0.5, 4);
        ASSERT_EQ(peaks.size(), 1u);
        const CornerObservation o = fit_gaussian_surface(h, peaks[0].x, peaks[0].y);
        EXPECT_LT((o.mu - mu).norm(), 1e-6) << "sigma " << sigma;
        EXPECT_NEAR(o.sigma.x(), sigma, 1e-6);
    }
}

TEST(FitGaussianSurface, IntegerTranslationEquivariance) {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        const Heatmap h = single(Vec2(rng.uniform(12, 20), rng.uniform(12, 20)), rng.uniform(1.0, 2.5));
        const int dx = static_cast<int>(rng.below(10));
        const int dy = static_cast<int>(rng.below(10));
        std::vector<double> shifted(h.values().size(), 0.0);
        for (int y = 0; y + dy < h.height(); ++y) {
            for (int x = 0; x + dx < h.width(); ++x) shifted[static_cast<std::size_t>(y + dy) * h.width() + x + dx] = h(x, y);
        }
        const Heatmap hs(h.width(), h.height(), shifted);
        const auto p = detect_peaks(h, 0.5, 4).at(0);
        const CornerObservation a = fit_gaussian_surface(h, p.x, p.y);
        const CornerObservation b = fit_gaussian_surface(hs, p.x + dx, p.y + dy);
        EXPECT_LT((b.mu - a.mu - Vec2(dx, dy)).norm(), 1e-9);
    }
}

TEST(FitGaussianSurface, UniformNoiseStaysWithinBudget) {
    Rng rng(5);
    int within = 0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        const Vec2 mu(rng.uniform(15, 25), rng.uniform(15, 25));
        std::vector<double> v = single(mu, 1.5).values();
        for (double& x : v) x += rng.uniform(-0.01, 0.01);
        const Heatmap h(kSmall.width, kSmall.height, v);
        const CornerObservation o = fit_gaussian_surface(h, static_cast<int>(std::lround(mu.x())),
                                                         static_cast<int>(std::lround(mu.y())));
        if ((o.mu - mu).norm() < 0.05) ++within;
    }
    EXPECT_GE(within, trials * 99 / 100);
}

TEST(FitGaussianSurface, FlatPatchIsNotAGaussian) {
    const Heatmap h(20, 20, std::vector<double>(400, 0.6));
    try {
        const CornerObservation o = fit_gaussian_surface(h, 10, 10);
        EXPECT_EQ(o.status, ObservationStatus::rejected_residual);
        EXPECT_TRUE(std::isinf(o.sigma.x()));
    } catch (const FitError&) {
        SUCCEED();
    }
}

TEST(FitGaussianSurface, ErrorPaths) {
    const Heatmap h = single(Vec2(1, 1), 1.5);
    EXPECT_THROW(fit_gaussian_surface(h, 1, 1), FitError);
    EXPECT_THROW(fit_gaussian_surface(h, 10, 10, 6), PreconditionError);
    EXPECT_THROW(fit_gaussian_surface(h, 50, 10), PreconditionError);
    Heatmap spike(20, 20, [] {
        std::vector<double> v(400, 0.0);
        v[10 * 20 + 10] = 1.0;
        return v;
    }());
    EXPECT_THROW(fit_gaussian_surface(spike, 10, 10), FitError);
}

TEST(RejectOutliers, ThresholdArithmetic) {
    std::vector<CornerObservation> obs(4);
    for (auto& o : obs) o.sigma = Vec2(1.5, 1.5);
    auto out = reject_outliers(obs, {});
    for (const auto& o : out) EXPECT_EQ(o.status, ObservationStatus::inlier);
    obs[1].sigma.x() = 6.0;
    obs[2].fit_residual = 0.2;
    obs[3].mu = Vec2(7, 8);
    out = reject_outliers(obs, {});
    EXPECT_EQ(out[0].status, ObservationStatus::inlier);
    EXPECT_EQ(out[1].status, ObservationStatus::rejected_sigma);
    EXPECT_EQ(out[2].status, ObservationStatus::rejected_residual);
    EXPECT_EQ(out[3].status, ObservationStatus::inlier);
    for (std::size_t i = 0; i < obs.size(); ++i) EXPECT_EQ(out[i].mu, obs[i].mu);
    EXPECT_THROW(reject_outliers(obs, {1.5, 1.0, 0.05}), PreconditionError);
}

TEST(RejectOutliers, UniformDiskAmongCornersIsRejected) {
    Points2 corners;
    for (int i = 0; i < 4; ++i) corners.emplace_back(15.2 + 20 * i, 15.7);
    std::vector<double> v = render_heatmap(corners, 1.5, {100, 60}).values();
    for (int y = 0; y < 60; ++y) {
        for (int x = 0; x < 100; ++x) {
            if (std::hypot(x - 50.0, y - 42.0) <= 3.0) v[static_cast<std::size_t>(y) * 100 + x] = 1.0;
        }
    }
    const Heatmap h(100, 60, v);
    std::vector<CornerObservation> obs;
    for (const auto& p : detect_peaks(h, 0.5, 4)) obs.push_back(fit_gaussian_surface(h, p.x, p.y));
    ASSERT_EQ(obs.size(), 5u);
    const auto out = reject_outliers(obs, {});
    int kept = 0;
    for (const auto& o : out) {
        const bool is_disk = (o.mu - Vec2(50, 42)).norm() < 4.0;
        if (is_disk) {
            EXPECT_NE(o.status, ObservationStatus::inlier);
        } else {
            EXPECT_EQ(o.status, ObservationStatus::inlier);
            ++kept;
        }
    }
    EXPECT_EQ(kept, 4);
}

TEST(ResponseDetect, ConstantImageGivesZero) {
    const Heatmap h = response_detect(Image(40, 30, 0.4));
    for (double v : h.values()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(response_detect(Image(5, 5, 0.4), 5), PreconditionError);
}

double nearest_peak_distance(const std::vector<Peak>& peaks, const Vec2& p) {
    double best = 1e9;
    for (const auto& q : peaks) best = std::min(best, (Vec2(q.x, q.y) - p).norm());
    return best;
}

TEST(ResponseDetect, CleanBoardPeaksMatchCorners) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Intrinsics k = sample_camera(seed);
        const BoardSpec board;
        const SceneSample s = render_board(k, sample_pose(k, board, {}, seed + 100), board);
        const auto peaks = detect_peaks(response_detect(s.image), 0.25, 4);
        for (const auto& c : s.gt_corners) EXPECT_LE(nearest_peak_distance(peaks, c), 2.0);
        int near = 0;
        for (const auto& p : peaks) {
            double d = 1e9;
            for (const auto& c : s.gt_corners) d = std::min(d, (c - Vec2(p.x, p.y)).norm());
            if (d <= 2.0) ++near;
        }
        EXPECT_EQ(near, board.corner_count()) << "seed " << seed;
        EXPECT_GE(static_cast<int>(peaks.size()), board.corner_count());
    }
}

TEST(ResponseDetect, BlurredBoardKeepsEveryCorner) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Intrinsics k = sample_camera(seed + 10);
        const BoardSpec board;
        SceneSample s = render_board(k, sample_pose(k, board, {}, seed + 200), board);
        s.image = gaussian_blur(s.image, 3, 1.5);
        const auto peaks = detect_peaks(response_detect(s.image), 0.25, 4);
        for (const auto& c : s.gt_corners) EXPECT_LE(nearest_peak_distance(peaks, c), 2.0);
    }
}

TEST(Hmap, RoundTripAndErrors) {
    Rng rng(6);
    std::vector<double> v(7 * 5);
    for (auto& x : v) x = rng.uniform();
    const Heatmap h(7, 5, v);
    const auto path = std::filesystem::temp_directory_path() / "hybridcal_heatmap_test.hmap";
    write_hmap(path, h);
    EXPECT_EQ(std::filesystem::file_size(path), 12u + 4u * 35u);
    const Heatmap back = read_hmap(path);
    ASSERT_EQ(back.size(), h.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(v[i])));
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE";
    }
    EXPECT_THROW(read_hmap(path), IoError);
    std::filesystem::remove(path);
    EXPECT_THROW(read_hmap(path), IoError);
}

TEST(Json, ObservationRoundTrip) {
    CornerObservation o;
    o.mu = Vec2(1.5, 2.25);
    o.sigma = Vec2(std::numeric_limits<double>::infinity(), 1.0);
    o.status = ObservationStatus::rejected_residual;
    const nlohmann::json j = o;
    EXPECT_TRUE(j["sigma"][0].is_null());
    EXPECT_EQ(j["status"], "rejected_residual");
    const CornerObservation back = j.get<CornerObservation>();
    EXPECT_EQ(back.mu, o.mu);
    EXPECT_TRUE(std::isinf(back.sigma.x()));
    EXPECT_EQ(back.status, o.status);
}

}  // namespace
}  // namespace hybridcal
