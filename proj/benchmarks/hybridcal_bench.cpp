#include <benchmark/benchmark.h>

#include "hybridcal/calibrate.h"
#include "hybridcal/distortion.h"
#include "hybridcal/gridorder.h"
#include "hybridcal/heatmap.h"
#include "hybridcal/synthgen.h"
#include "synthetic.h"

namespace hybridcal {
namespace {

void BM_GaussianFit(benchmark::State& state) {
    const Points2 one{Vec2(20.3, 19.6)};
    const Heatmap h = render_heatmap(one, 1.5, {40, 40});
    for (auto _ : state) benchmark::DoNotOptimize(fit_gaussian_surface(h, 20, 20));
}
BENCHMARK(BM_GaussianFit);

void BM_HomographyDlt(benchmark::State& state) {
    const auto v = testing::make_views(1, 1);
    Points2 board;
    for (int r = 0; r < v.board.rows; ++r)
        for (int c = 0; c < v.board.cols; ++c) board.push_back(v.board.world_point(r, c).head<2>());
    for (auto _ : state) benchmark::DoNotOptimize(estimate_homography_dlt(board, v.grids[0].points));
}
BENCHMARK(BM_HomographyDlt);

void BM_SortCorners(benchmark::State& state) {
    const auto v = testing::make_views(2, 1);
    for (auto _ : state) benchmark::DoNotOptimize(sort_corners(v.grids[0].points, 8, 11));
}
BENCHMARK(BM_SortCorners);

void BM_RenderBoard(benchmark::State& state) {
    const Intrinsics k = sample_camera(3);
    const BoardSpec board;
    const Extrinsics e = sample_pose(k, board, {}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(render_board(k, e, board));
}
BENCHMARK(BM_RenderBoard)->Unit(benchmark::kMillisecond);

void BM_ResponseDetect(benchmark::State& state) {
    const Intrinsics k = sample_camera(4);
    const BoardSpec board;
    const SceneSample s = render_board(k, sample_pose(k, board, {}, 4), board);
    for (auto _ : state) benchmark::DoNotOptimize(response_detect(s.image));
}
BENCHMARK(BM_ResponseDetect)->Unit(benchmark::kMillisecond);

void BM_FitCorrectionModel(benchmark::State& state) {
    const DistortionModel m = sample_distortion(DistortionLevel::level2, {}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(fit_correction_model(m));
}
BENCHMARK(BM_FitCorrectionModel);

void BM_CalibrateZhang(benchmark::State& state) {
    const auto v = testing::make_views(6, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(calibrate_zhang(v.grids, v.board));
}
BENCHMARK(BM_CalibrateZhang)->Arg(5)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace hybridcal

BENCHMARK_MAIN();
