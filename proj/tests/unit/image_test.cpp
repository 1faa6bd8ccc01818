#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "hybridcal/image.h"
#include "hybridcal/rng.h"

namespace hybridcal {
namespace {

Image ramp(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) img(x, y) = 0.01 * x + 0.02 * y;
    }
    return img;
}

TEST(Image, RejectsMismatchedPixelCount) {
    EXPECT_THROW(Image(3, 3, std::vector<double>(8)), PreconditionError);
}

TEST(SampleBilinear, IntegralLocationReturnsStoredPixel) {
    Rng rng(1);
    Image img(8, 6);
    for (double& v : img.pixels()) v = rng.uniform();
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 8; ++x) EXPECT_EQ(sample_bilinear(img, x, y), img(x, y));
    }
}

TEST(SampleBilinear, ReproducesAffineFunctionsExactly) {
    const Image img = ramp(10, 10);
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform(0.0, 9.0);
        const double y = rng.uniform(0.0, 9.0);
        EXPECT_NEAR(sample_bilinear(img, x, y), 0.01 * x + 0.02 * y, 1e-12);
    }
}

TEST(SampleBilinear, OutsideUsesFill) {
    const Image img(4, 4, 0.3);
    EXPECT_EQ(sample_bilinear(img, -5.0, 1.0, 0.7), 0.7);
    EXPECT_NEAR(sample_bilinear(img, -0.5, 1.0, 0.7), 0.5, 1e-12);
}

TEST(GaussianBlur, ConstantImageIsUnchanged) {
    const Image img(9, 7, 0.42);
    const Image out = gaussian_blur(img, 5, 1.3);
    for (double v : out.pixels()) EXPECT_NEAR(v, 0.42, 1e-12);
}

TEST(GaussianBlur, PreservesAffineInteriorAndRejectsEvenKernels) {
    const Image img = ramp(12, 12);
    const Image out = gaussian_blur(img, 3, 1.5);
    for (int y = 1; y < 11; ++y) {
        for (int x = 1; x < 11; ++x) EXPECT_NEAR(out(x, y), img(x, y), 1e-12);
    }
    EXPECT_THROW(gaussian_blur(img, 4, 1.0), PreconditionError);
    EXPECT_THROW(gaussian_blur(img, 3, 0.0), PreconditionError);
}

TEST(Png, RoundTripQuantizesToEightBits) {
    Rng rng(3);
    Image img(17, 11);
    for (double& v : img.pixels()) v = rng.uniform();
    const auto path = std::filesystem::temp_directory_path() / "hybridcal_image_test.png";
    write_png(path, img);
    const Image back = read_png(path);
    ASSERT_EQ(back.size(), img.size());
    for (std::size_t i = 0; i < img.pixels().size(); ++i) {
        EXPECT_NEAR(back.pixels()[i], img.pixels()[i], 0.5 / 255.0 + 1e-12);
        EXPECT_DOUBLE_EQ(back.pixels()[i] * 255.0, std::round(back.pixels()[i] * 255.0));
    }
    std::filesystem::remove(path);
}

TEST(Png, MissingFileNamesThePath) {
    try {
        read_png("/nonexistent/dir/x.png");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.png"), std::string::npos);
    }
}

}  // namespace
}  // namespace hybridcal
