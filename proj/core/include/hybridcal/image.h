#pragma once

#include <filesystem>
#include <vector>

#include "hybridcal/types.h"

namespace hybridcal {

// Single-channel raster of doubles, row-major. Pixel (x, y) covers the unit
// square centred on integer coordinates (x, y).
class Image {
public:
    Image() = default;
    Image(int width, int height, double fill = 0.0);
    Image(int width, int height, std::vector<double> pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    ImageSize size() const { return {width_, height_}; }
    bool empty() const { return pixels_.empty(); }

    double operator()(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    double& operator()(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    const std::vector<double>& pixels() const { return pixels_; }
    std::vector<double>& pixels() { return pixels_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> pixels_;
};

// Bilinear sample at a continuous location. Neighbours outside the raster
// contribute `fill`. An integral location returns the stored pixel exactly.
double sample_bilinear(const Image& img, double x, double y, double fill = 0.0);

// Separable Gaussian blur with an odd square kernel; borders are replicated.
Image gaussian_blur(const Image& img, int kernel_size, double sigma);

// 8-bit grayscale PNG. Values are clamped to [0, 1] and scaled by 255.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace hybridcal
