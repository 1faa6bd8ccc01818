#include "hybridcal/image.h"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <png.h>

namespace hybridcal {

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw PreconditionError("image dimensions must be non-negative");
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image::Image(int width, int height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 0 || height < 0 || pixels_.size() != static_cast<std::size_t>(width) * height) {
        throw PreconditionError("image pixel count does not match its dimensions");
    }
}

double sample_bilinear(const Image& img, double x, double y, double fill) {
    const double xf = std::floor(x);
    const double yf = std::floor(y);
    const double ax = x - xf;
    const double ay = y - yf;
    const int x0 = static_cast<int>(xf);
    const int y0 = static_cast<int>(yf);
    auto at = [&](int xi, int yi) { return img.contains(xi, yi) ? img(xi, yi) : fill; };
    if (ax == 0.0 && ay == 0.0) return at(x0, y0);
    return (1.0 - ax) * (1.0 - ay) * at(x0, y0) + ax * (1.0 - ay) * at(x0 + 1, y0) +
           (1.0 - ax) * ay * at(x0, y0 + 1) + ax * ay * at(x0 + 1, y0 + 1);
}

Image gaussian_blur(const Image& img, int kernel_size, double sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0) throw PreconditionError("blur kernel size must be odd");
    if (!(sigma > 0.0)) throw PreconditionError("blur sigma must be positive");
    const int half = kernel_size / 2;
    std::vector<double> kernel(kernel_size);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        kernel[i + half] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += kernel[i + half];
    }
    for (double& w : kernel) w /= sum;

    const int w = img.width();
    const int h = img.height();
    Image tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) acc += kernel[i + half] * img(std::clamp(x + i, 0, w - 1), y);
            tmp(x, y) = acc;
        }
    }
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) acc += kernel[i + half] * tmp(x, std::clamp(y + i, 0, h - 1));
            out(x, y) = acc;
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> bytes(img.pixels().size());
    std::transform(img.pixels().begin(), img.pixels().end(), bytes.begin(), [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width());
    png.height = static_cast<png_uint_32>(img.height());
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        throw IoError("failed to write PNG " + path.string() + ": " + png.message);
    }
}

Image read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw IoError("failed to open PNG " + path.string() + ": " + png.message);
    }
    png.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw IoError("failed to decode PNG " + path.string() + ": " + msg);
    }
    std::vector<double> pixels(bytes.size());
    std::transform(bytes.begin(), bytes.end(), pixels.begin(), [](std::uint8_t b) { return b / 255.0; });
    return Image(static_cast<int>(png.width), static_cast<int>(png.height), std::move(pixels));
}

}  // namespace hybridcal
