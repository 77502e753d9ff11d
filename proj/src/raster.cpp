#include "ovod/raster.hpp"

#include <algorithm>
#include <cmath>

namespace ovod {

RasterImage::RasterImage(int width, int height, Rgb fill)
    : RasterImage(width, height, std::vector<Rgb>(static_cast<std::size_t>(std::max(width, 0)) *
                                                      static_cast<std::size_t>(std::max(height, 0)),
                                                  fill)) {}

RasterImage::RasterImage(int width, int height, std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) throw ValidationError("raster: width and height must be at least 1");
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw ValidationError("raster: pixel count must equal width*height");
}

bool RasterImage::contains(const BoundingBox& b) const {
    return b.valid() && b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= width_ && b.y_max <= height_;
}

PixelRect pixel_region(const BoundingBox& box, int width, int height) {
    PixelRect r;
    if (!box.valid()) return r;
    r.x0 = std::clamp(static_cast<int>(std::floor(box.x_min)), 0, width);
    r.y0 = std::clamp(static_cast<int>(std::floor(box.y_min)), 0, height);
    r.x1 = std::clamp(static_cast<int>(std::ceil(box.x_max)), 0, width);
    r.y1 = std::clamp(static_cast<int>(std::ceil(box.y_max)), 0, height);
    return r;
}

std::vector<Rgb> region_pixels(const RasterImage& img, const PixelRect& r) {
    std::vector<Rgb> out;
    if (r.empty()) return out;
    out.reserve(static_cast<std::size_t>(r.width()) * r.height());
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) out.push_back(img.at(x, y));
    return out;
}

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = r8 / 255.0;
    const double g = g8 / 255.0;
    const double b = b8 / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;

    Hsv out;
    out.v = mx;
    out.s = mx > 0.0 ? delta / mx : 0.0;
    if (delta <= 0.0) return out;

    double h;
    if (mx == r)
        h = 60.0 * std::fmod((g - b) / delta, 6.0);
    else if (mx == g)
        h = 60.0 * ((b - r) / delta + 2.0);
    else
        h = 60.0 * ((r - g) / delta + 4.0);
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
    return out;
}

Rgb hsv_to_rgb(const Hsv& hsv) {
    const double h = std::fmod(std::fmod(hsv.h, 360.0) + 360.0, 360.0);
    const double s = std::clamp(hsv.s, 0.0, 1.0);
    const double v = std::clamp(hsv.v, 0.0, 1.0);
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    auto to8 = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
    return {to8(r + m), to8(g + m), to8(b + m)};
}

}  // namespace ovod
