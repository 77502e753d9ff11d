#pragma once

#include <cstdint>
#include <vector>

#include "ovod/core.hpp"

namespace ovod {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Hue in degrees [0,360), saturation and value in [0,1].
struct Hsv {
    double h = 0.0;
    double s = 0.0;
    double v = 0.0;
};

class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, Rgb fill = {});
    RasterImage(int width, int height, std::vector<Rgb> pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<Rgb>& pixels() const { return pixels_; }

    const Rgb& at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    Rgb& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    bool contains(const BoundingBox& b) const;

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> pixels_;
};

/// Integer pixel rectangle [x0,x1) x [y0,y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

/// Pixels touched by the box, clipped to the image.
PixelRect pixel_region(const BoundingBox& box, int width, int height);

/// Row-major copy of the pixels inside the region.
std::vector<Rgb> region_pixels(const RasterImage& img, const PixelRect& r);

Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
inline Hsv rgb_to_hsv(Rgb p) { return rgb_to_hsv(p.r, p.g, p.b); }
Rgb hsv_to_rgb(const Hsv& hsv);

/// Luma on the 0..255 scale.
inline double gray_level(Rgb p) { return 0.299 * p.r + 0.587 * p.g + 0.114 * p.b; }

}  // namespace ovod
