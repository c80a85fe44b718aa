#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace shadowlab {

/// Row-major interleaved RGB raster with unit intensities in [0, 1].
/// All raster math is double precision; quantization to 8 bit happens only
/// when a PNG is written.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // width * height * 3, R G B per pixel

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

/// Single-channel raster in [0, 1]. A "hard" mask contains only {0, 1}.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // width * height

    Mask() = default;
    Mask(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

/// CIELab raster: L in [0, 100], a/b unbounded opponent axes.
struct LabImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // width * height * 3, L a b per pixel

    LabImage() = default;
    LabImage(int w, int h)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// BT.601 luma weights, applied to nonlinear sRGB values.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

// D65 reference white for CIELab.
inline constexpr double kLabWhiteX = 0.95047;
inline constexpr double kLabWhiteY = 1.0;
inline constexpr double kLabWhiteZ = 1.08883;

// sRGB piecewise gamma.
inline constexpr double kSrgbGammaThreshold = 0.04045;
inline constexpr double kSrgbGammaExponent = 2.4;

bool same_size(const Image& a, const Image& b);
bool same_size(const Image& a, const Mask& b);
bool same_size(const Mask& a, const Mask& b);

/// True when every value is exactly 0 or 1.
bool is_hard(const Mask& mask);

/// Clamp every channel to [0, 1]; in-range values pass through unchanged.
Image clip_unit(Image image);
double clip_unit(double v);

/// Per-pixel BT.601 luma Y = 0.299 R + 0.587 G + 0.114 B.
Mask luminance(const Image& image);

/// sRGB -> linear light -> XYZ(D65) -> CIELab. The neutral axis (R = G = B)
/// maps to a = b = 0.
LabImage rgb_to_lab(const Image& image);

/// Scalar version of the sRGB decoding used by rgb_to_lab.
double srgb_to_linear(double v);

}  // namespace shadowlab
