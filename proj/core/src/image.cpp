#include "shadowlab/image.hpp"

#include <algorithm>
#include <cmath>

namespace shadowlab {

namespace {

// sRGB -> XYZ (D65). Each row is scaled by its own sum so the reference
// white (1,1,1) maps exactly to (kLabWhiteX, kLabWhiteY, kLabWhiteZ) and the
// neutral axis lands on a = b = 0 to machine precision.
constexpr double kXyzRow[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

// f(t) of the CIELab encoding: cube root above (6/29)^3, linear below.
constexpr double kLabDelta = 6.0 / 29.0;
constexpr double kLabDelta3 = kLabDelta * kLabDelta * kLabDelta;

double lab_f(double t) {
    if (t > kLabDelta3) return std::cbrt(t);
    return t / (3.0 * kLabDelta * kLabDelta) + 4.0 / 29.0;
}

}  // namespace

bool same_size(const Image& a, const Image& b) {
    return a.width == b.width && a.height == b.height;
}
bool same_size(const Image& a, const Mask& b) {
    return a.width == b.width && a.height == b.height;
}
bool same_size(const Mask& a, const Mask& b) {
    return a.width == b.width && a.height == b.height;
}

bool is_hard(const Mask& mask) {
    return std::all_of(mask.data.begin(), mask.data.end(),
                       [](double v) { return v == 0.0 || v == 1.0; });
}

double clip_unit(double v) { return std::min(1.0, std::max(0.0, v)); }

Image clip_unit(Image image) {
    for (double& v : image.data) v = clip_unit(v);
    return image;
}

Mask luminance(const Image& image) {
    Mask out(image.width, image.height);
    const std::size_t n = image.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i] = kLumaR * image.data[3 * i] + kLumaG * image.data[3 * i + 1] +
                      kLumaB * image.data[3 * i + 2];
    }
    return out;
}

double srgb_to_linear(double v) {
    if (v <= kSrgbGammaThreshold) return v / 12.92;
    return std::pow((v + 0.055) / 1.055, kSrgbGammaExponent);
}

LabImage rgb_to_lab(const Image& image) {
    // Row sums of the sRGB matrix; dividing by them makes the white-point
    // normalization X/Xn, Y/Yn, Z/Zn exact for neutral inputs.
    constexpr double kRowSum[3] = {
        kXyzRow[0][0] + kXyzRow[0][1] + kXyzRow[0][2],
        kXyzRow[1][0] + kXyzRow[1][1] + kXyzRow[1][2],
        kXyzRow[2][0] + kXyzRow[2][1] + kXyzRow[2][2],
    };

    LabImage out(image.width, image.height);
    const std::size_t n = image.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = srgb_to_linear(image.data[3 * i]);
        const double g = srgb_to_linear(image.data[3 * i + 1]);
        const double b = srgb_to_linear(image.data[3 * i + 2]);

        const double tx = (kXyzRow[0][0] * r + kXyzRow[0][1] * g + kXyzRow[0][2] * b) / kRowSum[0];
        const double ty = (kXyzRow[1][0] * r + kXyzRow[1][1] * g + kXyzRow[1][2] * b) / kRowSum[1];
        const double tz = (kXyzRow[2][0] * r + kXyzRow[2][1] * g + kXyzRow[2][2] * b) / kRowSum[2];

        const double fx = lab_f(tx);
        const double fy = lab_f(ty);
        const double fz = lab_f(tz);

        out.data[3 * i] = 116.0 * fy - 16.0;
        out.data[3 * i + 1] = 500.0 * (fx - fy);
        out.data[3 * i + 2] = 200.0 * (fy - fz);
    }
    return out;
}

}  // namespace shadowlab
