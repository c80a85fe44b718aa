#include "shadowlab/mask_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace shadowlab {

namespace {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
    return offs;
}

bool any_foreground(const Mask& m) {
    for (double v : m.data)
        if (v != 0.0) return true;
    return false;
}

// Windowed sums via prefix sums along rows then columns; the divisor is the
// actual (clipped) window area so border windows average over what exists.
void box_mean(const std::vector<double>& src, int width, int height, int radius,
              std::vector<double>& dst, std::vector<double>& scratch) {
    scratch.resize(src.size());
    dst.resize(src.size());

    std::vector<double> prefix(static_cast<std::size_t>(std::max(width, height)) + 1);
    for (int y = 0; y < height; ++y) {
        const double* row = src.data() + static_cast<std::size_t>(y) * width;
        prefix[0] = 0.0;
        for (int x = 0; x < width; ++x) prefix[x + 1] = prefix[x] + row[x];
        double* out = scratch.data() + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            const int lo = std::max(0, x - radius);
            const int hi = std::min(width - 1, x + radius);
            out[x] = prefix[hi + 1] - prefix[lo];
        }
    }
    for (int x = 0; x < width; ++x) {
        prefix[0] = 0.0;
        for (int y = 0; y < height; ++y)
            prefix[y + 1] = prefix[y] + scratch[static_cast<std::size_t>(y) * width + x];
        for (int y = 0; y < height; ++y) {
            const int lo = std::max(0, y - radius);
            const int hi = std::min(height - 1, y + radius);
            const double sum = prefix[hi + 1] - prefix[lo];
            const int cw = std::min(width - 1, x + radius) - std::max(0, x - radius) + 1;
            const int ch = hi - lo + 1;
            dst[static_cast<std::size_t>(y) * width + x] = sum / (cw * ch);
        }
    }
}

}  // namespace

Mask morph(const Mask& mask, int radius, MorphMode mode) {
    if (radius < 1) throw std::invalid_argument("morph: radius must be >= 1");
    if (!is_hard(mask)) throw std::invalid_argument("morph: mask must be hard (0/1 values)");

    const auto offs = disk_offsets(radius);
    Mask out(mask.width, mask.height);
    const bool erode = mode == MorphMode::erode;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            bool hit = erode;  // erode: assume 1 until a miss; dilate: assume 0 until a hit
            for (const auto& [dy, dx] : offs) {
                const int ny = y + dy;
                const int nx = x + dx;
                const bool inside =
                    ny >= 0 && ny < mask.height && nx >= 0 && nx < mask.width;
                const double v = inside ? mask.at(nx, ny) : 0.0;
                if (erode) {
                    if (v == 0.0) {
                        hit = false;
                        break;
                    }
                } else if (v == 1.0) {
                    hit = true;
                    break;
                }
            }
            out.at(x, y) = hit ? 1.0 : 0.0;
        }
    }
    return out;
}

CoreRing core_and_ring(const Mask& mask, const MorphConfig& cfg) {
    if (cfg.core_erode_radius < 1 || cfg.ring_gap < 1 || cfg.ring_width < 1)
        throw std::invalid_argument("core_and_ring: radii must be >= 1");
    if (!any_foreground(mask))
        throw std::invalid_argument("core_and_ring: mask has no foreground");

    CoreRing out;
    out.core = morph(mask, cfg.core_erode_radius, MorphMode::erode);
    if (!any_foreground(out.core))
        throw std::runtime_error("core_and_ring: mask too thin for configured erosion");

    const Mask outer = morph(mask, cfg.ring_gap + cfg.ring_width, MorphMode::dilate);
    const Mask inner = morph(mask, cfg.ring_gap, MorphMode::dilate);
    out.ring = Mask(mask.width, mask.height);
    for (std::size_t i = 0; i < out.ring.data.size(); ++i)
        out.ring.data[i] = outer.data[i] != 0.0 && inner.data[i] == 0.0 ? 1.0 : 0.0;
    return out;
}

UmbraPenumbra umbra_penumbra_split(const Mask& mask, int split_radius) {
    if (split_radius < 1)
        throw std::invalid_argument("umbra_penumbra_split: radius must be >= 1");

    UmbraPenumbra out;
    out.umbra = morph(mask, split_radius, MorphMode::erode);
    const Mask dilated = morph(mask, split_radius, MorphMode::dilate);
    out.penumbra = Mask(mask.width, mask.height);
    for (std::size_t i = 0; i < out.penumbra.data.size(); ++i)
        out.penumbra.data[i] = dilated.data[i] != 0.0 && out.umbra.data[i] == 0.0 ? 1.0 : 0.0;
    out.umbra_empty = !any_foreground(out.umbra);
    return out;
}

Mask guided_filter(const Image& guide, const Mask& input, const GuidedFilterConfig& cfg) {
    if (!same_size(guide, input))
        throw std::invalid_argument("guided_filter: guide/input dimension mismatch");
    if (cfg.radius < 1) throw std::invalid_argument("guided_filter: radius must be >= 1");
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("guided_filter: epsilon must be > 0");

    const Mask gray = luminance(guide);
    const int w = input.width;
    const int h = input.height;
    const std::size_t n = input.data.size();

    std::vector<double> scratch;
    std::vector<double> mean_g, mean_p, corr_gg, corr_gp;
    box_mean(gray.data, w, h, cfg.radius, mean_g, scratch);
    box_mean(input.data, w, h, cfg.radius, mean_p, scratch);

    std::vector<double> tmp(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = gray.data[i] * gray.data[i];
    box_mean(tmp, w, h, cfg.radius, corr_gg, scratch);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = gray.data[i] * input.data[i];
    box_mean(tmp, w, h, cfg.radius, corr_gp, scratch);

    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double var_g = corr_gg[i] - mean_g[i] * mean_g[i];
        const double cov_gp = corr_gp[i] - mean_g[i] * mean_p[i];
        a[i] = cov_gp / (var_g + cfg.epsilon);
        b[i] = mean_p[i] - a[i] * mean_g[i];
    }

    std::vector<double> mean_a, mean_b;
    box_mean(a, w, h, cfg.radius, mean_a, scratch);
    box_mean(b, w, h, cfg.radius, mean_b, scratch);

    Mask out(w, h);
    for (std::size_t i = 0; i < n; ++i)
        out.data[i] = std::min(1.0, std::max(0.0, mean_a[i] * gray.data[i] + mean_b[i]));
    return out;
}

}  // namespace shadowlab
