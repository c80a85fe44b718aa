#pragma once

#include "shadowlab/image.hpp"

namespace shadowlab {

// Radii for the morphological decompositions. The paper-side quantities they
// feed (shadow core vs. adjacent lit ring, umbra vs. penumbra) are well
// defined for any radius; these defaults just keep the bands comfortably
// wider than the guided-filter smoothing and can be overridden per call.
struct MorphConfig {
    int core_erode_radius = 5;
    int ring_gap = 3;
    int ring_width = 7;
    int split_radius = 7;
};

struct GuidedFilterConfig {
    int radius = 8;
    double epsilon = 1e-3;  // regularizer on the [0,1] intensity scale
};

enum class MorphMode { erode, dilate };

struct CoreRing {
    Mask core;  // shadow interior, safely away from the boundary
    Mask ring;  // adjacent lit band outside the mask
};

struct UmbraPenumbra {
    Mask umbra;
    Mask penumbra;
    bool umbra_empty = false;  // set when erosion wipes out thin masks
};

// Binary min/max filter over a disk element (center distance <= radius).
// Out-of-bounds pixels count as background, so erosion eats an r-wide band
// at the image border and dilation never grows past it.
Mask morph(const Mask& mask, int radius, MorphMode mode);

// core = erode(mask, core_erode_radius)
// ring = dilate(mask, ring_gap + ring_width) \ dilate(mask, ring_gap)
// Throws if the erosion leaves no core pixels.
CoreRing core_and_ring(const Mask& mask, const MorphConfig& cfg);

// umbra = erode(mask, r); penumbra = dilate(mask, r) \ umbra.
// A thin mask may have an empty umbra; that is reported, not an error.
UmbraPenumbra umbra_penumbra_split(const Mask& mask, int split_radius);

// Gray-guide guided filter (He et al.): per-window linear regression of the
// input on luminance(guide), then coefficient averaging. Windows shrink at
// the border instead of reflecting, so constant inputs pass through
// unchanged up to machine rounding. Output is clamped to [0,1].
Mask guided_filter(const Image& guide, const Mask& input, const GuidedFilterConfig& cfg);

}  // namespace shadowlab
