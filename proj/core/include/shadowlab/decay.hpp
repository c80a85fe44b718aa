#pragma once

#include <array>
#include <string>
#include <vector>

#include "shadowlab/image.hpp"
#include "shadowlab/mask_ops.hpp"

namespace shadowlab {

// Per-channel moments over a masked region. Standard deviation is the
// population form (divide by N), so a two-pixel region {0.2, 0.4} reports
// sigma = 0.1 exactly.
struct RegionStats {
    std::array<double, 3> mean{};
    std::array<double, 3> std{};
    long pixel_count = 0;
};

// Linear de-exposure model: shadowed = clip(w * lit + b), per channel.
// w is a dimensionless scale (typically < 1), b a unit-intensity bias.
struct DecayParams {
    std::array<double, 3> w{};
    std::array<double, 3> b{};
};

struct LibraryEntry {
    DecayParams params;
    std::string source;  // where the estimate came from (file id, "manual", ...)
};

struct ParamLibrary {
    std::vector<LibraryEntry> entries;
    std::string version = "1";
};

inline constexpr long kMinRegionPixels = 16;

RegionStats region_stats(const Image& image, const Mask& region);

// w = sigma_core / sigma_ring, b = mu_core - w * mu_ring, per channel, where
// core/ring come from core_and_ring(mask, cfg). Throws on flat ring regions
// (scale unidentifiable) and propagates the too-thin-mask error.
DecayParams estimate_decay(const Image& image, const Mask& mask, const MorphConfig& cfg);

// Screens estimates before they enter a library: w must lie in (0, 2] and
// |b| <= 1 on every channel. Values outside that range are almost always
// boundary-mixed-pixel artifacts, not plausible illumination decay.
bool acceptable_library_entry(const DecayParams& params, std::string* reason = nullptr);

// JSON on disk ({version, entries:[{w, b, source}]}), doubles serialized at
// full precision so save/load round-trips bit-exactly. Loading rejects
// version mismatches and entries that violate the DecayParams invariants.
void save_library(const ParamLibrary& library, const std::string& path);
ParamLibrary load_library(const std::string& path);

// Uniform pick over entries driven by one SplitMix64 step of the seed, so a
// given (library, seed) pair always yields the same entry.
DecayParams sample_params(const ParamLibrary& library, unsigned long long seed);

// shadowed = free * (1 - m) + clip(w * free + b) * m, per channel.
// Pixels with m = 0 come through bit-identical.
Image apply_de_exposure(const Image& free, const Mask& soft_mask, const DecayParams& params);

}  // namespace shadowlab
