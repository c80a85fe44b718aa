#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shadowlab/decay.hpp"
#include "shadowlab/image.hpp"
#include "shadowlab/mask_ops.hpp"

namespace shadowlab {

// One synthesized (shadow-free, shadowed, mask) triplet. Paths are stored
// relative to the dataset root so the whole tree can be moved or diffed.
struct TripletRecord {
    std::string id;
    std::string free_path;
    std::string shadow_path;
    std::string mask_path;
    DecayParams params;
    std::uint64_t seed = 0;
    GuidedFilterConfig gf_config;
};

struct ManifestFailure {
    std::string id;
    std::string reason;
};

struct Manifest {
    std::string version = "1";
    std::uint64_t global_seed = 0;
    std::string library_path;
    std::vector<TripletRecord> records;   // input order, regardless of execution order
    std::vector<ManifestFailure> failures;
};

struct SynthesisResult {
    Image shadowed;
    Mask soft_mask;
    DecayParams params;
    std::string warning;  // empty when nothing noteworthy happened
};

struct BatchConfig {
    GuidedFilterConfig gf;
    int jobs = 1;
};

// Soft mask via guided_filter(free, pseudo_mask), params drawn from the
// library by seed, then de-exposure compositing. The soft mask is snapped to
// the 8-bit grid before compositing so the stored mask is exactly the one
// the shadow was rendered with (this is what makes "stored mask 0 => pixel
// untouched" hold bit-for-bit after PNG quantization).
SynthesisResult synthesize_triplet(const Image& free, const Mask& pseudo_mask,
                                   const ParamLibrary& library, std::uint64_t seed,
                                   const GuidedFilterConfig& gf_cfg);

// Batch synthesis over name-matched <free_dir>/X.png + <mask_dir>/X.png
// pairs, sorted by name. Per-item seeds derive from (global_seed, index) so
// worker count cannot change any output. Writes free/, shadow/, mask/
// subtrees plus manifest.json under out_dir and returns the manifest.
// Per-item failures are recorded, never fatal; an unreadable library is.
Manifest run_batch(const std::string& free_dir, const std::string& mask_dir,
                   const std::string& library_path, const std::string& out_dir,
                   std::uint64_t global_seed, const BatchConfig& cfg);

void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

}  // namespace shadowlab
