#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "shadowlab/image.hpp"
#include "shadowlab/mask_ops.hpp"
#include "shadowlab/pipeline.hpp"

namespace shadowlab {

// Shadow-to-lit ratio: mean luminance over the eroded shadow core divided by
// mean luminance over the adjacent lit ring. Returns NaN when the ring is
// pure black (the ratio is undefined, not an error).
double slr(const Image& image, const Mask& mask, const MorphConfig& cfg);

// Mean CIELab a-channel shift over mask pixels (mask value >= 0.5 counts as
// membership). Physically plausible shadows move a only slightly.
double delta_a(const Image& before, const Image& after, const Mask& mask);

// Peak signal-to-noise ratio in dB with peak 1.0. MSE runs over all channels
// of the selected pixels; identical inputs give +infinity.
double psnr(const Image& pred, const Image& gt, const Mask* mask = nullptr);

// Root mean square error reported on the 0-255 scale.
double rmse(const Image& pred, const Image& gt, const Mask* mask = nullptr);

// Mean structural similarity on luminance, 11x11 Gaussian window with
// sigma 1.5, C1 = 0.01^2, C2 = 0.03^2 on the unit intensity scale. The full
// SSIM map is computed first (windows shrink and renormalize at the image
// border); a mask selects which map pixels enter the mean.
double ssim(const Image& pred, const Image& gt, const Mask* mask = nullptr);

// Shannon entropy (bits) of the 256-bin histogram of 8-bit-quantized
// luminance. Always in [0, 8].
double entropy(const Image& image);

// Per-image metric row. Fields are optional because different evaluation
// modes fill different subsets; non-finite values are kept and serialized as
// explicit sentinels ("infinite", "undefined") rather than dropped.
struct MetricItem {
    std::string id;
    std::optional<double> slr;
    std::optional<double> delta_a;
    std::optional<double> psnr_s;
    std::optional<double> ssim_s;
    std::optional<double> rmse_s;
    std::optional<double> entropy;
};

struct MetricReport {
    std::string version = "1";
    MorphConfig config;
    std::vector<MetricItem> items;
    std::vector<std::string> failures;
    // When set (0 < q < 50), aggregates include the [q, 100-q] percentile
    // interval of SLR alongside the plain min/max range.
    std::optional<double> slr_percentile_q;
};

struct ReportAggregates {
    std::optional<double> mean_slr;
    std::optional<double> mean_delta_a;
    std::optional<double> mean_psnr_s;
    std::optional<double> mean_ssim_s;
    std::optional<double> mean_rmse_s;
    std::optional<double> mean_entropy;
    std::optional<std::array<double, 2>> slr_range;             // min/max
    std::optional<std::array<double, 2>> slr_percentile_range;  // only if q set
};

// Means and ranges over the finite recorded values (sentinel rows are
// reported per item but excluded from aggregation).
ReportAggregates aggregate(const MetricReport& report);

void save_report(const MetricReport& report, const std::string& path);

// Evaluates a synthesis manifest: per triplet, SLR and entropy of the
// shadowed image plus the a-shift against the shadow-free original, using
// the stored mask hardened at 0.5. Unreadable items land in failures and
// are skipped by the aggregates. root_dir resolves the manifest's relative
// paths.
MetricReport dataset_stats(const Manifest& manifest, const std::string& root_dir,
                           const MorphConfig& cfg,
                           std::optional<double> percentile_q = std::nullopt);

}  // namespace shadowlab
