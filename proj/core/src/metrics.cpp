#include "shadowlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "shadowlab/png_io.hpp"

namespace shadowlab {

namespace {

double region_mean_luminance(const Mask& lum, const Mask& region, long* count_out = nullptr) {
    double sum = 0.0;
    long count = 0;
    for (std::size_t i = 0; i < lum.data.size(); ++i) {
        if (region.data[i] == 0.0) continue;
        sum += lum.data[i];
        ++count;
    }
    if (count_out) *count_out = count;
    return count > 0 ? sum / count : 0.0;
}

double masked_mse(const Image& pred, const Image& gt, const Mask* mask) {
    if (!same_size(pred, gt)) throw std::invalid_argument("metrics: image dimension mismatch");
    if (mask && !same_size(pred, *mask))
        throw std::invalid_argument("metrics: mask dimension mismatch");

    double sum = 0.0;
    long count = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (mask && mask->at(x, y) < 0.5) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(x, y, c) - gt.at(x, y, c);
                sum += d * d;
            }
            ++count;
        }
    if (count == 0) throw std::invalid_argument("metrics: mask selects no pixels");
    return sum / (3.0 * count);
}

constexpr int kSsimRadius = 5;  // 11x11 window
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Separable Gaussian with the window clipped at the border and the weights
// renormalized, which is the same as renormalizing the clipped 2D window
// because both the kernel and the valid region factorize.
void gauss_blur(const std::vector<double>& src, int w, int h, std::vector<double>& dst,
                std::vector<double>& scratch) {
    static const std::array<double, 2 * kSsimRadius + 1> kernel = [] {
        std::array<double, 2 * kSsimRadius + 1> k{};
        for (int i = -kSsimRadius; i <= kSsimRadius; ++i)
            k[i + kSsimRadius] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
        return k;
    }();

    scratch.resize(src.size());
    dst.resize(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int dx = -kSsimRadius; dx <= kSsimRadius; ++dx) {
                const int nx = x + dx;
                if (nx < 0 || nx >= w) continue;
                const double k = kernel[dx + kSsimRadius];
                acc += k * src[static_cast<std::size_t>(y) * w + nx];
                norm += k;
            }
            scratch[static_cast<std::size_t>(y) * w + x] = acc / norm;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int dy = -kSsimRadius; dy <= kSsimRadius; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= h) continue;
                const double k = kernel[dy + kSsimRadius];
                acc += k * scratch[static_cast<std::size_t>(ny) * w + x];
                norm += k;
            }
            dst[static_cast<std::size_t>(y) * w + x] = acc / norm;
        }
}

}  // namespace

double slr(const Image& image, const Mask& mask, const MorphConfig& cfg) {
    const CoreRing regions = core_and_ring(mask, cfg);
    const Mask lum = luminance(image);

    long core_count = 0, ring_count = 0;
    const double core_mean = region_mean_luminance(lum, regions.core, &core_count);
    const double ring_mean = region_mean_luminance(lum, regions.ring, &ring_count);
    if (ring_count == 0) throw std::runtime_error("slr: lit ring is empty");
    if (ring_mean == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return core_mean / ring_mean;
}

double delta_a(const Image& before, const Image& after, const Mask& mask) {
    if (!same_size(before, after) || !same_size(before, mask))
        throw std::invalid_argument("delta_a: dimension mismatch");

    const LabImage lab_before = rgb_to_lab(before);
    const LabImage lab_after = rgb_to_lab(after);
    double sum = 0.0;
    long count = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) < 0.5) continue;
            sum += lab_after.at(x, y, 1) - lab_before.at(x, y, 1);
            ++count;
        }
    if (count == 0) throw std::invalid_argument("delta_a: mask selects no pixels");
    return sum / count;
}

double psnr(const Image& pred, const Image& gt, const Mask* mask) {
    const double mse = masked_mse(pred, gt, mask);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double rmse(const Image& pred, const Image& gt, const Mask* mask) {
    return std::sqrt(masked_mse(pred, gt, mask)) * 255.0;
}

double ssim(const Image& pred, const Image& gt, const Mask* mask) {
    if (!same_size(pred, gt)) throw std::invalid_argument("ssim: image dimension mismatch");
    if (mask && !same_size(pred, *mask))
        throw std::invalid_argument("ssim: mask dimension mismatch");
    if (pred.width < 2 * kSsimRadius + 1 || pred.height < 2 * kSsimRadius + 1)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    const Mask lx = luminance(pred);
    const Mask ly = luminance(gt);
    const int w = pred.width, h = pred.height;
    const std::size_t n = lx.data.size();

    std::vector<double> scratch, mu_x, mu_y, xx(n), yy(n), xy(n), m_xx, m_yy, m_xy;
    gauss_blur(lx.data, w, h, mu_x, scratch);
    gauss_blur(ly.data, w, h, mu_y, scratch);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = lx.data[i] * lx.data[i];
        yy[i] = ly.data[i] * ly.data[i];
        xy[i] = lx.data[i] * ly.data[i];
    }
    gauss_blur(xx, w, h, m_xx, scratch);
    gauss_blur(yy, w, h, m_yy, scratch);
    gauss_blur(xy, w, h, m_xy, scratch);

    double sum = 0.0;
    long count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask && mask->at(x, y) < 0.5) continue;
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double var_x = m_xx[i] - mu_x[i] * mu_x[i];
            const double var_y = m_yy[i] - mu_y[i] * mu_y[i];
            const double cov = m_xy[i] - mu_x[i] * mu_y[i];
            const double num = (2.0 * mu_x[i] * mu_y[i] + kSsimC1) * (2.0 * cov + kSsimC2);
            const double den =
                (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + kSsimC1) * (var_x + var_y + kSsimC2);
            sum += num / den;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("ssim: mask selects no pixels");
    return sum / count;
}

double entropy(const Image& image) {
    const Mask lum = luminance(image);
    std::array<long, 256> hist{};
    for (double v : lum.data) {
        const double clamped = std::min(1.0, std::max(0.0, v));
        hist[static_cast<int>(std::floor(clamped * 255.0 + 0.5))] += 1;
    }
    const double total = static_cast<double>(lum.data.size());
    double bits = 0.0;
    for (long c : hist) {
        if (c == 0) continue;
        const double p = c / total;
        bits -= p * std::log2(p);
    }
    return bits;
}

namespace {

void accumulate(const std::optional<double>& v, double& sum, long& count) {
    if (v && std::isfinite(*v)) {
        sum += *v;
        ++count;
    }
}

// Linear-interpolated percentile over a sorted sample (the common
// rank = q/100 * (n-1) convention).
double percentile(const std::vector<double>& sorted, double q) {
    const double rank = q / 100.0 * (static_cast<double>(sorted.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

ReportAggregates aggregate(const MetricReport& report) {
    ReportAggregates agg;
    double s_slr = 0, s_da = 0, s_psnr = 0, s_ssim = 0, s_rmse = 0, s_ent = 0;
    long n_slr = 0, n_da = 0, n_psnr = 0, n_ssim = 0, n_rmse = 0, n_ent = 0;
    std::vector<double> slr_values;

    for (const MetricItem& item : report.items) {
        accumulate(item.slr, s_slr, n_slr);
        accumulate(item.delta_a, s_da, n_da);
        accumulate(item.psnr_s, s_psnr, n_psnr);
        accumulate(item.ssim_s, s_ssim, n_ssim);
        accumulate(item.rmse_s, s_rmse, n_rmse);
        accumulate(item.entropy, s_ent, n_ent);
        if (item.slr && std::isfinite(*item.slr)) slr_values.push_back(*item.slr);
    }

    if (n_slr) agg.mean_slr = s_slr / n_slr;
    if (n_da) agg.mean_delta_a = s_da / n_da;
    if (n_psnr) agg.mean_psnr_s = s_psnr / n_psnr;
    if (n_ssim) agg.mean_ssim_s = s_ssim / n_ssim;
    if (n_rmse) agg.mean_rmse_s = s_rmse / n_rmse;
    if (n_ent) agg.mean_entropy = s_ent / n_ent;

    if (!slr_values.empty()) {
        std::sort(slr_values.begin(), slr_values.end());
        agg.slr_range = {slr_values.front(), slr_values.back()};
        if (report.slr_percentile_q) {
            const double q = *report.slr_percentile_q;
            agg.slr_percentile_range = {percentile(slr_values, q),
                                        percentile(slr_values, 100.0 - q)};
        }
    }
    return agg;
}

namespace {

// JSON numbers cannot carry inf/nan, so sentinel values become strings.
nlohmann::json metric_value(double v) {
    if (std::isnan(v)) return "undefined";
    if (std::isinf(v)) return v > 0 ? "infinite" : "-infinite";
    return v;
}

void put_metric(nlohmann::json& row, const char* name, const std::optional<double>& v) {
    if (v) row[name] = metric_value(*v);
}

}  // namespace

void save_report(const MetricReport& report, const std::string& path) {
    nlohmann::json doc;
    doc["version"] = report.version;
    doc["config"] = {{"core_erode_radius", report.config.core_erode_radius},
                     {"ring_gap", report.config.ring_gap},
                     {"ring_width", report.config.ring_width},
                     {"split_radius", report.config.split_radius}};

    doc["items"] = nlohmann::json::array();
    for (const MetricItem& item : report.items) {
        nlohmann::json row{{"id", item.id}};
        put_metric(row, "slr", item.slr);
        put_metric(row, "delta_a", item.delta_a);
        put_metric(row, "psnr_s", item.psnr_s);
        put_metric(row, "ssim_s", item.ssim_s);
        put_metric(row, "rmse_s", item.rmse_s);
        put_metric(row, "entropy", item.entropy);
        doc["items"].push_back(std::move(row));
    }

    const ReportAggregates agg = aggregate(report);
    nlohmann::json& out = doc["aggregates"];
    out = nlohmann::json::object();
    if (agg.mean_slr) out["mean_slr"] = *agg.mean_slr;
    if (agg.mean_delta_a) out["mean_delta_a"] = *agg.mean_delta_a;
    if (agg.mean_psnr_s) out["mean_psnr_s"] = *agg.mean_psnr_s;
    if (agg.mean_ssim_s) out["mean_ssim_s"] = *agg.mean_ssim_s;
    if (agg.mean_rmse_s) out["mean_rmse_s"] = *agg.mean_rmse_s;
    if (agg.mean_entropy) out["mean_entropy"] = *agg.mean_entropy;
    if (agg.slr_range) out["slr_range"] = {(*agg.slr_range)[0], (*agg.slr_range)[1]};
    if (agg.slr_percentile_range)
        out["slr_percentile_range"] = {(*agg.slr_percentile_range)[0],
                                       (*agg.slr_percentile_range)[1]};

    doc["failures"] = report.failures;
    doc["failure_count"] = report.failures.size();

    std::ofstream file(path);
    if (!file) throw std::runtime_error("save_report: cannot open " + path);
    file << doc.dump(2) << '\n';
    if (!file) throw std::runtime_error("save_report: write failed for " + path);
}

MetricReport dataset_stats(const Manifest& manifest, const std::string& root_dir,
                           const MorphConfig& cfg, std::optional<double> percentile_q) {
    if (percentile_q && !(*percentile_q > 0.0 && *percentile_q < 50.0))
        throw std::invalid_argument("dataset_stats: percentile must be in (0, 50)");

    MetricReport report;
    report.config = cfg;
    report.slr_percentile_q = percentile_q;

    const std::string root = root_dir.empty() ? "." : root_dir;
    for (const TripletRecord& rec : manifest.records) {
        try {
            const Image free = load_image_png(root + "/" + rec.free_path);
            const Image shadow = load_image_png(root + "/" + rec.shadow_path);
            const Mask mask = load_hard_mask_png(root + "/" + rec.mask_path);

            MetricItem item;
            item.id = rec.id;
            item.slr = slr(shadow, mask, cfg);
            item.delta_a = delta_a(free, shadow, mask);
            item.entropy = entropy(shadow);
            report.items.push_back(std::move(item));
        } catch (const std::exception&) {
            report.failures.push_back(rec.id);
        }
    }
    return report;
}

}  // namespace shadowlab
