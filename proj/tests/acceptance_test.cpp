// Acceptance suite: eight end-to-end checks, one pass/fail line each, exit 0
// only when every criterion holds. Tolerances are pinned here, next to the
// check they gate, so a regression cannot be hidden by loosening a constant
// somewhere else.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "shadowlab/decay.hpp"
#include "shadowlab/gradcheck_suite.hpp"
#include "shadowlab/image.hpp"
#include "shadowlab/losses.hpp"
#include "shadowlab/mask_ops.hpp"
#include "shadowlab/metrics.hpp"
#include "shadowlab/nets.hpp"
#include "shadowlab/nn.hpp"
#include "shadowlab/pipeline.hpp"
#include "shadowlab/png_io.hpp"
#include "shadowlab/rng.hpp"

using namespace shadowlab;
namespace fs = std::filesystem;

namespace {

// Collects the first failure; later checks still run but cannot overwrite it.
struct Scope {
    bool ok = true;
    std::string why;

    void check(bool cond, const std::string& msg) {
        if (!cond && ok) {
            ok = false;
            why = msg;
        }
    }
    void check_near(double got, double want, double tol, const std::string& what) {
        if (!(std::abs(got - want) <= tol))
            check(false, what + ": got " + std::to_string(got) + ", want " +
                             std::to_string(want) + " within " + std::to_string(tol));
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// --- criterion 1: decay estimation recovery ---------------------------------
// Planted (w, b) on textured scenes recovered within 2e-2; on a fixture with
// matched core/ring statistics, within 1e-9. Budget: 5 s.

bool crit_decay(std::string& why) {
    const auto t0 = std::chrono::steady_clock::now();
    Scope s;
    const MorphConfig cfg;

    for (int i = 0; i < 50 && s.ok; ++i) {
        Rng rng(splitmix64_at(11000, i));
        const Image free = oracle::tiled_texture(128, 128, 4, 11000 + i, 0.3, 0.9, 0.02);
        const Mask mask =
            oracle::disk_mask(128, 128, 58 + (i % 9), 58 + (i % 7), 28.0);
        DecayParams planted;
        for (int c = 0; c < 3; ++c) {
            planted.w[c] = rng.uniform(0.2, 0.6);
            planted.b[c] = rng.uniform(-0.02, 0.05);
        }
        const DecayParams est =
            estimate_decay(apply_de_exposure(free, mask, planted), mask, cfg);
        for (int c = 0; c < 3; ++c) {
            s.check_near(est.w[c], planted.w[c], 2e-2,
                         "textured fixture " + std::to_string(i) + " w");
            s.check_near(est.b[c], planted.b[c], 2e-2,
                         "textured fixture " + std::to_string(i) + " b");
        }
    }

    const oracle::MatchedFixture fx = oracle::matched_stats_fixture(cfg);
    DecayParams planted;
    planted.w = {0.3, 0.45, 0.6};
    planted.b = {0.01, 0.0, -0.02};
    const DecayParams est =
        estimate_decay(apply_de_exposure(fx.image, fx.mask, planted), fx.mask, cfg);
    for (int c = 0; c < 3; ++c) {
        s.check_near(est.w[c], planted.w[c], 1e-9, "matched fixture w");
        s.check_near(est.b[c], planted.b[c], 1e-9, "matched fixture b");
    }

    const double elapsed = seconds_since(t0);
    s.check(elapsed < 5.0, "over budget: " + std::to_string(elapsed) + " s (limit 5)");
    why = s.why;
    return s.ok;
}

// --- criterion 2: slr ground truth -------------------------------------------
// Hard-mask de-exposure with b = 0 on a uniform image must measure SLR = w.

bool crit_slr(std::string& why) {
    Scope s;
    const Image lit(96, 96, 0.6);
    const Mask mask = oracle::disk_mask(96, 96, 48, 48, 14.0);
    for (int i = 0; i < 20; ++i) {
        const double w = 0.05 + 0.9 * i / 19.0;
        DecayParams p;
        p.w = {w, w, w};
        p.b = {0.0, 0.0, 0.0};
        const double measured = slr(apply_de_exposure(lit, mask, p), mask, MorphConfig{});
        s.check_near(measured, w, 1e-6, "slr at w = " + std::to_string(w));
    }
    why = s.why;
    return s.ok;
}

// --- criterion 3: metric closed forms ----------------------------------------

bool crit_metrics(std::string& why) {
    Scope s;

    const Image zeros(32, 32, 0.0);
    const Image tenth(32, 32, 0.1);
    s.check_near(psnr(tenth, zeros), 20.0, 1e-9, "psnr at mse 0.01");
    s.check(std::isinf(psnr(tenth, tenth)), "psnr of identical images must be +inf");
    s.check_near(rmse(tenth, zeros), 25.5, 1e-12, "rmse of a uniform 0.1 offset");

    const Image textured = oracle::tiled_texture(32, 32, 4, 31, 0.2, 0.9, 0.03);
    s.check_near(ssim(textured, textured), 1.0, 1e-12, "ssim self-comparison");
    const double ya = 0.25, yb = 0.5, c1 = 1e-4;
    const double lum = (2.0 * ya * yb + c1) / (ya * ya + yb * yb + c1);
    s.check_near(ssim(Image(16, 16, ya), Image(16, 16, yb)), lum, 1e-6,
                 "ssim of a constant pair");

    s.check(entropy(Image(32, 32, 0.5)) == 0.0, "entropy of a constant image must be 0");
    Image two_level(32, 32, 0.0);
    for (int y = 0; y < 32; ++y)
        for (int x = 16; x < 32; ++x)
            for (int c = 0; c < 3; ++c) two_level.at(x, y, c) = 1.0;
    s.check(entropy(two_level) == 1.0, "entropy of a 50/50 two-level image must be 1");
    Image full_range(256, 4, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 256; ++x)
            for (int c = 0; c < 3; ++c) full_range.at(x, y, c) = x / 255.0;
    s.check(entropy(full_range) == 8.0, "entropy over all 256 levels must be 8");

    const Mask disk = oracle::disk_mask(32, 32, 16, 16, 9.0);
    s.check_near(delta_a(textured, textured, disk), 0.0, 1e-6, "delta-a of identical pair");
    s.check_near(delta_a(Image(32, 32, 0.8), Image(32, 32, 0.4), disk), 0.0, 1e-6,
                 "delta-a of a pure intensity change");

    why = s.why;
    return s.ok;
}

// --- criterion 4: gradient audit ----------------------------------------------
// Every analytic gradient in the suite agrees with finite differences at its
// pinned tolerance. Budget: 60 s.

bool crit_gradients(std::string& why) {
    const auto t0 = std::chrono::steady_clock::now();
    Scope s;
    const std::vector<BlockCheck> checks = run_gradient_checks(2026);
    s.check(checks.size() >= 10, "suite looks truncated: only " +
                                     std::to_string(checks.size()) + " blocks");
    for (const BlockCheck& c : checks)
        s.check(c.passed(), c.name + ": rel err " + std::to_string(c.worst_rel_err) +
                                " over tolerance " + std::to_string(c.tolerance));
    const double elapsed = seconds_since(t0);
    s.check(elapsed < 60.0, "over budget: " + std::to_string(elapsed) + " s (limit 60)");
    why = s.why;
    return s.ok;
}

// --- criterion 5: structural fuzz ----------------------------------------------
// 1000 randomized cases per invariant family.

bool crit_fuzz(std::string& why) {
    Scope s;
    constexpr int kCases = 1000;

    for (int i = 0; i < kCases && s.ok; ++i) {
        const int c = 4 + 4 * (i % 4);
        const int h = 3 + i % 5, w = 3 + (i / 5) % 5;
        const SdcaParams p = make_sdca(c, 5000 + i);
        const Tensor f = oracle::random_tensor(1 + i % 2, c, h, w, 6000 + i, -2.0, 2.0);
        const SdcaOut out = sdca_forward(f, p);
        for (double a : out.a_h.data)
            s.check(a > 0.0 && a < 1.0, "sdca a_h left (0,1) in case " + std::to_string(i));
        for (double a : out.a_w.data)
            s.check(a > 0.0 && a < 1.0, "sdca a_w left (0,1) in case " + std::to_string(i));
        for (std::size_t k = 0; k < f.data.size(); ++k)
            s.check(std::abs(out.fprime.data[k]) <= std::abs(f.data[k]),
                    "sdca grew a magnitude in case " + std::to_string(i));
    }

    for (int i = 0; i < kCases && s.ok; ++i) {
        const int c = 4 * (1 + i % 4);
        const int h = 2 + i % 4, w = 2 + (i / 4) % 4;
        const AffParams p = make_aff(c, 7000 + i);
        const Tensor fu = oracle::random_tensor(1, c, h, w, 7100 + i, -2.0, 2.0);
        const Tensor fp = oracle::random_tensor(1, c, h, w, 7200 + i, -2.0, 2.0);
        const AffOut out = aff_fuse(fu, fp, p);
        for (std::size_t k = 0; k < fu.data.size(); ++k) {
            const double lo = std::min(fu.data[k], fp.data[k]);
            const double hi = std::max(fu.data[k], fp.data[k]);
            s.check(out.fused.data[k] >= lo - 1e-12 && out.fused.data[k] <= hi + 1e-12,
                    "aff left the [fu, fp] envelope in case " + std::to_string(i));
            s.check(out.w.data[k] > 0.0 && out.w.data[k] < 1.0,
                    "aff weight left (0,1) in case " + std::to_string(i));
        }
        const AffOut same = aff_fuse(fu, fu, p);
        s.check(same.fused.data == fu.data,
                "aff of two identical streams must pass through bitwise, case " +
                    std::to_string(i));
    }

    for (int i = 0; i < kCases && s.ok; ++i) {
        const int w = 16 + i % 17, h = 16 + (i / 3) % 19;
        const Mask mask = oracle::random_hard_mask(w, h, 8000 + i);
        const int r = 1 + i % 4;
        const UmbraPenumbra up = umbra_penumbra_split(mask, r);
        const Mask ero = oracle::morph_ref(mask, r, true);
        const Mask dil = oracle::morph_ref(mask, r, false);
        for (std::size_t k = 0; k < mask.data.size(); ++k) {
            s.check(up.umbra.data[k] * up.penumbra.data[k] == 0.0,
                    "umbra and penumbra overlap in case " + std::to_string(i));
            s.check(up.umbra.data[k] == ero.data[k],
                    "umbra is not the erosion in case " + std::to_string(i));
            s.check(up.umbra.data[k] + up.penumbra.data[k] == dil.data[k],
                    "umbra + penumbra does not cover the dilation in case " +
                        std::to_string(i));
        }
    }

    for (int i = 0; i < kCases && s.ok; ++i) {
        const int w = 14 + i % 15, h = 14 + (i / 2) % 13;
        const Mask mask = oracle::random_hard_mask(w, h, 9000 + i);
        const int r = 1 + i % 3;
        Mask inverted = mask;
        for (double& v : inverted.data) v = 1.0 - v;
        const Mask eroded = morph(mask, r, MorphMode::erode);
        const Mask co_dilated = morph(inverted, r, MorphMode::dilate);
        for (int y = r; y < h - r; ++y)
            for (int x = r; x < w - r; ++x)
                s.check(eroded.at(x, y) == 1.0 - co_dilated.at(x, y),
                        "erode/dilate duality broke in the interior, case " +
                            std::to_string(i));
    }

    for (int i = 0; i < kCases && s.ok; ++i) {
        Rng rng(splitmix64_at(10000, i));
        const int w = 12 + i % 13, h = 12 + (i / 2) % 11;
        const int r = 1 + i % 3;
        const Image guide(w, h, rng.uniform(0.1, 0.9));
        Mask input(w, h);
        for (double& v : input.data) v = rng.uniform();
        GuidedFilterConfig cfg;
        cfg.radius = r;
        cfg.epsilon = 1e-3;
        const Mask got = guided_filter(guide, input, cfg);
        const Mask want = oracle::box_mean_ref(oracle::box_mean_ref(input, r), r);
        s.check(oracle::max_abs_diff(got, want) <= 1e-6,
                "constant-guide filter is not a double box mean, case " +
                    std::to_string(i));
    }

    why = s.why;
    return s.ok;
}

// --- criterion 6: loss identities ----------------------------------------------

bool crit_losses(std::string& why) {
    Scope s;

    Tensor ones(2, 1, 3, 3);
    for (double& v : ones.data) v = 1.0;
    const Tensor zeros(2, 1, 3, 3);
    s.check(lsgan_terms(ones, zeros).d_loss == 0.0,
            "discriminator loss at its fixed point must be exactly 0");
    s.check(lsgan_terms(zeros, ones).g_loss == 0.0,
            "generator loss at its fixed point must be exactly 0");

    const Image a = oracle::random_image(12, 10, 61);
    const Image b = oracle::random_image(12, 10, 62);
    s.check(cycle_loss(a, a, b, b) == 0.0, "cycle loss of perfect reconstructions");
    s.check(identity_loss(a, a) == 0.0, "identity loss of a fixed point");

    Image inside_only = a;
    const Mask disk = oracle::disk_mask(12, 10, 6, 5, 3.0);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x)
            if (disk.at(x, y) == 1.0)
                for (int c = 0; c < 3; ++c) inside_only.at(x, y, c) += 0.2;
    s.check(background_loss(inside_only, a, disk) == 0.0,
            "background loss must ignore masked pixels");

    s.check(pdss_total(1.0, 1.0, 1.0, 1.0) == 26.0, "pdss_total(1,1,1,1) must equal 26");
    s.check(pcds_total(1.0, 1.0, 1.0, 1.0) == 212.0, "pcds_total(1,1,1,1) must equal 212");

    const IdentityExtractor fx;
    Image delta(16, 16);
    Rng rng(63);
    for (double& v : delta.data) v = rng.uniform(-0.1, 0.1);
    const Image gt = oracle::random_image(16, 16, 64, 0.2, 0.8);
    Image unit = gt;
    for (std::size_t k = 0; k < unit.data.size(); ++k) unit.data[k] += delta.data[k];
    const double at_one = rec_loss(unit, gt, fx);
    for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        Image pred = gt;
        for (std::size_t k = 0; k < pred.data.size(); ++k)
            pred.data[k] += alpha * delta.data[k];
        s.check_near(rec_loss(pred, gt, fx), alpha * at_one, 1e-9,
                     "rec loss linearity at alpha = " + std::to_string(alpha));
    }

    why = s.why;
    return s.ok;
}

// --- criterion 7: batch determinism ----------------------------------------------
// Same seed, different worker counts: byte-identical trees. Background pixels
// survive the full write/read cycle untouched, and the dataset-level mean SLR
// lands on the planted decay scales. Budget: 30 s.

bool crit_batch(std::string& why) {
    const auto t0 = std::chrono::steady_clock::now();
    Scope s;
    const std::string root = oracle::make_temp_dir();
    const std::string free_dir = root + "/free_in";
    const std::string mask_dir = root + "/mask_in";
    fs::create_directories(free_dir);
    fs::create_directories(mask_dir);

    char name[16];
    for (int i = 0; i < 10; ++i) {
        std::snprintf(name, sizeof name, "img%02d.png", i);
        save_image_png(oracle::tiled_texture(96, 96, 4, 12000 + i, 0.3, 0.9, 0.02),
                       free_dir + "/" + name);
        save_mask_png(oracle::disk_mask(96, 96, 44 + i % 8, 44 + i % 5, 24.0),
                      mask_dir + "/" + name);
    }
    ParamLibrary lib;
    for (double w : {0.3, 0.4, 0.5})
        lib.entries.push_back({DecayParams{{w, w, w}, {0.0, 0.0, 0.0}}, "planted"});
    const std::string lib_path = root + "/library.json";
    save_library(lib, lib_path);

    BatchConfig serial;
    serial.gf.radius = 2;
    serial.jobs = 1;
    BatchConfig pooled = serial;
    pooled.jobs = 3;
    const Manifest m = run_batch(free_dir, mask_dir, lib_path, root + "/a", 424242, serial);
    run_batch(free_dir, mask_dir, lib_path, root + "/b", 424242, pooled);

    s.check(m.records.size() == 10, "expected 10 records, got " +
                                        std::to_string(m.records.size()));
    s.check(m.failures.empty(), "unexpected per-item failures");

    for (const TripletRecord& rec : m.records)
        for (const std::string& rel : {rec.free_path, rec.shadow_path, rec.mask_path})
            s.check(file_bytes(root + "/a/" + rel) == file_bytes(root + "/b/" + rel),
                    rel + " differs between 1-worker and 3-worker runs");
    s.check(file_bytes(root + "/a/manifest.json") == file_bytes(root + "/b/manifest.json"),
            "manifests differ between runs");

    for (const TripletRecord& rec : m.records) {
        const Image free = load_image_png(root + "/a/" + rec.free_path);
        const Image shadow = load_image_png(root + "/a/" + rec.shadow_path);
        const Mask mask = load_mask_png(root + "/a/" + rec.mask_path);
        for (int y = 0; y < mask.height && s.ok; ++y)
            for (int x = 0; x < mask.width && s.ok; ++x)
                if (mask.at(x, y) == 0.0)
                    for (int c = 0; c < 3; ++c)
                        s.check(shadow.at(x, y, c) == free.at(x, y, c),
                                rec.id + ": background pixel changed");
    }

    // Measure deep inside the shadow and far enough outside that the soft
    // matte (radius-2 guided filter: 4 px of support) is exactly 0 or 1.
    MorphConfig stats_cfg;
    stats_cfg.core_erode_radius = 6;
    stats_cfg.ring_gap = 5;
    stats_cfg.ring_width = 7;
    const MetricReport report = dataset_stats(m, root + "/a", stats_cfg);
    s.check(report.failures.empty(), "dataset_stats reported failures");
    double expected = 0.0;
    for (const TripletRecord& rec : m.records)
        expected += kLumaR * rec.params.w[0] + kLumaG * rec.params.w[1] +
                    kLumaB * rec.params.w[2];
    expected /= static_cast<double>(m.records.size());
    const ReportAggregates agg = aggregate(report);
    s.check(agg.mean_slr.has_value(), "mean SLR missing from the aggregates");
    if (agg.mean_slr)
        s.check_near(*agg.mean_slr, expected, 0.02, "dataset mean SLR vs planted scales");

    const double elapsed = seconds_since(t0);
    s.check(elapsed < 30.0, "over budget: " + std::to_string(elapsed) + " s (limit 30)");
    why = s.why;
    return s.ok;
}

// --- criterion 8: oracle equivalence ----------------------------------------------
// Library kernels against the straight-loop references, randomized shapes.

bool crit_oracle(std::string& why) {
    Scope s;
    constexpr double kTol = 1e-10;

    for (int i = 0; i < 20 && s.ok; ++i) {
        Rng rng(splitmix64_at(14000, i));
        const int cin = 2 + i % 3, cout = 1 + i % 4;
        const Tensor x = oracle::random_tensor(1 + i % 2, cin, 6 + i % 4, 7 + i % 3,
                                               14100 + i);

        const Conv2d plain = make_conv(cout, cin, 3, 3, rng, 1, 1, 1);
        s.check(oracle::max_abs_diff(conv2d(x, plain), oracle::conv2d_ref(x, plain)) <= kTol,
                "conv2d (3x3) diverged from the reference, case " + std::to_string(i));
        const Conv2d strided = make_conv(cout, cin, 3, 3, rng, 2, 1, 1);
        s.check(oracle::max_abs_diff(conv2d(x, strided),
                                     oracle::conv2d_ref(x, strided)) <= kTol,
                "conv2d (stride 2) diverged from the reference, case " + std::to_string(i));
        const Conv2d dilated = make_conv(cout, cin, 3, 3, rng, 1, 2, 2, 2);
        s.check(oracle::max_abs_diff(conv2d(x, dilated),
                                     oracle::conv2d_ref(x, dilated)) <= kTol,
                "conv2d (dilation 2) diverged from the reference, case " + std::to_string(i));

        const Tensor xg = oracle::random_tensor(1, 4, 5 + i % 3, 6, 14200 + i);
        const Conv2d grouped = make_conv(4, 4, 3, 3, rng, 1, 1, 1, 1, 2);
        s.check(oracle::max_abs_diff(conv2d(xg, grouped),
                                     oracle::conv2d_ref(xg, grouped)) <= kTol,
                "conv2d (groups 2) diverged from the reference, case " + std::to_string(i));

        const Conv2d strip = make_conv(4, 4, 5, 1, rng, 1, 2, 0, 1, 4);
        s.check(oracle::max_abs_diff(strip_conv_dw(xg, strip),
                                     oracle::conv2d_ref(xg, strip)) <= kTol,
                "strip conv diverged from the reference, case " + std::to_string(i));

        for (PoolMode mode :
             {PoolMode::avg_over_w, PoolMode::avg_over_h, PoolMode::global_avg})
            s.check(oracle::max_abs_diff(pool(x, mode), oracle::pool_ref(x, mode)) <= kTol,
                    "pool diverged from the reference, case " + std::to_string(i));

        for (int factor : {2, 3})
            s.check(oracle::max_abs_diff(bilinear_upsample(x, factor),
                                         oracle::upsample_ref(x, factor)) <= kTol,
                    "upsample diverged from the reference, case " + std::to_string(i));
    }

    for (int i = 0; i < 10 && s.ok; ++i) {
        const int c = 8 + 8 * (i % 2);
        const Tensor f = oracle::random_tensor(1 + i % 2, c, 4 + i % 3, 5 + i % 4,
                                               14300 + i, -2.0, 2.0);
        const SdcaParams sp = make_sdca(c, 14400 + i);
        s.check(oracle::max_abs_diff(sdca_forward(f, sp).fprime,
                                     oracle::sdca_ref(f, sp)) <= kTol,
                "sdca diverged from the straight-line reference, case " + std::to_string(i));

        const AffParams ap = make_aff(c, 14500 + i);
        const Tensor fp = oracle::random_tensor(f.n, c, f.h, f.w, 14600 + i, -2.0, 2.0);
        s.check(oracle::max_abs_diff(aff_fuse(f, fp, ap).fused,
                                     oracle::aff_ref(f, fp, ap)) <= kTol,
                "aff diverged from the straight-line reference, case " + std::to_string(i));
    }

    why = s.why;
    return s.ok;
}

}  // namespace

int main() {
    struct Criterion {
        int num;
        const char* label;
        bool (*fn)(std::string&);
    };
    const Criterion table[] = {
        {1, "decay estimation recovery", crit_decay},
        {2, "slr ground truth", crit_slr},
        {3, "metric closed forms", crit_metrics},
        {4, "gradient audit", crit_gradients},
        {5, "structural fuzz", crit_fuzz},
        {6, "loss identities", crit_losses},
        {7, "batch determinism", crit_batch},
        {8, "oracle equivalence", crit_oracle},
    };

    bool all_ok = true;
    for (const Criterion& c : table) {
        std::string why;
        bool ok = false;
        try {
            ok = c.fn(why);
        } catch (const std::exception& e) {
            why = std::string("unexpected exception: ") + e.what();
        }
        std::printf("criterion %d (%s): %s\n", c.num, c.label, ok ? "PASS" : "FAIL");
        if (!ok && !why.empty()) std::printf("  -> %s\n", why.c_str());
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
