#include "cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "shadowlab/decay.hpp"
#include "shadowlab/gradcheck_suite.hpp"
#include "shadowlab/image.hpp"
#include "shadowlab/mask_ops.hpp"
#include "shadowlab/metrics.hpp"
#include "shadowlab/pipeline.hpp"
#include "shadowlab/png_io.hpp"
#include "shadowlab/rng.hpp"

namespace fs = std::filesystem;

namespace shadowlab {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<fs::path> sorted_pngs(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    return files;
}

void print_optional(const char* label, const std::optional<double>& v) {
    if (v) std::cout << "  " << label << ": " << *v << '\n';
}

void print_aggregates(const MetricReport& report) {
    const ReportAggregates agg = aggregate(report);
    std::cout << "items: " << report.items.size() << ", failures: " << report.failures.size()
              << '\n';
    print_optional("mean SLR", agg.mean_slr);
    if (agg.slr_range)
        std::cout << "  SLR range: [" << (*agg.slr_range)[0] << ", " << (*agg.slr_range)[1]
                  << "]\n";
    if (agg.slr_percentile_range)
        std::cout << "  SLR percentile range: [" << (*agg.slr_percentile_range)[0] << ", "
                  << (*agg.slr_percentile_range)[1] << "]\n";
    print_optional("mean delta-a", agg.mean_delta_a);
    print_optional("mean PSNR-S", agg.mean_psnr_s);
    print_optional("mean SSIM-S", agg.mean_ssim_s);
    print_optional("mean RMSE-S", agg.mean_rmse_s);
    print_optional("mean entropy", agg.mean_entropy);
}

// --- extract-params ----------------------------------------------------------

int cmd_extract_params(const std::string& images, const std::string& masks,
                       const std::string& library_path, const MorphConfig& cfg) {
    ParamLibrary library;
    int rejected = 0, failed = 0;
    for (const fs::path& img_path : sorted_pngs(images)) {
        const std::string id = img_path.stem().string();
        const fs::path mask_path = fs::path(masks) / img_path.filename();
        try {
            if (!fs::exists(mask_path))
                throw std::runtime_error("mask not found: " + mask_path.string());
            const Image image = load_image_png(img_path.string());
            const Mask mask = load_hard_mask_png(mask_path.string());
            const DecayParams params = estimate_decay(image, mask, cfg);
            std::string reason;
            if (!acceptable_library_entry(params, &reason)) {
                std::cerr << id << ": rejected (" << reason << ")\n";
                ++rejected;
                continue;
            }
            library.entries.push_back({params, id});
        } catch (const std::exception& e) {
            std::cerr << id << ": failed (" << e.what() << ")\n";
            ++failed;
        }
    }
    if (library.entries.empty()) {
        std::cerr << "error: no acceptable decay estimates; library not written\n";
        return kExitData;
    }
    save_library(library, library_path);
    std::cout << "wrote " << library.entries.size() << " entries to " << library_path << " ("
              << rejected << " rejected, " << failed << " failed)\n";
    return kExitOk;
}

// --- synthesize ---------------------------------------------------------------

int cmd_synthesize(const std::string& free_dir, const std::string& masks,
                   const std::string& library_path, const std::string& out,
                   std::uint64_t seed, const BatchConfig& cfg) {
    const Manifest manifest = run_batch(free_dir, masks, library_path, out, seed, cfg);
    for (const ManifestFailure& f : manifest.failures)
        std::cerr << f.id << ": " << f.reason << '\n';
    std::cout << "synthesized " << manifest.records.size() << " triplets ("
              << manifest.failures.size() << " failures) under " << out << '\n';
    if (manifest.records.empty()) {
        std::cerr << "error: no triplet was produced\n";
        return kExitData;
    }
    return kExitOk;
}

// --- decompose -----------------------------------------------------------------

int cmd_decompose(const std::string& masks, const std::string& out, int split_radius) {
    std::vector<fs::path> inputs;
    if (fs::is_directory(masks))
        inputs = sorted_pngs(masks);
    else
        inputs.push_back(masks);
    if (inputs.empty()) {
        std::cerr << "error: no mask files under " << masks << '\n';
        return kExitData;
    }

    fs::create_directories(out);
    int ok = 0;
    for (const fs::path& path : inputs) {
        const std::string stem = path.stem().string();
        try {
            const Mask mask = load_hard_mask_png(path.string());
            const UmbraPenumbra split = umbra_penumbra_split(mask, split_radius);
            if (split.umbra_empty)
                std::cerr << stem << ": warning: umbra empty after erosion\n";
            save_mask_png(split.umbra, (fs::path(out) / (stem + "_umbra.png")).string());
            save_mask_png(split.penumbra,
                          (fs::path(out) / (stem + "_penumbra.png")).string());
            ++ok;
        } catch (const std::exception& e) {
            std::cerr << stem << ": failed (" << e.what() << ")\n";
        }
    }
    std::cout << "decomposed " << ok << " of " << inputs.size() << " masks into " << out
              << '\n';
    return ok > 0 ? kExitOk : kExitData;
}

// --- evaluate -------------------------------------------------------------------

int cmd_evaluate(const std::string& images, const std::string& free_dir,
                 const std::string& masks, const std::string& report_path,
                 const MorphConfig& cfg) {
    MetricReport report;
    report.config = cfg;
    for (const fs::path& pred_path : sorted_pngs(images)) {
        const std::string id = pred_path.stem().string();
        try {
            const fs::path gt_path = fs::path(free_dir) / pred_path.filename();
            const fs::path mask_path = fs::path(masks) / pred_path.filename();
            if (!fs::exists(gt_path))
                throw std::runtime_error("reference not found: " + gt_path.string());
            if (!fs::exists(mask_path))
                throw std::runtime_error("mask not found: " + mask_path.string());
            const Image pred = load_image_png(pred_path.string());
            const Image gt = load_image_png(gt_path.string());
            const Mask mask = load_hard_mask_png(mask_path.string());

            MetricItem item;
            item.id = id;
            item.slr = slr(pred, mask, cfg);
            item.delta_a = delta_a(gt, pred, mask);
            item.psnr_s = psnr(pred, gt, &mask);
            item.ssim_s = ssim(pred, gt, &mask);
            item.rmse_s = rmse(pred, gt, &mask);
            item.entropy = entropy(pred);
            report.items.push_back(std::move(item));
        } catch (const std::exception& e) {
            std::cerr << id << ": failed (" << e.what() << ")\n";
            report.failures.push_back(id);
        }
    }
    if (report.items.empty()) {
        std::cerr << "error: nothing evaluated\n";
        return kExitData;
    }
    print_aggregates(report);
    if (!report_path.empty()) {
        save_report(report, report_path);
        std::cout << "report written to " << report_path << '\n';
    }
    return kExitOk;
}

// --- stats ----------------------------------------------------------------------

int cmd_stats(const std::string& root, const std::string& report_path,
              std::optional<double> percentile, const MorphConfig& cfg) {
    const Manifest manifest = load_manifest((fs::path(root) / "manifest.json").string());
    const MetricReport report = dataset_stats(manifest, root, cfg, percentile);
    print_aggregates(report);
    if (!report_path.empty()) {
        save_report(report, report_path);
        std::cout << "report written to " << report_path << '\n';
    }
    if (report.items.empty()) {
        std::cerr << "error: no item could be evaluated\n";
        return kExitData;
    }
    return kExitOk;
}

// --- gradcheck ---------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed) {
    const std::vector<BlockCheck> checks = run_gradient_checks(seed);
    bool all_ok = true;
    for (const BlockCheck& c : checks) {
        std::cout << (c.passed() ? "PASS" : "FAIL") << "  " << c.name << ": worst rel err "
                  << c.worst_rel_err << " (tolerance " << c.tolerance << ")\n";
        all_ok = all_ok && c.passed();
    }
    std::cout << (all_ok ? "all gradients verified\n" : "gradient verification FAILED\n");
    return all_ok ? kExitOk : kExitData;
}

// --- demo -----------------------------------------------------------------------

Image textured_image(int side, Rng& rng) {
    // Periodically tiled texture plus fine grain. Tiling keeps the statistics
    // stationary, so any two regions of the image share moments and the decay
    // estimator's matched-albedo assumption actually holds.
    constexpr int kTile = 4;
    std::array<double, kTile * kTile * 3> tile;
    for (double& v : tile) v = rng.uniform(0.25, 0.9);
    Image img(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = tile[((y % kTile) * kTile + x % kTile) * 3 + c];
                img.at(x, y, c) = clip_unit(v + rng.uniform(-0.02, 0.02));
            }
    return img;
}

Mask disk_mask(int side, int cx, int cy, int radius) {
    Mask m(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            m.at(x, y) = std::hypot(x - cx, y - cy) <= radius ? 1.0 : 0.0;
    return m;
}

int cmd_demo(const std::string& out, std::uint64_t seed, int jobs) {
    constexpr int kSide = 96;
    constexpr int kCount = 6;
    const fs::path root(out);
    fs::create_directories(root / "corpus" / "free");
    fs::create_directories(root / "corpus" / "mask");
    fs::create_directories(root / "corpus" / "shadow");

    std::cout << "[1/4] generating a " << kCount << "-image corpus\n";
    const std::array<DecayParams, 3> presets = {
        DecayParams{{0.3, 0.3, 0.3}, {0.0, 0.0, 0.0}},
        DecayParams{{0.4, 0.42, 0.38}, {0.01, 0.0, 0.01}},
        DecayParams{{0.5, 0.5, 0.5}, {0.02, 0.02, 0.02}},
    };
    for (int i = 0; i < kCount; ++i) {
        Rng rng(splitmix64_at(seed, i));
        const Image free = textured_image(kSide, rng);
        const int cx = 30 + static_cast<int>(rng.bounded(kSide - 60));
        const int cy = 30 + static_cast<int>(rng.bounded(kSide - 60));
        const Mask mask = disk_mask(kSide, cx, cy, 20);
        const Image shadowed = apply_de_exposure(free, mask, presets[i % presets.size()]);

        char name[16];
        std::snprintf(name, sizeof name, "img%02d.png", i);
        save_image_png(free, (root / "corpus" / "free" / name).string());
        save_mask_png(mask, (root / "corpus" / "mask" / name).string());
        save_image_png(shadowed, (root / "corpus" / "shadow" / name).string());
    }

    std::cout << "[2/4] estimating decay parameters from the shadowed corpus\n";
    const std::string library_path = (root / "library.json").string();
    const int rc = cmd_extract_params((root / "corpus" / "shadow").string(),
                                      (root / "corpus" / "mask").string(), library_path,
                                      MorphConfig{});
    if (rc != kExitOk) return rc;

    std::cout << "[3/4] synthesizing a paired dataset from the shadow-free corpus\n";
    BatchConfig cfg;
    cfg.jobs = jobs;
    // Narrow penumbra: keeps the measured core inside the fully shadowed
    // zone, so the reported SLR should land on the sampled decay scales.
    cfg.gf.radius = 2;
    const Manifest manifest =
        run_batch((root / "corpus" / "free").string(), (root / "corpus" / "mask").string(),
                  library_path, (root / "dataset").string(), seed, cfg);
    if (manifest.records.empty()) {
        std::cerr << "error: synthesis produced nothing\n";
        return kExitData;
    }

    std::cout << "[4/4] dataset statistics\n";
    const MetricReport report =
        dataset_stats(manifest, (root / "dataset").string(), MorphConfig{});
    double expected = 0.0;
    for (const TripletRecord& r : manifest.records)
        expected += kLumaR * r.params.w[0] + kLumaG * r.params.w[1] + kLumaB * r.params.w[2];
    expected /= static_cast<double>(manifest.records.size());
    std::cout << "  sampled decay scale (luma-weighted mean): " << expected << '\n';
    print_aggregates(report);
    std::cout << "demo artifacts under " << out << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"shadowlab: physics-guided shadow synthesis and evaluation"};
    app.require_subcommand(1);

    std::string images, masks, free_dir, library, out, report;
    std::uint64_t seed = 0;
    int jobs = 1;
    MorphConfig morph;
    GuidedFilterConfig gf;
    std::optional<double> percentile;

    const auto add_morph_flags = [&](CLI::App* sub, bool with_split) {
        sub->add_option("--core-erode", morph.core_erode_radius,
                        "Erosion radius for the shadow core (px)");
        sub->add_option("--ring-gap", morph.ring_gap, "Gap between mask and lit ring (px)");
        sub->add_option("--ring-width", morph.ring_width, "Width of the lit ring (px)");
        if (with_split)
            sub->add_option("--split-radius", morph.split_radius,
                            "Umbra erosion / penumbra dilation radius (px)");
    };

    CLI::App* extract = app.add_subcommand(
        "extract-params", "Estimate decay parameters from shadow/mask pairs");
    extract->add_option("--images", images, "Directory of shadowed images")->required();
    extract->add_option("--masks", masks, "Directory of matching hard masks")->required();
    extract->add_option("--library", library, "Output library path")->required();
    add_morph_flags(extract, false);

    CLI::App* synth = app.add_subcommand(
        "synthesize", "Batch-synthesize shadowed triplets from shadow-free images");
    synth->add_option("--free", free_dir, "Directory of shadow-free images")->required();
    synth->add_option("--masks", masks, "Directory of matching pseudo-shadow masks")
        ->required();
    synth->add_option("--library", library, "Decay parameter library")->required();
    synth->add_option("--out", out, "Output dataset directory")->required();
    synth->add_option("--seed", seed, "Global seed");
    synth->add_option("--gf-radius", gf.radius, "Guided filter radius (px)");
    synth->add_option("--gf-eps", gf.epsilon, "Guided filter regularization");
    synth->add_option("--jobs", jobs, "Worker threads");

    CLI::App* decomp = app.add_subcommand(
        "decompose", "Split hard masks into umbra and penumbra bands");
    decomp->add_option("--masks", masks, "Mask file or directory")->required();
    decomp->add_option("--out", out, "Output directory")->required();
    decomp->add_option("--split-radius", morph.split_radius,
                       "Umbra erosion / penumbra dilation radius (px)");

    CLI::App* eval = app.add_subcommand(
        "evaluate", "Full-reference metrics between two image sets");
    eval->add_option("--images", images, "Directory of images under test")->required();
    eval->add_option("--free", free_dir, "Directory of reference images")->required();
    eval->add_option("--masks", masks, "Directory of shadow-region masks")->required();
    eval->add_option("--report", report, "Write the metric report here");
    add_morph_flags(eval, false);

    CLI::App* stats = app.add_subcommand(
        "stats", "No-reference statistics over a synthesized dataset");
    stats->add_option("--images", images, "Dataset root (contains manifest.json)")
        ->required();
    stats->add_option("--report", report, "Write the metric report here");
    stats->add_option("--percentile-range", percentile,
                      "Also report the [q, 100-q] SLR percentile interval");
    add_morph_flags(stats, false);

    CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
    grad->add_option("--seed", seed, "Fixture seed");

    CLI::App* demo = app.add_subcommand(
        "demo", "End-to-end run on a generated corpus: estimate, synthesize, evaluate");
    demo->add_option("--out", out, "Output directory")->required();
    demo->add_option("--seed", seed, "Global seed");
    demo->add_option("--jobs", jobs, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (extract->parsed()) return cmd_extract_params(images, masks, library, morph);
        if (synth->parsed()) {
            BatchConfig cfg;
            cfg.gf = gf;
            cfg.jobs = jobs;
            return cmd_synthesize(free_dir, masks, library, out, seed, cfg);
        }
        if (decomp->parsed()) return cmd_decompose(masks, out, morph.split_radius);
        if (eval->parsed()) return cmd_evaluate(images, free_dir, masks, report, morph);
        if (stats->parsed()) return cmd_stats(images, report, percentile, morph);
        if (grad->parsed()) return cmd_gradcheck(seed);
        if (demo->parsed()) return cmd_demo(out, seed, jobs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;  // unreachable with require_subcommand(1)
}

}  // namespace shadowlab
