#include "shadowlab/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "oracle.hpp"
#include "shadowlab/decay.hpp"

using namespace shadowlab;

namespace {

Image uniform_gray(int w, int h, double v) {
    Image img(w, h);
    for (double& d : img.data) d = v;
    return img;
}

}  // namespace

TEST(Psnr, ClosedFormAndInfinity) {
    const Image gt(16, 16, 0.0);
    Image pred(16, 16, 0.1);  // MSE 0.01 -> 10 * log10(100) = 20 dB
    EXPECT_NEAR(psnr(pred, gt), 20.0, 1e-9);

    EXPECT_TRUE(std::isinf(psnr(gt, gt)));
    EXPECT_GT(psnr(gt, gt), 0.0);
}

TEST(Psnr, MaskSelectsPixels) {
    const Image gt = oracle::random_image(20, 20, 7, 0.2, 0.8);
    Image pred = gt;
    Mask mask(20, 20);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            mask.at(x, y) = 1.0;
            for (int c = 0; c < 3; ++c) pred.at(x, y, c) = gt.at(x, y, c) + 0.1;
        }

    EXPECT_NEAR(psnr(pred, gt, &mask), 20.0, 1e-6);
    EXPECT_GT(psnr(pred, gt), psnr(pred, gt, &mask));  // clean pixels dilute MSE

    Mask empty(20, 20);
    EXPECT_THROW(psnr(pred, gt, &empty), std::invalid_argument);
    EXPECT_THROW(psnr(pred, Image(19, 20)), std::invalid_argument);
}

TEST(Rmse, UniformTenthOffsetReads25Point5) {
    const Image gt(12, 12, 0.0);
    const Image pred(12, 12, 0.1);
    EXPECT_NEAR(rmse(pred, gt), 25.5, 1e-12);
    EXPECT_EQ(rmse(gt, gt), 0.0);
}

TEST(Ssim, SelfComparisonIsOne) {
    const Image img = oracle::random_image(24, 20, 9);
    EXPECT_NEAR(ssim(img, img), 1.0, 1e-12);
}

TEST(Ssim, ConstantPairClosedForm) {
    const double a = 0.3, b = 0.5;
    const Image pa = uniform_gray(16, 16, a);
    const Image pb = uniform_gray(16, 16, b);

    // Zero variance everywhere: the structure factor is exactly C2/C2 and
    // only the luminance term remains.
    const double ya = luminance(pa).at(0, 0);
    const double yb = luminance(pb).at(0, 0);
    const double c1 = 1e-4;
    const double want = (2.0 * ya * yb + c1) / (ya * ya + yb * yb + c1);
    EXPECT_NEAR(ssim(pa, pb), want, 1e-9);
}

TEST(Ssim, MatchesBruteForceWindows) {
    const Image pred = oracle::random_image(21, 17, 31);
    Image gt = pred;
    for (std::size_t i = 0; i < gt.data.size(); i += 2)
        gt.data[i] = std::min(1.0, gt.data[i] + 0.07);

    EXPECT_NEAR(ssim(pred, gt), oracle::ssim_ref(pred, gt, nullptr), 1e-9);

    // Map first, then select: masked SSIM averages the same per-pixel map
    // values, so windows still see pixels outside the mask.
    const Mask mask = oracle::random_hard_mask(21, 17, 32);
    EXPECT_NEAR(ssim(pred, gt, &mask), oracle::ssim_ref(pred, gt, &mask), 1e-9);
}

TEST(Ssim, RejectsImagesSmallerThanTheWindow) {
    const Image small = oracle::random_image(10, 12, 2);
    EXPECT_THROW(ssim(small, small), std::invalid_argument);
}

TEST(Entropy, QuantizedLuminanceHistogramCases) {
    EXPECT_EQ(entropy(uniform_gray(9, 9, 0.42)), 0.0);

    // Two equally filled bins: one bit.
    Image two(16, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) two.at(x, y, c) = x % 2 == 0 ? 0.0 : 1.0;
    EXPECT_EQ(entropy(two), 1.0);

    // All 256 levels exactly once: the full eight bits.
    Image full(256, 1);
    for (int x = 0; x < 256; ++x)
        for (int c = 0; c < 3; ++c) full.at(x, 0, c) = x / 255.0;
    EXPECT_EQ(entropy(full), 8.0);
}

TEST(Slr, EqualsDecayScaleOnUniformFixtures) {
    const Image lit = uniform_gray(64, 64, 0.6);
    const Mask mask = oracle::disk_mask(64, 64, 32, 32, 14.0);

    for (double w : {0.25, 0.5, 0.85}) {
        DecayParams params;
        params.w = {w, w, w};
        params.b = {0.0, 0.0, 0.0};
        const Image shadowed = apply_de_exposure(lit, mask, params);
        EXPECT_NEAR(slr(shadowed, mask, MorphConfig{}), w, 1e-6) << "w " << w;
    }
}

TEST(Slr, BlackRingIsUndefined) {
    Image img(64, 64, 0.0);
    const Mask mask = oracle::disk_mask(64, 64, 32, 32, 14.0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (mask.at(x, y) == 1.0)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.3;
    EXPECT_TRUE(std::isnan(slr(img, mask, MorphConfig{})));
}

TEST(DeltaA, ZeroOnIdenticalAndGrayInputs) {
    const Image img = oracle::random_image(16, 16, 41);
    Mask all(16, 16, 1.0);
    EXPECT_EQ(delta_a(img, img, all), 0.0);

    // Darkening along the neutral axis moves L but not the opponent axes.
    const Image g1 = uniform_gray(16, 16, 0.8);
    const Image g2 = uniform_gray(16, 16, 0.4);
    EXPECT_NEAR(delta_a(g1, g2, all), 0.0, 1e-6);
}

TEST(DeltaA, DetectsRedShiftInsideTheMaskOnly) {
    const Image before = uniform_gray(16, 16, 0.5);
    Image after = before;
    Mask mask(16, 16);
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) mask.at(x, y) = 1.0;

    // Push red up inside the mask; trash a corner outside it.
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) after.at(x, y, 0) = 0.8;
    after.at(0, 0, 1) = 1.0;

    const double shift = delta_a(before, after, mask);
    EXPECT_GT(shift, 1.0);

    Mask empty(16, 16);
    EXPECT_THROW(delta_a(before, after, empty), std::invalid_argument);
}

TEST(Aggregate, MeansRangesAndSentinels) {
    MetricReport report;
    for (int i = 0; i < 4; ++i) {
        MetricItem item;
        item.id = "t" + std::to_string(i);
        item.slr = 0.2 + 0.1 * i;  // 0.2 0.3 0.4 0.5
        item.psnr_s = 20.0 + i;
        report.items.push_back(item);
    }
    MetricItem odd;
    odd.id = "odd";
    odd.slr = std::nan("");  // undefined: excluded from every aggregate
    odd.psnr_s = std::numeric_limits<double>::infinity();
    report.items.push_back(odd);

    const ReportAggregates agg = aggregate(report);
    ASSERT_TRUE(agg.mean_slr.has_value());
    EXPECT_NEAR(*agg.mean_slr, 0.35, 1e-12);
    EXPECT_NEAR(*agg.mean_psnr_s, 21.5, 1e-12);
    ASSERT_TRUE(agg.slr_range.has_value());
    EXPECT_NEAR((*agg.slr_range)[0], 0.2, 1e-12);
    EXPECT_NEAR((*agg.slr_range)[1], 0.5, 1e-12);
    EXPECT_FALSE(agg.slr_percentile_range.has_value());
    EXPECT_FALSE(agg.mean_entropy.has_value());

    // With q = 25 over the four finite values, ranks land at 0.75 and 2.25.
    report.slr_percentile_q = 25.0;
    const ReportAggregates pagg = aggregate(report);
    ASSERT_TRUE(pagg.slr_percentile_range.has_value());
    EXPECT_NEAR((*pagg.slr_percentile_range)[0], 0.2 + 0.75 * 0.1, 1e-12);
    EXPECT_NEAR((*pagg.slr_percentile_range)[1], 0.4 + 0.25 * 0.1, 1e-12);
}

TEST(SaveReport, EmitsParsableDocumentWithSentinels) {
    MetricReport report;
    report.config.core_erode_radius = 4;
    MetricItem a;
    a.id = "one";
    a.slr = 0.4;
    a.psnr_s = std::numeric_limits<double>::infinity();
    a.delta_a = std::nan("");
    report.items.push_back(a);
    report.failures.push_back("two");

    const std::string path = oracle::make_temp_dir() + "/report.json";
    save_report(report, path);

    std::ifstream in(path);
    const nlohmann::json doc = nlohmann::json::parse(in);
    EXPECT_EQ(doc.at("version"), "1");
    EXPECT_EQ(doc.at("config").at("core_erode_radius"), 4);
    ASSERT_EQ(doc.at("items").size(), 1u);
    EXPECT_EQ(doc.at("items")[0].at("id"), "one");
    EXPECT_DOUBLE_EQ(doc.at("items")[0].at("slr").get<double>(), 0.4);
    EXPECT_EQ(doc.at("items")[0].at("psnr_s"), "infinite");
    EXPECT_EQ(doc.at("items")[0].at("delta_a"), "undefined");
    EXPECT_FALSE(doc.at("items")[0].contains("ssim_s"));  // unset fields stay absent
    EXPECT_EQ(doc.at("failures")[0], "two");
    EXPECT_EQ(doc.at("failure_count"), 1);
    EXPECT_DOUBLE_EQ(doc.at("aggregates").at("mean_slr").get<double>(), 0.4);
    EXPECT_FALSE(doc.at("aggregates").contains("mean_psnr_s"));
}

TEST(DatasetStats, RejectsOutOfRangePercentile) {
    Manifest manifest;
    EXPECT_THROW(dataset_stats(manifest, ".", MorphConfig{}, 0.0), std::invalid_argument);
    EXPECT_THROW(dataset_stats(manifest, ".", MorphConfig{}, 50.0), std::invalid_argument);
    EXPECT_NO_THROW(dataset_stats(manifest, ".", MorphConfig{}, 25.0));
}

TEST(DatasetStats, RecordsUnreadableItemsAsFailures) {
    Manifest manifest;
    TripletRecord rec;
    rec.id = "ghost";
    rec.free_path = "free/ghost.png";
    rec.shadow_path = "shadow/ghost.png";
    rec.mask_path = "mask/ghost.png";
    manifest.records.push_back(rec);

    const MetricReport report = dataset_stats(manifest, oracle::make_temp_dir(), MorphConfig{});
    EXPECT_TRUE(report.items.empty());
    ASSERT_EQ(report.failures.size(), 1u);
    EXPECT_EQ(report.failures[0], "ghost");
}
