#include "shadowlab/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "oracle.hpp"
#include "shadowlab/nets.hpp"

using namespace shadowlab;

namespace {

// Central-difference check of an image-space gradient at a few coordinates.
// The fixture builders keep |sr - sf| and friends away from zero, so the
// absolute-value terms are smooth in the probed neighborhoods.
void expect_matches_fd(const std::function<double(const Image&)>& f,
                       const Image& grad, Image at, double tol) {
    const double h = 1e-5;
    for (std::size_t i = 0; i < at.data.size(); i += 7) {
        const double saved = at.data[i];
        at.data[i] = saved + h;
        const double up = f(at);
        at.data[i] = saved - h;
        const double down = f(at);
        at.data[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        EXPECT_NEAR(grad.data[i], fd, tol) << "element " << i;
    }
}

}  // namespace

TEST(Lsgan, FixedPointsAndClosedForm) {
    Tensor real(1, 1, 2, 2);
    for (double& v : real.data) v = 1.0;
    Tensor fake(1, 1, 2, 2);

    const LsganTerms ideal = lsgan_terms(real, fake);
    EXPECT_EQ(ideal.d_loss, 0.0);  // discriminator is exactly right
    EXPECT_EQ(ideal.g_loss, 1.0);  // generator is maximally caught

    real.data = {0.5, 1.5, 1.0, 0.0};
    fake.data = {0.25, -0.25, 0.0, 1.0};
    const LsganTerms t = lsgan_terms(real, fake);
    EXPECT_NEAR(t.d_loss, (0.25 + 0.25 + 0.0 + 1.0) / 4.0 +
                              (0.0625 + 0.0625 + 0.0 + 1.0) / 4.0,
                1e-15);
    EXPECT_NEAR(t.g_loss, (0.5625 + 1.5625 + 1.0 + 0.0) / 4.0, 1e-15);

    EXPECT_THROW(lsgan_terms(Tensor(), fake), std::invalid_argument);
    fake.data[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(lsgan_terms(real, fake), std::invalid_argument);
}

TEST(SynthesisLosses, FixedPointsAndGating) {
    const Image a = oracle::random_image(8, 6, 1);
    const Image b = oracle::random_image(8, 6, 2);
    EXPECT_EQ(cycle_loss(a, a, b, b), 0.0);
    EXPECT_EQ(identity_loss(b, b), 0.0);

    // Constant per-image offsets make both MAE terms exact.
    Image a_off = a, b_off = b;
    for (double& v : a_off.data) v += 0.125;
    for (double& v : b_off.data) v -= 0.25;
    EXPECT_NEAR(cycle_loss(a_off, a, b_off, b), 0.125 + 0.25, 1e-12);
    EXPECT_NEAR(identity_loss(a_off, a), 0.125, 1e-15);

    Mask mask(8, 6);
    EXPECT_EQ(background_loss(a, a, mask), 0.0);

    // A deviation under the pseudo mask is exactly what the loss ignores.
    Image ds = a;
    mask.at(3, 3) = 1.0;
    for (int c = 0; c < 3; ++c) ds.at(3, 3, c) += 0.3;
    EXPECT_EQ(background_loss(ds, a, mask), 0.0);

    // The same deviation outside the mask is charged at 1/(3HW) per channel.
    mask.at(3, 3) = 0.0;
    EXPECT_NEAR(background_loss(ds, a, mask), 3.0 * 0.3 / (3.0 * 8 * 6), 1e-12);

    EXPECT_THROW(background_loss(ds, a, Mask(6, 8)), std::invalid_argument);
}

TEST(PdssTotal, PaperWeighting) {
    EXPECT_EQ(pdss_total(1.0, 1.0, 1.0, 1.0), 26.0);
    EXPECT_EQ(pdss_total(0.0, 0.0, 0.0, 0.0), 0.0);
    EXPECT_NEAR(pdss_total(0.5, 0.1, 0.2, 0.3), 0.5 + 10 * 0.1 + 10 * 0.2 + 5 * 0.3, 1e-15);

    PdssLossConfig cfg;
    cfg.idt_weight = 0.0;
    EXPECT_EQ(pdss_total(1.0, 1.0, 1.0, 1.0, cfg), 21.0);
}

TEST(RecLoss, IdentityExtractorClosedForm) {
    const IdentityExtractor fx;
    const Image sf = oracle::random_image(10, 7, 5, 0.2, 0.7);
    EXPECT_EQ(rec_loss(sf, sf, fx), 0.0);

    Image sr = sf;
    for (double& v : sr.data) v += 0.1;
    // L1 weight 80 on the pixels plus 7 on the single identity feature.
    EXPECT_NEAR(rec_loss(sr, sf, fx), 87.0 * 0.1, 1e-9);

    // The identity path is linear in the offset.
    const double at_half = rec_loss(sf, sf, fx, {}) +
                           (rec_loss(sr, sf, fx) - rec_loss(sf, sf, fx)) * 0.5;
    Image half = sf;
    for (double& v : half.data) v += 0.05;
    EXPECT_NEAR(rec_loss(half, sf, fx), at_half, 1e-9);
}

TEST(RecLoss, GradientMatchesFiniteDifferences) {
    const RandomConvExtractor fx(99);
    const Image sf = oracle::random_image(8, 6, 6, 0.3, 0.6);
    Image sr = sf;
    // Keep every |sr - sf| well away from the fold at zero.
    for (std::size_t i = 0; i < sr.data.size(); ++i)
        sr.data[i] += (i % 2 == 0 ? 0.05 : -0.05);

    const Image grad = rec_loss_grad(sr, sf, fx);
    expect_matches_fd([&](const Image& img) { return rec_loss(img, sf, fx); }, grad, sr,
                      1e-4);
}

TEST(RandomConvExtractor, SeededAndConsistent) {
    const Image img = oracle::random_image(9, 9, 7);
    const RandomConvExtractor fa(1), fb(1), fc(2);

    const auto feats_a = fa.extract(img);
    const auto feats_b = fb.extract(img);
    const auto feats_c = fc.extract(img);
    ASSERT_EQ(feats_a.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_TRUE(feats_a[k].same_shape(Tensor(1, 8, 9, 9)));
        EXPECT_EQ(oracle::max_abs_diff(feats_a[k], feats_b[k]), 0.0);
    }
    EXPECT_GT(oracle::max_abs_diff(feats_a[2], feats_c[2]), 0.0);

    const IdentityExtractor id;
    const auto ident = id.extract(img);
    ASSERT_EQ(ident.size(), 1u);
    EXPECT_EQ(oracle::max_abs_diff(ident[0], image_to_tensor(img)), 0.0);
    EXPECT_THROW(id.backprop(img, {}), std::invalid_argument);
}

TEST(ColorLoss, RatioVectorDistance) {
    const Image img = oracle::random_image(6, 6, 8, 0.2, 0.8);
    EXPECT_EQ(color_loss(img, img), 0.0);

    // Single-pixel closed form, eps folded in exactly as the code does it.
    Image pa(1, 1), pb(1, 1);
    pa.at(0, 0, 0) = 0.6;
    pa.at(0, 0, 1) = 0.3;
    pa.at(0, 0, 2) = 0.1;
    pb.at(0, 0, 0) = 0.2;
    pb.at(0, 0, 1) = 0.5;
    pb.at(0, 0, 2) = 0.3;
    const double eps = 1e-6;
    double want = 0.0;
    const double sa = 1.0 + eps, sb = 1.0 + eps;
    for (int c = 0; c < 3; ++c)
        want += std::abs(pa.at(0, 0, c) / sa - pb.at(0, 0, c) / sb);
    EXPECT_NEAR(color_loss(pa, pb, eps), want, 1e-15);

    EXPECT_DOUBLE_EQ(color_loss(pa, pb), color_loss(pb, pa));

    // Intensity alone barely moves it: ratios are near scale-invariant.
    Image dimmed = img;
    for (double& v : dimmed.data) v *= 0.5;
    EXPECT_LT(color_loss(img, dimmed), 1e-4);

    EXPECT_THROW(color_loss(pa, pb, 0.0), std::invalid_argument);
    EXPECT_THROW(color_loss(pa, Image(2, 1)), std::invalid_argument);
}

TEST(ColorLoss, GradientMatchesFiniteDifferences) {
    const Image sf = oracle::random_image(7, 5, 9, 0.25, 0.75);
    Image sr = sf;
    for (std::size_t i = 0; i < sr.data.size(); ++i)
        sr.data[i] = clip_unit(sr.data[i] + (i % 3 == 0 ? 0.08 : -0.06));

    const Image grad = color_loss_grad(sr, sf);
    expect_matches_fd([&](const Image& img) { return color_loss(img, sf); }, grad, sr, 1e-5);
}

TEST(PhyLoss, ForwardDifferenceClosedForm) {
    // Two pixels, flat penumbra-free case: only the illumination-smoothness
    // term is active, and it reduces to half the |L1 - L0| gap per channel.
    Image s(2, 1), sr(2, 1);
    for (int c = 0; c < 3; ++c) {
        s.at(0, 0, c) = 0.2;
        s.at(1, 0, c) = 0.2;
        sr.at(0, 0, c) = 0.4;
        sr.at(1, 0, c) = 0.2;
    }
    Mask pm(2, 1);  // all zero: everything counts as non-penumbra

    const double eps = 1e-6;
    const double l0 = 0.2 / (0.4 + eps), l1 = 0.2 / (0.2 + eps);
    EXPECT_NEAR(phy_loss(s, sr, pm), 3.0 * std::abs(l1 - l0) / 6.0, 1e-12);

    // Inside the penumbra the roles flip: the restored image is what must be
    // smooth, so the same fixture is charged for its own gradient instead.
    Mask inside(2, 1, 1.0);
    EXPECT_NEAR(phy_loss(s, sr, inside), 3.0 * std::abs(0.2 - 0.4) / 6.0, 1e-12);

    // Globally flat inputs cost nothing on either side.
    const Image flat(5, 4, 0.3);
    EXPECT_EQ(phy_loss(flat, flat, Mask(5, 4)), 0.0);

    EXPECT_THROW(phy_loss(s, sr, Mask(1, 2)), std::invalid_argument);
    EXPECT_THROW(phy_loss(s, sr, pm, 0.0), std::invalid_argument);
}

TEST(PhyLoss, GradientMatchesFiniteDifferences) {
    // Modular ramps give every forward difference a healthy gap, so the
    // absolute values stay locally linear under the probe step.
    const int w = 8, h = 6;
    Image s(w, h), sr(w, h);
    Mask pm(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            pm.at(x, y) = (x + y) % 2;
            for (int c = 0; c < 3; ++c) {
                sr.at(x, y, c) = 0.25 + 0.35 * (((x * 7 + y * 3 + c * 5) % 11) / 11.0);
                s.at(x, y, c) = 0.2 + 0.3 * (((x * 5 + y * 2 + c * 7) % 9) / 9.0);
            }
        }

    const Image grad = phy_loss_grad(s, sr, pm);
    expect_matches_fd([&](const Image& img) { return phy_loss(s, img, pm); }, grad, sr,
                      1e-4);
}

TEST(PcdsTotal, PaperWeighting) {
    EXPECT_EQ(pcds_total(1.0, 1.0, 1.0, 1.0), 212.0);
    EXPECT_NEAR(pcds_total(0.3, 2.0, 0.01, 0.05), 0.3 + 2.0 + 200 * 0.01 + 10 * 0.05, 1e-15);

    PcdsLossConfig cfg;
    cfg.color_weight = 1.0;
    cfg.phy_weight = 1.0;
    EXPECT_EQ(pcds_total(1.0, 1.0, 1.0, 1.0, cfg), 4.0);
}
