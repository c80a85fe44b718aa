#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "shadowlab/image.hpp"
#include "shadowlab/nn.hpp"
#include "shadowlab/tensor.hpp"

namespace shadowlab {

// Trade-off weights for the synthesis-side objective:
// total = adv + cyc_weight * cyc + back_weight * back + idt_weight * idt.
struct PdssLossConfig {
    double cyc_weight = 10.0;
    double back_weight = 10.0;
    double idt_weight = 5.0;
};

// Trade-off weights for the removal-side objective:
// total = adv + rec + color_weight * color + phy_weight * phy, where
// rec itself combines an L1 term and a feature term.
struct PcdsLossConfig {
    double color_weight = 200.0;
    double phy_weight = 10.0;
    double l1_weight = 80.0;
    double per_weight = 7.0;
    double epsilon = 1e-6;
};

// Maps an image to a fixed-length sequence of feature tensors. backprop takes
// d(loss)/d(feature_k) for every k and returns d(loss)/d(image) as (1,3,H,W);
// both directions must be deterministic.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Tensor> extract(const Image& image) const = 0;
    virtual Tensor backprop(const Image& image,
                            const std::vector<Tensor>& feature_grads) const = 0;
};

// Single feature: the image itself as a (1,3,H,W) tensor.
class IdentityExtractor final : public FeatureExtractor {
public:
    std::vector<Tensor> extract(const Image& image) const override;
    Tensor backprop(const Image& image,
                    const std::vector<Tensor>& feature_grads) const override;
};

// Three seeded 3x3 conv + relu layers (3 -> 8 -> 8 -> 8, stride 1, pad 1);
// each layer's activation is one feature. A stand-in for a pretrained
// perceptual network with the same plumbing.
class RandomConvExtractor final : public FeatureExtractor {
public:
    explicit RandomConvExtractor(std::uint64_t seed);
    std::vector<Tensor> extract(const Image& image) const override;
    Tensor backprop(const Image& image,
                    const std::vector<Tensor>& feature_grads) const override;

private:
    std::vector<Conv2d> layers_;
};

struct LsganTerms {
    double d_loss = 0.0;  // mean((real - 1)^2) + mean(fake^2)
    double g_loss = 0.0;  // mean((fake - 1)^2)
};

LsganTerms lsgan_terms(const Tensor& real_scores, const Tensor& fake_scores);

// Mean-absolute error of pair A plus mean-absolute error of pair B.
double cycle_loss(const Image& recon_a, const Image& orig_a, const Image& recon_b,
                  const Image& orig_b);

// Mean over all H*W*3 elements of |(ds - gs)| gated by (1 - mask); keeps the
// synthesized shadow from touching pixels outside the pseudo shadow matte.
double background_loss(const Image& ds, const Image& gs, const Mask& pseudo_mask);

double identity_loss(const Image& g_of_real, const Image& real);

double pdss_total(double adv, double cyc, double back, double idt,
                  const PdssLossConfig& cfg = {});

// l1_weight * MAE(sr, sf) + per_weight * sum_k MAE(phi_k(sr), phi_k(sf)).
double rec_loss(const Image& sr, const Image& sf, const FeatureExtractor& fx,
                const PcdsLossConfig& cfg = {});
Image rec_loss_grad(const Image& sr, const Image& sf, const FeatureExtractor& fx,
                    const PcdsLossConfig& cfg = {});

// Mean over pixels of the L1 distance between channel-ratio vectors
// r_c = v_c / (v_r + v_g + v_b + epsilon).
double color_loss(const Image& sr, const Image& sf, double epsilon = 1e-6);
Image color_loss_grad(const Image& sr, const Image& sf, double epsilon = 1e-6);

// Smoothness prior on the estimated illumination L = s / (sr + epsilon)
// outside the penumbra plus smoothness of the restored image inside it.
// Forward differences; the last row/column gradient is zero; each term is a
// mean over all H*W*3 elements.
double phy_loss(const Image& s, const Image& sr, const Mask& penumbra_mask,
                double epsilon = 1e-6);
Image phy_loss_grad(const Image& s, const Image& sr, const Mask& penumbra_mask,
                    double epsilon = 1e-6);

double pcds_total(double adv, double rec, double color, double phy,
                  const PcdsLossConfig& cfg = {});

}  // namespace shadowlab
