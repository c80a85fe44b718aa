#include "shadowlab/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "shadowlab/nets.hpp"

namespace shadowlab {

namespace {

double mae(const Image& a, const Image& b, const char* who) {
    if (!same_size(a, b)) throw std::invalid_argument(std::string(who) + ": size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.data.size());
}

double mae(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "rec_loss features");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.size());
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Adds the gradient of mean_{c,y,x}(gate(x,y) * (|dx T| + |dy T|)) w.r.t. T
// into `out`, where dx/dy are forward differences vanishing at the far edge.
// `gate_one_minus` flips the mask gate.
void add_tv_grad(const Image& t, const Mask& gate, bool gate_one_minus, double weight,
                 Image& out) {
    const double scale = weight / static_cast<double>(t.data.size());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < t.height; ++y)
            for (int x = 0; x < t.width; ++x) {
                const double gv = gate.at(x, y);
                const double g = (gate_one_minus ? 1.0 - gv : gv) * scale;
                if (x + 1 < t.width) {
                    const double s = g * sgn(t.at(x + 1, y, c) - t.at(x, y, c));
                    out.at(x + 1, y, c) += s;
                    out.at(x, y, c) -= s;
                }
                if (y + 1 < t.height) {
                    const double s = g * sgn(t.at(x, y + 1, c) - t.at(x, y, c));
                    out.at(x, y + 1, c) += s;
                    out.at(x, y, c) -= s;
                }
            }
}

double tv_term(const Image& t, const Mask& gate, bool gate_one_minus) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < t.height; ++y)
            for (int x = 0; x < t.width; ++x) {
                const double gv = gate.at(x, y);
                const double g = gate_one_minus ? 1.0 - gv : gv;
                double mag = 0.0;
                if (x + 1 < t.width) mag += std::abs(t.at(x + 1, y, c) - t.at(x, y, c));
                if (y + 1 < t.height) mag += std::abs(t.at(x, y + 1, c) - t.at(x, y, c));
                acc += g * mag;
            }
    return acc / static_cast<double>(t.data.size());
}

}  // namespace

// --- extractors -------------------------------------------------------------

std::vector<Tensor> IdentityExtractor::extract(const Image& image) const {
    return {image_to_tensor(image)};
}

Tensor IdentityExtractor::backprop(const Image& image,
                                   const std::vector<Tensor>& feature_grads) const {
    if (feature_grads.size() != 1)
        throw std::invalid_argument("IdentityExtractor: expected one feature gradient");
    check_same_shape(feature_grads[0], image_to_tensor(image), "IdentityExtractor");
    return feature_grads[0];
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed) {
    Rng rng(seed);
    layers_.push_back(make_conv(8, 3, 3, 3, rng, 1, 1, 1, 1, 1));
    layers_.push_back(make_conv(8, 8, 3, 3, rng, 1, 1, 1, 1, 1));
    layers_.push_back(make_conv(8, 8, 3, 3, rng, 1, 1, 1, 1, 1));
}

std::vector<Tensor> RandomConvExtractor::extract(const Image& image) const {
    std::vector<Tensor> feats;
    Tensor cur = image_to_tensor(image);
    for (const Conv2d& layer : layers_) {
        cur = relu(conv2d(cur, layer));
        feats.push_back(cur);
    }
    return feats;
}

Tensor RandomConvExtractor::backprop(const Image& image,
                                     const std::vector<Tensor>& feature_grads) const {
    if (feature_grads.size() != layers_.size())
        throw std::invalid_argument("RandomConvExtractor: feature gradient count mismatch");

    std::vector<Tensor> inputs;  // input to each layer
    std::vector<Tensor> pre;     // conv output before relu
    Tensor cur = image_to_tensor(image);
    for (const Conv2d& layer : layers_) {
        inputs.push_back(cur);
        pre.push_back(conv2d(cur, layer));
        cur = relu(pre.back());
    }

    Tensor grad;
    for (int k = static_cast<int>(layers_.size()) - 1; k >= 0; --k) {
        grad = grad.size() == 0 ? feature_grads[k] : add(grad, feature_grads[k]);
        grad = relu_backward(pre[k], grad);
        grad = conv2d_backward(inputs[k], layers_[k], grad).x;
    }
    return grad;
}

// --- adversarial and synthesis-side losses -----------------------------------

LsganTerms lsgan_terms(const Tensor& real_scores, const Tensor& fake_scores) {
    if (real_scores.size() == 0 || fake_scores.size() == 0)
        throw std::invalid_argument("lsgan_terms: empty score map");
    for (double v : real_scores.data)
        if (!std::isfinite(v)) throw std::invalid_argument("lsgan_terms: non-finite score");
    for (double v : fake_scores.data)
        if (!std::isfinite(v)) throw std::invalid_argument("lsgan_terms: non-finite score");

    LsganTerms t;
    double real_acc = 0.0, fake_acc = 0.0, gen_acc = 0.0;
    for (double v : real_scores.data) real_acc += (v - 1.0) * (v - 1.0);
    for (double v : fake_scores.data) {
        fake_acc += v * v;
        gen_acc += (v - 1.0) * (v - 1.0);
    }
    t.d_loss = real_acc / static_cast<double>(real_scores.size()) +
               fake_acc / static_cast<double>(fake_scores.size());
    t.g_loss = gen_acc / static_cast<double>(fake_scores.size());
    return t;
}

double cycle_loss(const Image& recon_a, const Image& orig_a, const Image& recon_b,
                  const Image& orig_b) {
    return mae(recon_a, orig_a, "cycle_loss") + mae(recon_b, orig_b, "cycle_loss");
}

double background_loss(const Image& ds, const Image& gs, const Mask& pseudo_mask) {
    if (!same_size(ds, gs) || !same_size(ds, pseudo_mask))
        throw std::invalid_argument("background_loss: size mismatch");
    double acc = 0.0;
    for (int y = 0; y < ds.height; ++y)
        for (int x = 0; x < ds.width; ++x) {
            const double keep = 1.0 - pseudo_mask.at(x, y);
            for (int c = 0; c < 3; ++c) acc += std::abs(ds.at(x, y, c) - gs.at(x, y, c)) * keep;
        }
    return acc / static_cast<double>(ds.data.size());
}

double identity_loss(const Image& g_of_real, const Image& real) {
    return mae(g_of_real, real, "identity_loss");
}

double pdss_total(double adv, double cyc, double back, double idt, const PdssLossConfig& cfg) {
    return adv + cfg.cyc_weight * cyc + cfg.back_weight * back + cfg.idt_weight * idt;
}

// --- removal-side losses ------------------------------------------------------

double rec_loss(const Image& sr, const Image& sf, const FeatureExtractor& fx,
                const PcdsLossConfig& cfg) {
    double total = cfg.l1_weight * mae(sr, sf, "rec_loss");
    const std::vector<Tensor> fr = fx.extract(sr);
    const std::vector<Tensor> ff = fx.extract(sf);
    if (fr.size() != ff.size())
        throw std::invalid_argument("rec_loss: extractor layer count mismatch");
    for (std::size_t k = 0; k < fr.size(); ++k) total += cfg.per_weight * mae(fr[k], ff[k]);
    return total;
}

Image rec_loss_grad(const Image& sr, const Image& sf, const FeatureExtractor& fx,
                    const PcdsLossConfig& cfg) {
    if (!same_size(sr, sf)) throw std::invalid_argument("rec_loss_grad: size mismatch");
    Image grad(sr.width, sr.height);
    const double l1_scale = cfg.l1_weight / static_cast<double>(sr.data.size());
    for (std::size_t i = 0; i < sr.data.size(); ++i)
        grad.data[i] = l1_scale * sgn(sr.data[i] - sf.data[i]);

    const std::vector<Tensor> fr = fx.extract(sr);
    const std::vector<Tensor> ff = fx.extract(sf);
    if (fr.size() != ff.size())
        throw std::invalid_argument("rec_loss_grad: extractor layer count mismatch");
    std::vector<Tensor> fgrads;
    for (std::size_t k = 0; k < fr.size(); ++k) {
        check_same_shape(fr[k], ff[k], "rec_loss_grad features");
        Tensor g = zeros_like(fr[k]);
        const double scale = cfg.per_weight / static_cast<double>(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            g.data[i] = scale * sgn(fr[k].data[i] - ff[k].data[i]);
        fgrads.push_back(std::move(g));
    }
    const Tensor d_image = fx.backprop(sr, fgrads);
    for (int y = 0; y < sr.height; ++y)
        for (int x = 0; x < sr.width; ++x)
            for (int c = 0; c < 3; ++c) grad.at(x, y, c) += d_image.at(0, c, y, x);
    return grad;
}

namespace {

void channel_ratios(const Image& img, int x, int y, double epsilon, double r[3]) {
    const double s =
        img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2) + epsilon;
    for (int c = 0; c < 3; ++c) r[c] = img.at(x, y, c) / s;
}

}  // namespace

double color_loss(const Image& sr, const Image& sf, double epsilon) {
    if (!same_size(sr, sf)) throw std::invalid_argument("color_loss: size mismatch");
    if (epsilon <= 0.0) throw std::invalid_argument("color_loss: epsilon must be positive");
    double acc = 0.0;
    double a[3], b[3];
    for (int y = 0; y < sr.height; ++y)
        for (int x = 0; x < sr.width; ++x) {
            channel_ratios(sr, x, y, epsilon, a);
            channel_ratios(sf, x, y, epsilon, b);
            for (int c = 0; c < 3; ++c) acc += std::abs(a[c] - b[c]);
        }
    return acc / (static_cast<double>(sr.width) * sr.height);
}

Image color_loss_grad(const Image& sr, const Image& sf, double epsilon) {
    if (!same_size(sr, sf)) throw std::invalid_argument("color_loss_grad: size mismatch");
    if (epsilon <= 0.0) throw std::invalid_argument("color_loss_grad: epsilon must be positive");
    Image grad(sr.width, sr.height);
    const double inv_n = 1.0 / (static_cast<double>(sr.width) * sr.height);
    double a[3], b[3];
    for (int y = 0; y < sr.height; ++y)
        for (int x = 0; x < sr.width; ++x) {
            channel_ratios(sr, x, y, epsilon, a);
            channel_ratios(sf, x, y, epsilon, b);
            const double s =
                sr.at(x, y, 0) + sr.at(x, y, 1) + sr.at(x, y, 2) + epsilon;
            // d r_c / d v_j = (delta_cj - r_c) / s
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int c = 0; c < 3; ++c)
                    acc += sgn(a[c] - b[c]) * (((c == j) ? 1.0 : 0.0) - a[c]) / s;
                grad.at(x, y, j) = acc * inv_n;
            }
        }
    return grad;
}

namespace {

Image illumination_estimate(const Image& s, const Image& sr, double epsilon) {
    Image l(s.width, s.height);
    for (std::size_t i = 0; i < s.data.size(); ++i)
        l.data[i] = s.data[i] / (sr.data[i] + epsilon);
    return l;
}

}  // namespace

double phy_loss(const Image& s, const Image& sr, const Mask& penumbra_mask, double epsilon) {
    if (!same_size(s, sr) || !same_size(s, penumbra_mask))
        throw std::invalid_argument("phy_loss: size mismatch");
    if (epsilon <= 0.0) throw std::invalid_argument("phy_loss: epsilon must be positive");
    const Image l_est = illumination_estimate(s, sr, epsilon);
    return tv_term(l_est, penumbra_mask, /*gate_one_minus=*/true) +
           tv_term(sr, penumbra_mask, /*gate_one_minus=*/false);
}

Image phy_loss_grad(const Image& s, const Image& sr, const Mask& penumbra_mask,
                    double epsilon) {
    if (!same_size(s, sr) || !same_size(s, penumbra_mask))
        throw std::invalid_argument("phy_loss_grad: size mismatch");
    if (epsilon <= 0.0) throw std::invalid_argument("phy_loss_grad: epsilon must be positive");

    const Image l_est = illumination_estimate(s, sr, epsilon);
    Image d_lest(s.width, s.height);
    add_tv_grad(l_est, penumbra_mask, /*gate_one_minus=*/true, 1.0, d_lest);

    Image grad(s.width, s.height);
    // d l_est / d sr = -s / (sr + epsilon)^2, elementwise.
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double denom = sr.data[i] + epsilon;
        grad.data[i] = d_lest.data[i] * (-s.data[i] / (denom * denom));
    }
    add_tv_grad(sr, penumbra_mask, /*gate_one_minus=*/false, 1.0, grad);
    return grad;
}

double pcds_total(double adv, double rec, double color, double phy, const PcdsLossConfig& cfg) {
    return adv + rec + cfg.color_weight * color + cfg.phy_weight * phy;
}

}  // namespace shadowlab
