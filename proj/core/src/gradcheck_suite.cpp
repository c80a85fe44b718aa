#include "shadowlab/gradcheck_suite.hpp"

#include <cmath>
#include <utility>

#include "shadowlab/losses.hpp"
#include "shadowlab/nets.hpp"
#include "shadowlab/nn.hpp"
#include "shadowlab/rng.hpp"

namespace shadowlab {

namespace {

constexpr double kPrimitiveTol = 1e-6;
constexpr double kCompositeTol = 1e-4;
constexpr double kFullNetTol = 1e-3;
constexpr double kLossTol = 1e-4;

Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(n, c, h, w);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Fixed random weighting that turns a tensor-valued op into the scalar
// sum(g . op(x)) the finite-difference harness needs.
double weighted(const Tensor& g, const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += g.data[i] * t.data[i];
    return acc;
}

Tensor from_vector(const std::vector<double>& v) {
    Tensor t(1, 1, 1, static_cast<int>(v.size()));
    t.data = v;
    return t;
}

// Keeps samples at least `margin` away from each listed kink.
Tensor random_avoiding(int n, int c, int h, int w, Rng& rng,
                       const std::vector<double>& kinks, double margin, double lo,
                       double hi) {
    Tensor t(n, c, h, w);
    for (double& v : t.data) {
        for (;;) {
            const double cand = rng.uniform(lo, hi);
            bool clear = true;
            for (double k : kinks)
                if (std::abs(cand - k) < margin) clear = false;
            if (clear) {
                v = cand;
                break;
            }
        }
    }
    return t;
}

using ScalarFn = std::function<double(const Tensor&)>;
using GradFn = std::function<Tensor(const Tensor&)>;

struct Case {
    std::string name;
    ScalarFn f;
    GradFn grad;
    Tensor x;
    double tolerance;
};

void run_case(std::vector<BlockCheck>& out, const Case& c, std::uint64_t seed) {
    out.push_back({c.name, grad_check(c.f, c.grad, c.x, seed), c.tolerance});
}

// --- fixtures for the loss checks -------------------------------------------

// Restored/target pair whose per-element differences never change sign under
// the +-1e-5 probe steps.
std::pair<Image, Image> separated_pair(int w, int h, Rng& rng) {
    Image sf(w, h), sr(w, h);
    for (std::size_t i = 0; i < sf.data.size(); ++i) {
        sf.data[i] = rng.uniform(0.15, 0.85);
        const double mag = rng.uniform(0.02, 0.1);
        sr.data[i] = sf.data[i] + (rng.uniform() < 0.5 ? -mag : mag);
    }
    return {std::move(sr), std::move(sf)};
}

// Additionally pushes the channel-ratio differences away from zero, since
// the color loss takes |.| of those rather than of raw channels.
std::pair<Image, Image> ratio_separated_pair(int w, int h, Rng& rng) {
    auto [sr, sf] = separated_pair(w, h, rng);
    const double eps = 1e-6;
    for (int pass = 0; pass < 100; ++pass) {
        bool clean = true;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double ssr =
                    sr.at(x, y, 0) + sr.at(x, y, 1) + sr.at(x, y, 2) + eps;
                const double ssf =
                    sf.at(x, y, 0) + sf.at(x, y, 1) + sf.at(x, y, 2) + eps;
                for (int c = 0; c < 3; ++c)
                    if (std::abs(sr.at(x, y, c) / ssr - sf.at(x, y, c) / ssf) < 1e-3) {
                        sr.at(x, y, c) += 0.07;
                        clean = false;
                    }
            }
        if (clean) break;
    }
    return {std::move(sr), std::move(sf)};
}

struct PhyFixture {
    Image s, sr;
    Mask pm;
};

// Fixture for the illumination-smoothness loss: both total-variation fields
// need forward differences bounded away from zero so the probe steps cannot
// cross a |.| kink. The modular ramps guarantee that for sr; the estimated
// illumination gets a verify-and-bump pass.
PhyFixture phy_fixture(int w, int h, Rng& rng) {
    PhyFixture fx;
    fx.s = Image(w, h);
    fx.sr = Image(w, h);
    fx.pm = Mask(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            fx.pm.at(x, y) = ((x / 3 + y / 3) % 2 == 0) ? 1.0 : 0.0;
            for (int c = 0; c < 3; ++c) {
                fx.sr.at(x, y, c) = 0.25 + 0.35 * ((x * 7 + y * 3 + c * 5) % 11) / 11.0;
                fx.s.at(x, y, c) =
                    0.2 + 0.3 * ((x * 5 + y * 2 + c * 7) % 9) / 9.0 +
                    0.02 * rng.uniform();
            }
        }
    const double eps = 1e-6;
    for (int pass = 0; pass < 100; ++pass) {
        bool clean = true;
        const auto lest = [&](int x, int y, int c) {
            return fx.s.at(x, y, c) / (fx.sr.at(x, y, c) + eps);
        };
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (x + 1 < w && std::abs(lest(x + 1, y, c) - lest(x, y, c)) < 1e-3) {
                        fx.s.at(x + 1, y, c) += 0.015;
                        clean = false;
                    }
                    if (y + 1 < h && std::abs(lest(x, y + 1, c) - lest(x, y, c)) < 1e-3) {
                        fx.s.at(x, y + 1, c) += 0.017;
                        clean = false;
                    }
                }
        if (clean) break;
    }
    return fx;
}

}  // namespace

std::vector<BlockCheck> run_gradient_checks(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<BlockCheck> checks;
    std::uint64_t case_seed = splitmix64(seed);
    const auto next_seed = [&] { return case_seed = splitmix64(case_seed); };

    // --- layer primitives ---------------------------------------------------
    {
        Rng wr(rng.next_u64());
        Conv2d conv = make_conv(4, 3, 3, 3, wr, 1, 1, 1, 1, 1);
        for (double& b : conv.bias) b = wr.uniform(-0.3, 0.3);
        const Tensor x0 = random_tensor(2, 3, 7, 6, wr);
        const Tensor g = random_tensor(2, 4, 7, 6, wr);
        run_case(checks,
                 {"conv2d/input", [=](const Tensor& x) { return weighted(g, conv2d(x, conv)); },
                  [=](const Tensor& x) { return conv2d_backward(x, conv, g).x; }, x0,
                  kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"conv2d/weight",
                  [=](const Tensor& w) {
                      Conv2d c = conv;
                      c.weight = w;
                      return weighted(g, conv2d(x0, c));
                  },
                  [=](const Tensor& w) {
                      Conv2d c = conv;
                      c.weight = w;
                      return conv2d_backward(x0, c, g).weight;
                  },
                  conv.weight, kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"conv2d/bias",
                  [=](const Tensor& b) {
                      Conv2d c = conv;
                      c.bias = b.data;
                      return weighted(g, conv2d(x0, c));
                  },
                  [=](const Tensor& b) {
                      Conv2d c = conv;
                      c.bias = b.data;
                      return from_vector(conv2d_backward(x0, c, g).bias);
                  },
                  from_vector(conv.bias), kPrimitiveTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const Conv2d conv = make_conv(4, 4, 3, 3, wr, 2, 2, 2, 2, 2);
        const Tensor x0 = random_tensor(1, 4, 8, 8, wr);
        const Tensor g = random_tensor(1, 4, 4, 4, wr);
        run_case(checks,
                 {"conv2d grouped strided/input",
                  [=](const Tensor& x) { return weighted(g, conv2d(x, conv)); },
                  [=](const Tensor& x) { return conv2d_backward(x, conv, g).x; }, x0,
                  kPrimitiveTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const Conv2d strip = make_conv(3, 3, 5, 1, wr, 1, 2, 0, 1, 3);
        const Tensor x0 = random_tensor(2, 3, 9, 1, wr);
        const Tensor g = random_tensor(2, 3, 9, 1, wr);
        run_case(checks,
                 {"strip conv/input",
                  [=](const Tensor& x) { return weighted(g, strip_conv_dw(x, strip)); },
                  [=](const Tensor& x) { return conv2d_backward(x, strip, g).x; }, x0,
                  kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"strip conv/weight",
                  [=](const Tensor& w) {
                      Conv2d c = strip;
                      c.weight = w;
                      return weighted(g, strip_conv_dw(x0, c));
                  },
                  [=](const Tensor& w) {
                      Conv2d c = strip;
                      c.weight = w;
                      return conv2d_backward(x0, c, g).weight;
                  },
                  strip.weight, kPrimitiveTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const Tensor x0 = random_tensor(2, 3, 5, 4, wr);
        for (PoolMode mode : {PoolMode::avg_over_w, PoolMode::avg_over_h, PoolMode::global_avg}) {
            const char* name = mode == PoolMode::avg_over_w   ? "pool avg-over-w/input"
                               : mode == PoolMode::avg_over_h ? "pool avg-over-h/input"
                                                              : "pool global/input";
            const Tensor shape = pool(x0, mode);
            const Tensor g = random_tensor(shape.n, shape.c, shape.h, shape.w, wr);
            run_case(checks,
                     {name, [=](const Tensor& x) { return weighted(g, pool(x, mode)); },
                      [=](const Tensor& x) { return pool_backward(x, mode, g); }, x0,
                      kPrimitiveTol},
                     next_seed());
        }
    }
    {
        Rng wr(rng.next_u64());
        const Tensor x0 = random_tensor(1, 2, 3, 4, wr);
        const Tensor g = random_tensor(1, 2, 6, 8, wr);
        run_case(checks,
                 {"bilinear upsample/input",
                  [=](const Tensor& x) { return weighted(g, bilinear_upsample(x, 2)); },
                  [=](const Tensor& x) { return bilinear_upsample_backward(x, 2, g); }, x0,
                  kPrimitiveTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const Tensor g = random_tensor(2, 3, 4, 4, wr);
        run_case(checks,
                 {"sigmoid/input",
                  [=](const Tensor& x) { return weighted(g, sigmoid(x)); },
                  [=](const Tensor& x) { return sigmoid_backward(x, g); },
                  random_tensor(2, 3, 4, 4, wr, -4.0, 4.0), kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"h-swish/input",
                  [=](const Tensor& x) { return weighted(g, h_swish(x)); },
                  [=](const Tensor& x) { return h_swish_backward(x, g); },
                  random_avoiding(2, 3, 4, 4, wr, {-3.0, 3.0}, 0.05, -5.0, 5.0),
                  kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"relu/input",
                  [=](const Tensor& x) { return weighted(g, relu(x)); },
                  [=](const Tensor& x) { return relu_backward(x, g); },
                  random_avoiding(2, 3, 4, 4, wr, {0.0}, 0.05, -2.0, 2.0), kPrimitiveTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        BatchNorm bn = make_batchnorm(3);
        for (double& v : bn.gamma) v = wr.uniform(0.5, 1.5);
        for (double& v : bn.beta) v = wr.uniform(-0.5, 0.5);
        for (double& v : bn.running_mean) v = wr.uniform(-0.3, 0.3);
        for (double& v : bn.running_var) v = wr.uniform(0.2, 1.5);
        const Tensor x0 = random_tensor(2, 3, 4, 5, wr);
        const Tensor g = random_tensor(2, 3, 4, 5, wr);
        run_case(checks,
                 {"batchnorm/input",
                  [=](const Tensor& x) { return weighted(g, batchnorm(x, bn)); },
                  [=](const Tensor& x) { return batchnorm_backward(x, bn, g).x; }, x0,
                  kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"batchnorm/gamma",
                  [=](const Tensor& t) {
                      BatchNorm b = bn;
                      b.gamma = t.data;
                      return weighted(g, batchnorm(x0, b));
                  },
                  [=](const Tensor& t) {
                      BatchNorm b = bn;
                      b.gamma = t.data;
                      return from_vector(batchnorm_backward(x0, b, g).gamma);
                  },
                  from_vector(bn.gamma), kPrimitiveTol},
                 next_seed());
        run_case(checks,
                 {"batchnorm/beta",
                  [=](const Tensor& t) {
                      BatchNorm b = bn;
                      b.beta = t.data;
                      return weighted(g, batchnorm(x0, b));
                  },
                  [=](const Tensor& t) {
                      BatchNorm b = bn;
                      b.beta = t.data;
                      return from_vector(batchnorm_backward(x0, b, g).beta);
                  },
                  from_vector(bn.beta), kPrimitiveTol},
                 next_seed());
    }

    // --- composite blocks -----------------------------------------------------
    {
        Rng wr(rng.next_u64());
        const SdcaParams p = make_sdca(8, wr.next_u64());
        const Tensor x0 = random_tensor(2, 8, 6, 5, wr);
        const Tensor g = random_tensor(2, 8, 6, 5, wr);
        run_case(checks,
                 {"sdca/input",
                  [=](const Tensor& x) { return weighted(g, sdca_forward(x, p).fprime); },
                  [=](const Tensor& x) { return sdca_backward(x, p, g).x; }, x0,
                  kCompositeTol},
                 next_seed());
        run_case(checks,
                 {"sdca/local-reduce weight",
                  [=](const Tensor& w) {
                      SdcaParams q = p;
                      q.local_reduce.weight = w;
                      return weighted(g, sdca_forward(x0, q).fprime);
                  },
                  [=](const Tensor& w) {
                      SdcaParams q = p;
                      q.local_reduce.weight = w;
                      return sdca_backward(x0, q, g).local_reduce.weight;
                  },
                  p.local_reduce.weight, kCompositeTol},
                 next_seed());
        run_case(checks,
                 {"sdca/norm gamma",
                  [=](const Tensor& t) {
                      SdcaParams q = p;
                      q.norm.gamma = t.data;
                      return weighted(g, sdca_forward(x0, q).fprime);
                  },
                  [=](const Tensor& t) {
                      SdcaParams q = p;
                      q.norm.gamma = t.data;
                      return from_vector(sdca_backward(x0, q, g).norm.gamma);
                  },
                  from_vector(p.norm.gamma), kCompositeTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const AffParams p = make_aff(8, wr.next_u64());
        const Tensor fu = random_tensor(1, 8, 5, 6, wr);
        const Tensor fp = random_tensor(1, 8, 5, 6, wr);
        const Tensor g = random_tensor(1, 8, 5, 6, wr);
        run_case(checks,
                 {"aff/stream-u input",
                  [=](const Tensor& x) { return weighted(g, aff_fuse(x, fp, p).fused); },
                  [=](const Tensor& x) { return aff_backward(x, fp, p, g).fu; }, fu,
                  kCompositeTol},
                 next_seed());
        run_case(checks,
                 {"aff/stream-p input",
                  [=](const Tensor& x) { return weighted(g, aff_fuse(fu, x, p).fused); },
                  [=](const Tensor& x) { return aff_backward(fu, x, p, g).fp; }, fp,
                  kCompositeTol},
                 next_seed());
        run_case(checks,
                 {"aff/global1 weight",
                  [=](const Tensor& w) {
                      AffParams q = p;
                      q.global1.weight = w;
                      return weighted(g, aff_fuse(fu, fp, q).fused);
                  },
                  [=](const Tensor& w) {
                      AffParams q = p;
                      q.global1.weight = w;
                      return aff_backward(fu, fp, q, g).global1.weight;
                  },
                  p.global1.weight, kCompositeTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        SaParams p;
        p.channels = 6;
        p.d1 = make_conv(6, 6, 3, 3, wr, 1, 1, 1, 1, 1);
        p.d2 = make_conv(6, 6, 3, 3, wr, 1, 2, 2, 2, 1);
        p.d4 = make_conv(6, 6, 3, 3, wr, 1, 4, 4, 4, 1);
        p.proj = make_conv(6, 6, 1, 1, wr);
        const Tensor x0 = random_tensor(1, 6, 9, 9, wr);
        const Tensor g = random_tensor(1, 6, 9, 9, wr);
        run_case(checks,
                 {"sa/input",
                  [=](const Tensor& x) { return weighted(g, sa_forward(x, p)); },
                  [=](const Tensor& x) { return sa_backward(x, p, g).x; }, x0,
                  kCompositeTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const PcdsParams p = make_pcds(wr.next_u64());
        std::array<Tensor, 4> fusions;
        int side = 8;
        for (int i = 0; i < 4; ++i) {
            fusions[i] = random_tensor(1, kEncoderWidths[i], side, side, wr);
            side /= 2;
        }
        const Tensor fsem = random_tensor(1, kEncoderWidths[3], 1, 1, wr);
        const Tensor g = random_tensor(1, 3, 16, 16, wr);
        run_case(checks,
                 {"decoder/deep input",
                  [=](const Tensor& x) { return weighted(g, cascade_decode(x, fusions, p)); },
                  [=](const Tensor& x) {
                      return cascade_decode_backward(x, fusions, p, g).fsem;
                  },
                  fsem, kCompositeTol},
                 next_seed());
        run_case(checks,
                 {"decoder/skip input",
                  [=](const Tensor& x) {
                      std::array<Tensor, 4> fs = fusions;
                      fs[1] = x;
                      return weighted(g, cascade_decode(fsem, fs, p));
                  },
                  [=](const Tensor& x) {
                      std::array<Tensor, 4> fs = fusions;
                      fs[1] = x;
                      return cascade_decode_backward(fsem, fs, p, g).fusions[1];
                  },
                  fusions[1], kCompositeTol},
                 next_seed());

        // Full removal net, image input to image output.
        Tensor um(1, 1, 16, 16), pm(1, 1, 16, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const double d = std::hypot(x - 7.5, y - 7.5);
                um.at(0, 0, y, x) = d <= 3.5 ? 1.0 : 0.0;
                pm.at(0, 0, y, x) = (d > 3.5 && d <= 6.5) ? 1.0 : 0.0;
            }
        const Tensor img = random_tensor(1, 3, 16, 16, wr, 0.05, 0.95);
        run_case(checks,
                 {"pcds/image input",
                  [=](const Tensor& x) { return weighted(g, pcds_apply(x, um, pm, p)); },
                  [=](const Tensor& x) { return pcds_input_grad(x, um, pm, p, g); }, img,
                  kFullNetTol},
                 next_seed());
    }

    // --- loss gradients ----------------------------------------------------------
    {
        Rng wr(rng.next_u64());
        const auto [sr, sf] = separated_pair(12, 10, wr);
        const IdentityExtractor fx;
        const PcdsLossConfig cfg;
        run_case(checks,
                 {"rec loss (identity)/restored image",
                  [=, &fx](const Tensor& x) {
                      return rec_loss(tensor_to_image(x), sf, fx, cfg);
                  },
                  [=, &fx](const Tensor& x) {
                      return image_to_tensor(rec_loss_grad(tensor_to_image(x), sf, fx, cfg));
                  },
                  image_to_tensor(sr), kLossTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const auto [sr, sf] = ratio_separated_pair(12, 10, wr);
        run_case(checks,
                 {"color loss/restored image",
                  [=](const Tensor& x) { return color_loss(tensor_to_image(x), sf); },
                  [=](const Tensor& x) {
                      return image_to_tensor(color_loss_grad(tensor_to_image(x), sf));
                  },
                  image_to_tensor(sr), kLossTol},
                 next_seed());
    }
    {
        Rng wr(rng.next_u64());
        const PhyFixture fx = phy_fixture(12, 10, wr);
        run_case(checks,
                 {"phy loss/restored image",
                  [=](const Tensor& x) { return phy_loss(fx.s, tensor_to_image(x), fx.pm); },
                  [=](const Tensor& x) {
                      return image_to_tensor(phy_loss_grad(fx.s, tensor_to_image(x), fx.pm));
                  },
                  image_to_tensor(fx.sr), kLossTol},
                 next_seed());
    }

    return checks;
}

}  // namespace shadowlab
