#include "shadowlab/nets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "shadowlab/mask_ops.hpp"

namespace shadowlab {

namespace {

// --- small tensor plumbing used only by the blocks ------------------------

Tensor transpose_hw(const Tensor& t) {
    Tensor out(t.n, t.c, t.w, t.h);
    for (int in = 0; in < t.n; ++in)
        for (int ic = 0; ic < t.c; ++ic)
            for (int iy = 0; iy < t.h; ++iy)
                for (int ix = 0; ix < t.w; ++ix)
                    out.at(in, ic, ix, iy) = t.at(in, ic, iy, ix);
    return out;
}

Tensor concat_h(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.c != b.c || a.w != b.w)
        throw std::invalid_argument("concat_h: shape mismatch");
    Tensor out(a.n, a.c, a.h + b.h, a.w);
    for (int in = 0; in < a.n; ++in)
        for (int ic = 0; ic < a.c; ++ic) {
            for (int iy = 0; iy < a.h; ++iy)
                for (int ix = 0; ix < a.w; ++ix)
                    out.at(in, ic, iy, ix) = a.at(in, ic, iy, ix);
            for (int iy = 0; iy < b.h; ++iy)
                for (int ix = 0; ix < b.w; ++ix)
                    out.at(in, ic, a.h + iy, ix) = b.at(in, ic, iy, ix);
        }
    return out;
}

Tensor slice_h(const Tensor& t, int start, int len) {
    Tensor out(t.n, t.c, len, t.w);
    for (int in = 0; in < t.n; ++in)
        for (int ic = 0; ic < t.c; ++ic)
            for (int iy = 0; iy < len; ++iy)
                for (int ix = 0; ix < t.w; ++ix)
                    out.at(in, ic, iy, ix) = t.at(in, ic, start + iy, ix);
    return out;
}

Tensor concat_c(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat_c: shape mismatch");
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int ic = 0; ic < a.c; ++ic)
            for (int iy = 0; iy < a.h; ++iy)
                for (int ix = 0; ix < a.w; ++ix)
                    out.at(in, ic, iy, ix) = a.at(in, ic, iy, ix);
        for (int ic = 0; ic < b.c; ++ic)
            for (int iy = 0; iy < b.h; ++iy)
                for (int ix = 0; ix < b.w; ++ix)
                    out.at(in, a.c + ic, iy, ix) = b.at(in, ic, iy, ix);
    }
    return out;
}

Tensor slice_c(const Tensor& t, int start, int len) {
    Tensor out(t.n, len, t.h, t.w);
    for (int in = 0; in < t.n; ++in)
        for (int ic = 0; ic < len; ++ic)
            for (int iy = 0; iy < t.h; ++iy)
                for (int ix = 0; ix < t.w; ++ix)
                    out.at(in, ic, iy, ix) = t.at(in, start + ic, iy, ix);
    return out;
}

}  // namespace

// --- SDCA ------------------------------------------------------------------

SdcaParams make_sdca(int channels, std::uint64_t seed) {
    if (channels < 1) throw std::invalid_argument("make_sdca: channels must be >= 1");
    Rng rng(seed);
    SdcaParams p;
    p.channels = channels;
    p.reduced = sdca_reduced_width(channels);
    p.local_reduce = make_conv(p.reduced, channels, 1, 1, rng);
    p.decay_reduce = make_conv(p.reduced, channels, 1, 1, rng);
    p.decay_strip = make_conv(p.reduced, p.reduced, 5, 1, rng, 1, 2, 0, 1, p.reduced);
    p.norm = make_batchnorm(p.reduced);
    p.out_h = make_conv(channels, p.reduced, 1, 1, rng);
    p.out_w = make_conv(channels, p.reduced, 1, 1, rng);
    return p;
}

namespace {

void check_sdca(const Tensor& f, const SdcaParams& p) {
    if (f.c != p.channels || p.channels < 1)
        throw std::invalid_argument("sdca: input channels do not match parameters");
    if (p.reduced != sdca_reduced_width(p.channels))
        throw std::invalid_argument("sdca: reduced width inconsistent with channels");
}

// Everything the forward pass produces, kept so the backward pass can reuse
// it without a second evaluation.
struct SdcaTrace {
    Tensor y;              // (N,C,H+W,1) pooled concat
    Tensor reduced_decay;  // decay branch after the 1x1 reduce
    Tensor summed;         // Y_local + Y_decay, pre-activation
    Tensor activated;      // h_swish(summed)
    Tensor fused;          // BN(activated)
    Tensor logits_h;       // pre-sigmoid, (N,C,H,1)
    Tensor logits_w;       // pre-sigmoid, (N,C,1,W)
    SdcaOut out;
};

SdcaTrace sdca_run(const Tensor& f, const SdcaParams& p) {
    check_sdca(f, p);
    SdcaTrace t;

    const Tensor x_h = pool(f, PoolMode::avg_over_w);              // (N,C,H,1)
    const Tensor x_w = pool(f, PoolMode::avg_over_h);              // (N,C,1,W)
    t.y = concat_h(x_h, transpose_hw(x_w));                        // (N,C,H+W,1)

    const Tensor local = conv2d(t.y, p.local_reduce);
    t.reduced_decay = conv2d(t.y, p.decay_reduce);
    const Tensor decay = strip_conv_dw(t.reduced_decay, p.decay_strip);
    t.summed = add(local, decay);
    t.activated = h_swish(t.summed);
    t.fused = batchnorm(t.activated, p.norm);

    const Tensor y_h = slice_h(t.fused, 0, f.h);                   // (N,M,H,1)
    const Tensor y_w = transpose_hw(slice_h(t.fused, f.h, f.w));   // (N,M,1,W)
    t.logits_h = conv2d(y_h, p.out_h);
    t.logits_w = conv2d(y_w, p.out_w);
    t.out.a_h = sigmoid(t.logits_h);
    t.out.a_w = sigmoid(t.logits_w);

    t.out.fprime = Tensor(f.n, f.c, f.h, f.w);
    for (int in = 0; in < f.n; ++in)
        for (int ic = 0; ic < f.c; ++ic)
            for (int iy = 0; iy < f.h; ++iy)
                for (int ix = 0; ix < f.w; ++ix)
                    t.out.fprime.at(in, ic, iy, ix) = f.at(in, ic, iy, ix) *
                                                      t.out.a_h.at(in, ic, iy, 0) *
                                                      t.out.a_w.at(in, ic, 0, ix);
    return t;
}

}  // namespace

SdcaOut sdca_forward(const Tensor& f, const SdcaParams& p) { return sdca_run(f, p).out; }

SdcaGrads sdca_backward(const Tensor& f, const SdcaParams& p, const Tensor& grad_fprime) {
    check_same_shape(f, grad_fprime, "sdca_backward");
    const SdcaTrace t = sdca_run(f, p);

    SdcaGrads g;
    g.x = zeros_like(f);
    Tensor d_ah(f.n, f.c, f.h, 1);
    Tensor d_aw(f.n, f.c, 1, f.w);
    for (int in = 0; in < f.n; ++in)
        for (int ic = 0; ic < f.c; ++ic)
            for (int iy = 0; iy < f.h; ++iy)
                for (int ix = 0; ix < f.w; ++ix) {
                    const double go = grad_fprime.at(in, ic, iy, ix);
                    const double ah = t.out.a_h.at(in, ic, iy, 0);
                    const double aw = t.out.a_w.at(in, ic, 0, ix);
                    const double fv = f.at(in, ic, iy, ix);
                    g.x.at(in, ic, iy, ix) = go * ah * aw;
                    d_ah.at(in, ic, iy, 0) += go * fv * aw;
                    d_aw.at(in, ic, 0, ix) += go * fv * ah;
                }

    const Tensor d_logits_h = sigmoid_backward(t.logits_h, d_ah);
    const Tensor d_logits_w = sigmoid_backward(t.logits_w, d_aw);

    const Tensor y_h = slice_h(t.fused, 0, f.h);
    const Tensor y_w = transpose_hw(slice_h(t.fused, f.h, f.w));
    Conv2dGrads gh = conv2d_backward(y_h, p.out_h, d_logits_h);
    Conv2dGrads gw = conv2d_backward(y_w, p.out_w, d_logits_w);
    g.out_h = {std::move(gh.weight), std::move(gh.bias)};
    g.out_w = {std::move(gw.weight), std::move(gw.bias)};

    const Tensor d_fused = concat_h(gh.x, transpose_hw(gw.x));
    BatchNormGrads gbn = batchnorm_backward(t.activated, p.norm, d_fused);
    g.norm = {std::move(gbn.gamma), std::move(gbn.beta)};
    const Tensor d_summed = h_swish_backward(t.summed, gbn.x);

    // The sum feeds both branch outputs the same gradient.
    Conv2dGrads g_strip = conv2d_backward(t.reduced_decay, p.decay_strip, d_summed);
    g.decay_strip = {std::move(g_strip.weight), std::move(g_strip.bias)};
    Conv2dGrads g_dred = conv2d_backward(t.y, p.decay_reduce, g_strip.x);
    g.decay_reduce = {std::move(g_dred.weight), std::move(g_dred.bias)};
    Conv2dGrads g_local = conv2d_backward(t.y, p.local_reduce, d_summed);
    g.local_reduce = {std::move(g_local.weight), std::move(g_local.bias)};

    const Tensor d_y = add(g_dred.x, g_local.x);
    const Tensor d_xh = slice_h(d_y, 0, f.h);
    const Tensor d_xw = transpose_hw(slice_h(d_y, f.h, f.w));
    g.x = add(g.x, pool_backward(f, PoolMode::avg_over_w, d_xh));
    g.x = add(g.x, pool_backward(f, PoolMode::avg_over_h, d_xw));
    return g;
}

// --- AFF ---------------------------------------------------------------------

AffParams make_aff(int channels, std::uint64_t seed) {
    if (channels < 1) throw std::invalid_argument("make_aff: channels must be >= 1");
    Rng rng(seed);
    AffParams p;
    p.channels = channels;
    p.hidden = std::max(4, channels / 4);
    p.local1 = make_conv(p.hidden, channels, 1, 1, rng);
    p.local2 = make_conv(channels, p.hidden, 1, 1, rng);
    p.local_norm = make_batchnorm(p.hidden);
    p.global1 = make_conv(p.hidden, channels, 1, 1, rng);
    p.global2 = make_conv(channels, p.hidden, 1, 1, rng);
    p.global_norm = make_batchnorm(p.hidden);
    return p;
}

namespace {

struct AffTrace {
    Tensor x;                    // Fu + Fp
    Tensor l1, l_bn_in, l_relu_in; // local path pre-BN input is l1; relu input is BN out
    Tensor g_pool, g1, g_relu_in;
    Tensor logits;               // local + broadcast(global), pre-sigmoid
    AffOut out;
};

AffTrace aff_run(const Tensor& fu, const Tensor& fp, const AffParams& p) {
    check_same_shape(fu, fp, "aff_fuse");
    if (fu.c != p.channels)
        throw std::invalid_argument("aff_fuse: input channels do not match parameters");

    AffTrace t;
    t.x = add(fu, fp);

    t.l1 = conv2d(t.x, p.local1);
    t.l_relu_in = batchnorm(t.l1, p.local_norm);
    const Tensor local = conv2d(relu(t.l_relu_in), p.local2);

    t.g_pool = pool(t.x, PoolMode::global_avg);
    t.g1 = conv2d(t.g_pool, p.global1);
    t.g_relu_in = batchnorm(t.g1, p.global_norm);
    const Tensor global = conv2d(relu(t.g_relu_in), p.global2);  // (N,C,1,1)

    t.logits = local;
    for (int in = 0; in < local.n; ++in)
        for (int ic = 0; ic < local.c; ++ic) {
            const double gl = global.at(in, ic, 0, 0);
            for (int iy = 0; iy < local.h; ++iy)
                for (int ix = 0; ix < local.w; ++ix) t.logits.at(in, ic, iy, ix) += gl;
        }
    t.out.w = sigmoid(t.logits);

    // fp + (fu - fp) * w rather than fu*w + fp*(1-w): agreement of the two
    // streams then passes through exactly, and the blend cannot escape the
    // [min, max] envelope by a rounding step.
    t.out.fused = zeros_like(fu);
    for (std::size_t i = 0; i < fu.size(); ++i)
        t.out.fused.data[i] =
            fp.data[i] + (fu.data[i] - fp.data[i]) * t.out.w.data[i];
    return t;
}

}  // namespace

AffOut aff_fuse(const Tensor& fu, const Tensor& fp, const AffParams& p) {
    return aff_run(fu, fp, p).out;
}

AffGrads aff_backward(const Tensor& fu, const Tensor& fp, const AffParams& p,
                      const Tensor& grad_fused) {
    check_same_shape(fu, grad_fused, "aff_backward");
    const AffTrace t = aff_run(fu, fp, p);

    AffGrads g;
    g.fu = zeros_like(fu);
    g.fp = zeros_like(fp);
    Tensor d_w = zeros_like(t.out.w);
    for (std::size_t i = 0; i < fu.size(); ++i) {
        const double go = grad_fused.data[i];
        const double w = t.out.w.data[i];
        g.fu.data[i] = go * w;
        g.fp.data[i] = go * (1.0 - w);
        d_w.data[i] = go * (fu.data[i] - fp.data[i]);
    }

    const Tensor d_logits = sigmoid_backward(t.logits, d_w);

    // Local path: logits gradient flows through unchanged.
    Conv2dGrads gl2 = conv2d_backward(relu(t.l_relu_in), p.local2, d_logits);
    g.local2 = {std::move(gl2.weight), std::move(gl2.bias)};
    const Tensor d_lrelu = relu_backward(t.l_relu_in, gl2.x);
    BatchNormGrads gln = batchnorm_backward(t.l1, p.local_norm, d_lrelu);
    g.local_norm = {std::move(gln.gamma), std::move(gln.beta)};
    Conv2dGrads gl1 = conv2d_backward(t.x, p.local1, gln.x);
    g.local1 = {std::move(gl1.weight), std::move(gl1.bias)};

    // Global path: the broadcast sums the gradient over all positions.
    Tensor d_global(t.logits.n, t.logits.c, 1, 1);
    for (int in = 0; in < d_logits.n; ++in)
        for (int ic = 0; ic < d_logits.c; ++ic) {
            double acc = 0.0;
            for (int iy = 0; iy < d_logits.h; ++iy)
                for (int ix = 0; ix < d_logits.w; ++ix) acc += d_logits.at(in, ic, iy, ix);
            d_global.at(in, ic, 0, 0) = acc;
        }
    Conv2dGrads gg2 = conv2d_backward(relu(t.g_relu_in), p.global2, d_global);
    g.global2 = {std::move(gg2.weight), std::move(gg2.bias)};
    const Tensor d_grelu = relu_backward(t.g_relu_in, gg2.x);
    BatchNormGrads ggn = batchnorm_backward(t.g1, p.global_norm, d_grelu);
    g.global_norm = {std::move(ggn.gamma), std::move(ggn.beta)};
    Conv2dGrads gg1 = conv2d_backward(t.g_pool, p.global1, ggn.x);
    g.global1 = {std::move(gg1.weight), std::move(gg1.bias)};

    Tensor d_x = add(gl1.x, pool_backward(t.x, PoolMode::global_avg, gg1.x));
    g.fu = add(g.fu, d_x);
    g.fp = add(g.fp, d_x);
    return g;
}

// --- encoders, SA, decoder ---------------------------------------------------

PcdsParams make_pcds(std::uint64_t seed) {
    Rng rng(seed);
    PcdsParams p;
    int in_ch = 4;  // [image, mask] concat feeds stage 1
    for (int i = 0; i < 4; ++i) {
        const int out_ch = kEncoderWidths[i];
        p.umbra[i] = make_conv(out_ch, in_ch, 3, 3, rng, 2, 1, 1, 1, 1);
        const int d = kPenumbraDilations[i];
        p.penumbra[i] = make_conv(out_ch, in_ch, 3, 3, rng, 2, d, d, d, 1);
        in_ch = out_ch;
    }
    for (int i = 0; i < 4; ++i)
        p.fuse[i] = make_aff(kEncoderWidths[i], rng.next_u64());

    const int deep = kEncoderWidths[3];
    p.sa.channels = deep;
    p.sa.d1 = make_conv(deep, deep, 3, 3, rng, 1, 1, 1, 1, 1);
    p.sa.d2 = make_conv(deep, deep, 3, 3, rng, 1, 2, 2, 2, 1);
    p.sa.d4 = make_conv(deep, deep, 3, 3, rng, 1, 4, 4, 4, 1);
    p.sa.proj = make_conv(deep, deep, 1, 1, rng);

    // Decoder widths: each stage sees [running, fusion] and narrows.
    const std::array<int, 4> dec_out = {64, 32, 16, 16};
    int run_ch = deep;
    for (int k = 0; k < 4; ++k) {
        const int cat_ch = run_ch + kEncoderWidths[3 - k];
        p.decode[k].conv1 = make_conv(dec_out[k], cat_ch, 3, 3, rng, 1, 1, 1, 1, 1);
        p.decode[k].conv2 = make_conv(dec_out[k], dec_out[k], 3, 3, rng, 1, 1, 1, 1, 1);
        run_ch = dec_out[k];
    }
    p.head = make_conv(3, run_ch, 3, 3, rng, 1, 1, 1, 1, 1);
    return p;
}

namespace {

void check_encoder_input(const Tensor& image, const Tensor& mask) {
    if (image.c != 3 || mask.c != 1)
        throw std::invalid_argument("encoder: expected 3-channel image and 1-channel mask");
    if (image.n != mask.n || image.h != mask.h || image.w != mask.w)
        throw std::invalid_argument("encoder: image/mask shape mismatch");
    if (image.h % 16 != 0 || image.w % 16 != 0 || image.h < 16 || image.w < 16)
        throw std::invalid_argument("encoder: spatial dims must be multiples of 16");
}

const std::array<Conv2d, 4>& stream_convs(const PcdsParams& p, Stream s) {
    return s == Stream::umbra ? p.umbra : p.penumbra;
}

}  // namespace

std::array<Tensor, 4> encoder_forward(const Tensor& image, const Tensor& mask,
                                      const PcdsParams& p, Stream stream) {
    check_encoder_input(image, mask);
    const auto& convs = stream_convs(p, stream);
    std::array<Tensor, 4> feats;
    Tensor cur = concat_c(image, mask);
    for (int i = 0; i < 4; ++i) {
        feats[i] = relu(conv2d(cur, convs[i]));
        cur = feats[i];
    }
    return feats;
}

Tensor encoder_backward(const Tensor& image, const Tensor& mask, const PcdsParams& p,
                        Stream stream, const std::array<Tensor, 4>& stage_grads) {
    check_encoder_input(image, mask);
    const auto& convs = stream_convs(p, stream);

    // Recompute the pre-activation stage inputs.
    std::array<Tensor, 4> pre;  // conv output before relu
    Tensor cur = concat_c(image, mask);
    std::array<Tensor, 4> inputs;
    for (int i = 0; i < 4; ++i) {
        inputs[i] = cur;
        pre[i] = conv2d(cur, convs[i]);
        cur = relu(pre[i]);
    }

    Tensor grad;  // gradient w.r.t. the current stage's relu output
    for (int i = 3; i >= 0; --i) {
        grad = grad.size() == 0 ? stage_grads[i] : add(grad, stage_grads[i]);
        const Tensor d_pre = relu_backward(pre[i], grad);
        grad = conv2d_backward(inputs[i], convs[i], d_pre).x;
    }
    return grad;  // w.r.t. the 4-channel concat
}

Tensor sa_forward(const Tensor& x, const SaParams& p) {
    if (x.c != p.channels)
        throw std::invalid_argument("sa_forward: input channels do not match parameters");
    const Tensor summed = add(add(conv2d(x, p.d1), conv2d(x, p.d2)), conv2d(x, p.d4));
    return add(x, conv2d(relu(summed), p.proj));
}

SaGrads sa_backward(const Tensor& x, const SaParams& p, const Tensor& grad_out) {
    check_same_shape(x, grad_out, "sa_backward");
    const Tensor summed = add(add(conv2d(x, p.d1), conv2d(x, p.d2)), conv2d(x, p.d4));

    SaGrads g;
    Conv2dGrads gp = conv2d_backward(relu(summed), p.proj, grad_out);
    g.proj = {std::move(gp.weight), std::move(gp.bias)};
    const Tensor d_summed = relu_backward(summed, gp.x);
    Conv2dGrads g1 = conv2d_backward(x, p.d1, d_summed);
    Conv2dGrads g2 = conv2d_backward(x, p.d2, d_summed);
    Conv2dGrads g4 = conv2d_backward(x, p.d4, d_summed);
    g.d1 = {std::move(g1.weight), std::move(g1.bias)};
    g.d2 = {std::move(g2.weight), std::move(g2.bias)};
    g.d4 = {std::move(g4.weight), std::move(g4.bias)};

    g.x = add(grad_out, add(add(g1.x, g2.x), g4.x));  // residual + pyramid paths
    return g;
}

namespace {

struct DecodeTrace {
    // Per stage: concat input, conv1 pre-activation, conv2 input (relu of
    // pre1), conv2 pre-activation, upsample input (relu of pre2).
    std::array<Tensor, 4> cat, pre1, mid, pre2, up_in;
    Tensor head_in;       // output of stage 4 upsample
    Tensor head_logits;   // pre-sigmoid
    Tensor out;
};

DecodeTrace decode_run(const Tensor& fsem, const std::array<Tensor, 4>& fusions,
                       const PcdsParams& p) {
    DecodeTrace t;
    Tensor cur = fsem;
    for (int k = 0; k < 4; ++k) {
        const Tensor& fuse = fusions[3 - k];  // deepest level first
        if (cur.h != fuse.h || cur.w != fuse.w || cur.n != fuse.n)
            throw std::invalid_argument("cascade_decode: fusion pyramid shape mismatch");
        t.cat[k] = concat_c(cur, fuse);
        t.pre1[k] = conv2d(t.cat[k], p.decode[k].conv1);
        t.mid[k] = relu(t.pre1[k]);
        t.pre2[k] = conv2d(t.mid[k], p.decode[k].conv2);
        t.up_in[k] = relu(t.pre2[k]);
        cur = bilinear_upsample(t.up_in[k], 2);
    }
    t.head_in = cur;
    t.head_logits = conv2d(cur, p.head);
    t.out = sigmoid(t.head_logits);
    return t;
}

}  // namespace

Tensor cascade_decode(const Tensor& fsem, const std::array<Tensor, 4>& fusions,
                      const PcdsParams& p) {
    return decode_run(fsem, fusions, p).out;
}

DecodeGrads cascade_decode_backward(const Tensor& fsem, const std::array<Tensor, 4>& fusions,
                                    const PcdsParams& p, const Tensor& grad_out) {
    const DecodeTrace t = decode_run(fsem, fusions, p);
    check_same_shape(t.out, grad_out, "cascade_decode_backward");

    DecodeGrads g;
    const Tensor d_logits = sigmoid_backward(t.head_logits, grad_out);
    Tensor grad = conv2d_backward(t.head_in, p.head, d_logits).x;

    for (int k = 3; k >= 0; --k) {
        grad = bilinear_upsample_backward(t.up_in[k], 2, grad);
        grad = relu_backward(t.pre2[k], grad);
        grad = conv2d_backward(t.mid[k], p.decode[k].conv2, grad).x;
        grad = relu_backward(t.pre1[k], grad);
        grad = conv2d_backward(t.cat[k], p.decode[k].conv1, grad).x;

        const int run_ch = grad.c - fusions[3 - k].c;
        g.fusions[3 - k] = slice_c(grad, run_ch, fusions[3 - k].c);
        grad = slice_c(grad, 0, run_ch);
    }
    g.fsem = grad;
    return g;
}

// --- composed forward ---------------------------------------------------------

Tensor pcds_apply(const Tensor& image, const Tensor& umbra_mask, const Tensor& penumbra_mask,
                  const PcdsParams& p) {
    const auto fu = encoder_forward(image, umbra_mask, p, Stream::umbra);
    const auto fp = encoder_forward(image, penumbra_mask, p, Stream::penumbra);
    std::array<Tensor, 4> fusions;
    for (int i = 0; i < 4; ++i) fusions[i] = aff_fuse(fu[i], fp[i], p.fuse[i]).fused;
    const Tensor fsem = sa_forward(fusions[3], p.sa);
    return cascade_decode(fsem, fusions, p);
}

Tensor pcds_input_grad(const Tensor& image, const Tensor& umbra_mask,
                       const Tensor& penumbra_mask, const PcdsParams& p,
                       const Tensor& grad_out) {
    const auto fu = encoder_forward(image, umbra_mask, p, Stream::umbra);
    const auto fp = encoder_forward(image, penumbra_mask, p, Stream::penumbra);
    std::array<Tensor, 4> fusions;
    for (int i = 0; i < 4; ++i) fusions[i] = aff_fuse(fu[i], fp[i], p.fuse[i]).fused;
    const Tensor fsem = sa_forward(fusions[3], p.sa);

    DecodeGrads d_dec = cascade_decode_backward(fsem, fusions, p, grad_out);
    d_dec.fusions[3] = add(d_dec.fusions[3], sa_backward(fusions[3], p.sa, d_dec.fsem).x);

    std::array<Tensor, 4> d_fu, d_fp;
    for (int i = 0; i < 4; ++i) {
        AffGrads ga = aff_backward(fu[i], fp[i], p.fuse[i], d_dec.fusions[i]);
        d_fu[i] = std::move(ga.fu);
        d_fp[i] = std::move(ga.fp);
    }

    const Tensor gu = encoder_backward(image, umbra_mask, p, Stream::umbra, d_fu);
    const Tensor gp = encoder_backward(image, penumbra_mask, p, Stream::penumbra, d_fp);
    return add(slice_c(gu, 0, 3), slice_c(gp, 0, 3));  // both streams see the image
}

Image pcds_forward(const Image& image, const Mask& mask, const PcdsParams& p,
                   int split_radius) {
    const UmbraPenumbra split = umbra_penumbra_split(mask, split_radius);
    const Tensor out = pcds_apply(image_to_tensor(image), mask_to_tensor(split.umbra),
                                  mask_to_tensor(split.penumbra), p);
    return tensor_to_image(out);
}

// --- patch scorer ---------------------------------------------------------------

PatchScorerParams make_patch_scorer(std::uint64_t seed) {
    Rng rng(seed);
    PatchScorerParams p;
    p.conv1 = make_conv(16, 3, 3, 3, rng, 2, 1, 1, 1, 1);
    p.conv2 = make_conv(32, 16, 3, 3, rng, 2, 1, 1, 1, 1);
    p.conv3 = make_conv(64, 32, 3, 3, rng, 2, 1, 1, 1, 1);
    p.head = make_conv(1, 64, 1, 1, rng);
    return p;
}

Tensor patch_score(const Tensor& x, const PatchScorerParams& p) {
    if (x.c != 3) throw std::invalid_argument("patch_score: expected a 3-channel input");
    if (x.h < 16 || x.w < 16)
        throw std::invalid_argument("patch_score: input must be at least 16x16");
    Tensor cur = relu(conv2d(x, p.conv1));
    cur = relu(conv2d(cur, p.conv2));
    cur = relu(conv2d(cur, p.conv3));
    return conv2d(cur, p.head);  // raw scores, no squashing
}

// --- bridging and serialization ---------------------------------------------------

Tensor image_to_tensor(const Image& image) {
    Tensor t(1, 3, image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = image.at(x, y, c);
    return t;
}

Tensor mask_to_tensor(const Mask& mask) {
    Tensor t(1, 1, mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) t.at(0, 0, y, x) = mask.at(x, y);
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.n != 1 || t.c != 3)
        throw std::invalid_argument("tensor_to_image: expected a (1,3,H,W) tensor");
    Image img(t.w, t.h);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = t.at(0, c, y, x);
    return img;
}

namespace {

void put_conv(ParamMap& m, const std::string& name, const Conv2d& conv) {
    m[name + ".weight"] = {{conv.weight.n, conv.weight.c, conv.weight.h, conv.weight.w},
                           conv.weight.data};
    m[name + ".bias"] = {{static_cast<int>(conv.bias.size())}, conv.bias};
}

void get_conv(const ParamMap& m, const std::string& name, Conv2d& conv) {
    const ParamEntry& w = m.at(name + ".weight");
    if (w.shape.size() != 4 || w.values.size() != conv.weight.size())
        throw std::runtime_error("restore_params: shape mismatch for " + name + ".weight");
    conv.weight.data = w.values;
    const ParamEntry& b = m.at(name + ".bias");
    if (b.values.size() != conv.bias.size())
        throw std::runtime_error("restore_params: shape mismatch for " + name + ".bias");
    conv.bias = b.values;
}

void put_bn(ParamMap& m, const std::string& name, const BatchNorm& bn) {
    const int c = static_cast<int>(bn.gamma.size());
    m[name + ".gamma"] = {{c}, bn.gamma};
    m[name + ".beta"] = {{c}, bn.beta};
    m[name + ".running_mean"] = {{c}, bn.running_mean};
    m[name + ".running_var"] = {{c}, bn.running_var};
}

void get_bn(const ParamMap& m, const std::string& name, BatchNorm& bn) {
    const auto fetch = [&](const char* field, std::vector<double>& dst) {
        const ParamEntry& e = m.at(name + "." + field);
        if (e.values.size() != dst.size())
            throw std::runtime_error(std::string("restore_params: shape mismatch for ") +
                                     name + "." + field);
        dst = e.values;
    };
    fetch("gamma", bn.gamma);
    fetch("beta", bn.beta);
    fetch("running_mean", bn.running_mean);
    fetch("running_var", bn.running_var);
}

void put_aff(ParamMap& m, const std::string& prefix, const AffParams& p) {
    put_conv(m, prefix + "local1", p.local1);
    put_conv(m, prefix + "local2", p.local2);
    put_bn(m, prefix + "local_norm", p.local_norm);
    put_conv(m, prefix + "global1", p.global1);
    put_conv(m, prefix + "global2", p.global2);
    put_bn(m, prefix + "global_norm", p.global_norm);
}

void get_aff(const ParamMap& m, const std::string& prefix, AffParams& p) {
    get_conv(m, prefix + "local1", p.local1);
    get_conv(m, prefix + "local2", p.local2);
    get_bn(m, prefix + "local_norm", p.local_norm);
    get_conv(m, prefix + "global1", p.global1);
    get_conv(m, prefix + "global2", p.global2);
    get_bn(m, prefix + "global_norm", p.global_norm);
}

}  // namespace

ParamMap collect_params(const SdcaParams& p) {
    ParamMap m;
    put_conv(m, "local_reduce", p.local_reduce);
    put_conv(m, "decay_reduce", p.decay_reduce);
    put_conv(m, "decay_strip", p.decay_strip);
    put_bn(m, "norm", p.norm);
    put_conv(m, "out_h", p.out_h);
    put_conv(m, "out_w", p.out_w);
    return m;
}

void restore_params(SdcaParams& p, const ParamMap& m) {
    get_conv(m, "local_reduce", p.local_reduce);
    get_conv(m, "decay_reduce", p.decay_reduce);
    get_conv(m, "decay_strip", p.decay_strip);
    get_bn(m, "norm", p.norm);
    get_conv(m, "out_h", p.out_h);
    get_conv(m, "out_w", p.out_w);
}

ParamMap collect_params(const AffParams& p) {
    ParamMap m;
    put_aff(m, "", p);
    return m;
}

void restore_params(AffParams& p, const ParamMap& m) { get_aff(m, "", p); }

ParamMap collect_params(const PcdsParams& p) {
    ParamMap m;
    for (int i = 0; i < 4; ++i) {
        const std::string tag = std::to_string(i + 1);
        put_conv(m, "umbra" + tag, p.umbra[i]);
        put_conv(m, "penumbra" + tag, p.penumbra[i]);
        put_aff(m, "fuse" + tag + ".", p.fuse[i]);
        put_conv(m, "decode" + tag + ".conv1", p.decode[i].conv1);
        put_conv(m, "decode" + tag + ".conv2", p.decode[i].conv2);
    }
    put_conv(m, "sa.d1", p.sa.d1);
    put_conv(m, "sa.d2", p.sa.d2);
    put_conv(m, "sa.d4", p.sa.d4);
    put_conv(m, "sa.proj", p.sa.proj);
    put_conv(m, "head", p.head);
    return m;
}

void restore_params(PcdsParams& p, const ParamMap& m) {
    for (int i = 0; i < 4; ++i) {
        const std::string tag = std::to_string(i + 1);
        get_conv(m, "umbra" + tag, p.umbra[i]);
        get_conv(m, "penumbra" + tag, p.penumbra[i]);
        get_aff(m, "fuse" + tag + ".", p.fuse[i]);
        get_conv(m, "decode" + tag + ".conv1", p.decode[i].conv1);
        get_conv(m, "decode" + tag + ".conv2", p.decode[i].conv2);
    }
    get_conv(m, "sa.d1", p.sa.d1);
    get_conv(m, "sa.d2", p.sa.d2);
    get_conv(m, "sa.d4", p.sa.d4);
    get_conv(m, "sa.proj", p.sa.proj);
    get_conv(m, "head", p.head);
}

}  // namespace shadowlab
