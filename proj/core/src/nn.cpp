#include "shadowlab/nn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace shadowlab {

namespace {

struct ConvGeometry {
    int out_h, out_w, in_per_group, out_per_group;
};

ConvGeometry conv_geometry(const Tensor& x, const Conv2d& p) {
    if (p.stride < 1 || p.dilation < 1 || p.groups < 1 || p.pad_h < 0 || p.pad_w < 0)
        throw std::invalid_argument("conv2d: bad stride/dilation/groups/padding");
    if (x.c % p.groups != 0 || p.weight.n % p.groups != 0)
        throw std::invalid_argument("conv2d: channels not divisible by groups");
    if (p.weight.c != x.c / p.groups)
        throw std::invalid_argument("conv2d: weight input-channel mismatch");
    if (p.bias.size() != static_cast<std::size_t>(p.weight.n))
        throw std::invalid_argument("conv2d: bias size mismatch");

    ConvGeometry g;
    g.in_per_group = x.c / p.groups;
    g.out_per_group = p.weight.n / p.groups;
    const int span_h = p.dilation * (p.weight.h - 1) + 1;
    const int span_w = p.dilation * (p.weight.w - 1) + 1;
    g.out_h = (x.h + 2 * p.pad_h - span_h) / p.stride + 1;
    g.out_w = (x.w + 2 * p.pad_w - span_w) / p.stride + 1;
    if (x.h + 2 * p.pad_h < span_h || x.w + 2 * p.pad_w < span_w || g.out_h < 1 || g.out_w < 1)
        throw std::invalid_argument("conv2d: kernel does not fit input");
    return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Conv2d& p) {
    const ConvGeometry g = conv_geometry(x, p);
    Tensor out(x.n, p.weight.n, g.out_h, g.out_w);
    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < p.weight.n; ++oc) {
            const int group = oc / g.out_per_group;
            for (int oy = 0; oy < g.out_h; ++oy)
                for (int ox = 0; ox < g.out_w; ++ox) {
                    double acc = p.bias[oc];
                    for (int ic = 0; ic < g.in_per_group; ++ic) {
                        const int xc = group * g.in_per_group + ic;
                        for (int ky = 0; ky < p.weight.h; ++ky) {
                            const int iy = oy * p.stride - p.pad_h + ky * p.dilation;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < p.weight.w; ++kx) {
                                const int ix = ox * p.stride - p.pad_w + kx * p.dilation;
                                if (ix < 0 || ix >= x.w) continue;
                                acc += x.at(in, xc, iy, ix) * p.weight.at(oc, ic, ky, kx);
                            }
                        }
                    }
                    out.at(in, oc, oy, ox) = acc;
                }
        }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Conv2d& p, const Tensor& grad_out) {
    const ConvGeometry g = conv_geometry(x, p);
    if (grad_out.n != x.n || grad_out.c != p.weight.n || grad_out.h != g.out_h ||
        grad_out.w != g.out_w)
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");

    Conv2dGrads grads;
    grads.x = zeros_like(x);
    grads.weight = zeros_like(p.weight);
    grads.bias.assign(p.bias.size(), 0.0);

    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < p.weight.n; ++oc) {
            const int group = oc / g.out_per_group;
            for (int oy = 0; oy < g.out_h; ++oy)
                for (int ox = 0; ox < g.out_w; ++ox) {
                    const double go = grad_out.at(in, oc, oy, ox);
                    grads.bias[oc] += go;
                    for (int ic = 0; ic < g.in_per_group; ++ic) {
                        const int xc = group * g.in_per_group + ic;
                        for (int ky = 0; ky < p.weight.h; ++ky) {
                            const int iy = oy * p.stride - p.pad_h + ky * p.dilation;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < p.weight.w; ++kx) {
                                const int ix = ox * p.stride - p.pad_w + kx * p.dilation;
                                if (ix < 0 || ix >= x.w) continue;
                                grads.weight.at(oc, ic, ky, kx) += go * x.at(in, xc, iy, ix);
                                grads.x.at(in, xc, iy, ix) += go * p.weight.at(oc, ic, ky, kx);
                            }
                        }
                    }
                }
        }
    return grads;
}

Tensor strip_conv_dw(const Tensor& x, const Conv2d& p) {
    if (p.weight.h != 5 || p.weight.w != 1 || p.weight.c != 1 || p.groups != x.c ||
        p.pad_h != 2 || p.pad_w != 0 || p.stride != 1 || p.dilation != 1)
        throw std::invalid_argument("strip_conv_dw: expected depthwise 5x1 kernel, padding (2,0)");
    return conv2d(x, p);
}

Tensor pool(const Tensor& x, PoolMode mode) {
    const int oh = mode == PoolMode::avg_over_w ? x.h : 1;
    const int ow = mode == PoolMode::avg_over_h ? x.w : 1;
    Tensor out(x.n, x.c, oh, ow);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            switch (mode) {
                case PoolMode::avg_over_w:
                    for (int iy = 0; iy < x.h; ++iy) {
                        double acc = 0.0;
                        for (int ix = 0; ix < x.w; ++ix) acc += x.at(in, ic, iy, ix);
                        out.at(in, ic, iy, 0) = acc / x.w;
                    }
                    break;
                case PoolMode::avg_over_h:
                    for (int ix = 0; ix < x.w; ++ix) {
                        double acc = 0.0;
                        for (int iy = 0; iy < x.h; ++iy) acc += x.at(in, ic, iy, ix);
                        out.at(in, ic, 0, ix) = acc / x.h;
                    }
                    break;
                case PoolMode::global_avg: {
                    double acc = 0.0;
                    for (int iy = 0; iy < x.h; ++iy)
                        for (int ix = 0; ix < x.w; ++ix) acc += x.at(in, ic, iy, ix);
                    out.at(in, ic, 0, 0) = acc / (static_cast<double>(x.h) * x.w);
                    break;
                }
            }
    return out;
}

Tensor pool_backward(const Tensor& x, PoolMode mode, const Tensor& grad_out) {
    Tensor gx = zeros_like(x);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix) {
                    double g = 0.0;
                    switch (mode) {
                        case PoolMode::avg_over_w: g = grad_out.at(in, ic, iy, 0) / x.w; break;
                        case PoolMode::avg_over_h: g = grad_out.at(in, ic, 0, ix) / x.h; break;
                        case PoolMode::global_avg:
                            g = grad_out.at(in, ic, 0, 0) / (static_cast<double>(x.h) * x.w);
                            break;
                    }
                    gx.at(in, ic, iy, ix) = g;
                }
    return gx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_out) {
    check_same_shape(x, grad_out, "sigmoid_backward");
    Tensor gx = x;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x.data[i]));
        gx.data[i] = grad_out.data[i] * s * (1.0 - s);
    }
    return gx;
}

Tensor h_swish(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) {
        const double r6 = std::min(std::max(v + 3.0, 0.0), 6.0);
        v = v * r6 / 6.0;
    }
    return out;
}

Tensor h_swish_backward(const Tensor& x, const Tensor& grad_out) {
    check_same_shape(x, grad_out, "h_swish_backward");
    Tensor gx = x;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = x.data[i];
        double d;
        if (v <= -3.0)
            d = 0.0;
        else if (v >= 3.0)
            d = 1.0;
        else
            d = (2.0 * v + 3.0) / 6.0;
        gx.data[i] = grad_out.data[i] * d;
    }
    return gx;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::max(v, 0.0);
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    check_same_shape(x, grad_out, "relu_backward");
    Tensor gx = x;
    for (std::size_t i = 0; i < gx.size(); ++i)
        gx.data[i] = x.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return gx;
}

namespace {

void check_bn(const Tensor& x, const BatchNorm& p) {
    const auto c = static_cast<std::size_t>(x.c);
    if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c ||
        p.running_var.size() != c)
        throw std::invalid_argument("batchnorm: per-channel parameter size mismatch");
    for (double v : p.running_var)
        if (!(v > 0.0)) throw std::invalid_argument("batchnorm: running variance must be > 0");
}

}  // namespace

Tensor batchnorm(const Tensor& x, const BatchNorm& p) {
    check_bn(x, p);
    Tensor out = x;
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const double inv = 1.0 / std::sqrt(p.running_var[ic] + kBnEps);
            const double g = p.gamma[ic], b = p.beta[ic], m = p.running_mean[ic];
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix)
                    out.at(in, ic, iy, ix) = (x.at(in, ic, iy, ix) - m) * inv * g + b;
        }
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor& x, const BatchNorm& p, const Tensor& grad_out) {
    check_bn(x, p);
    check_same_shape(x, grad_out, "batchnorm_backward");
    BatchNormGrads grads;
    grads.x = zeros_like(x);
    grads.gamma.assign(p.gamma.size(), 0.0);
    grads.beta.assign(p.beta.size(), 0.0);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const double inv = 1.0 / std::sqrt(p.running_var[ic] + kBnEps);
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix) {
                    const double go = grad_out.at(in, ic, iy, ix);
                    grads.x.at(in, ic, iy, ix) = go * p.gamma[ic] * inv;
                    grads.gamma[ic] += go * (x.at(in, ic, iy, ix) - p.running_mean[ic]) * inv;
                    grads.beta[ic] += go;
                }
        }
    return grads;
}

Tensor bilinear_upsample(const Tensor& x, int factor) {
    if (factor < 2) throw std::invalid_argument("bilinear_upsample: factor must be >= 2");
    Tensor out(x.n, x.c, x.h * factor, x.w * factor);
    for (int oy = 0; oy < out.h; ++oy) {
        const double sy = std::min(std::max((oy + 0.5) / factor - 0.5, 0.0),
                                   static_cast<double>(x.h - 1));
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, x.h - 1);
        const double wy = sy - y0;
        for (int ox = 0; ox < out.w; ++ox) {
            const double sx = std::min(std::max((ox + 0.5) / factor - 0.5, 0.0),
                                       static_cast<double>(x.w - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, x.w - 1);
            const double wx = sx - x0;
            for (int in = 0; in < x.n; ++in)
                for (int ic = 0; ic < x.c; ++ic)
                    out.at(in, ic, oy, ox) =
                        x.at(in, ic, y0, x0) * (1 - wy) * (1 - wx) +
                        x.at(in, ic, y0, x1) * (1 - wy) * wx +
                        x.at(in, ic, y1, x0) * wy * (1 - wx) +
                        x.at(in, ic, y1, x1) * wy * wx;
        }
    }
    return out;
}

Tensor bilinear_upsample_backward(const Tensor& x, int factor, const Tensor& grad_out) {
    if (factor < 2) throw std::invalid_argument("bilinear_upsample: factor must be >= 2");
    if (grad_out.n != x.n || grad_out.c != x.c || grad_out.h != x.h * factor ||
        grad_out.w != x.w * factor)
        throw std::invalid_argument("bilinear_upsample_backward: grad_out shape mismatch");

    Tensor gx = zeros_like(x);
    for (int oy = 0; oy < grad_out.h; ++oy) {
        const double sy = std::min(std::max((oy + 0.5) / factor - 0.5, 0.0),
                                   static_cast<double>(x.h - 1));
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, x.h - 1);
        const double wy = sy - y0;
        for (int ox = 0; ox < grad_out.w; ++ox) {
            const double sx = std::min(std::max((ox + 0.5) / factor - 0.5, 0.0),
                                       static_cast<double>(x.w - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, x.w - 1);
            const double wx = sx - x0;
            for (int in = 0; in < x.n; ++in)
                for (int ic = 0; ic < x.c; ++ic) {
                    const double go = grad_out.at(in, ic, oy, ox);
                    gx.at(in, ic, y0, x0) += go * (1 - wy) * (1 - wx);
                    gx.at(in, ic, y0, x1) += go * (1 - wy) * wx;
                    gx.at(in, ic, y1, x0) += go * wy * (1 - wx);
                    gx.at(in, ic, y1, x1) += go * wy * wx;
                }
        }
    }
    return gx;
}

double grad_check(const std::function<double(const Tensor&)>& f,
                  const std::function<Tensor(const Tensor&)>& grad_f, const Tensor& x,
                  std::uint64_t seed, int directions, double step) {
    if (directions < 1) throw std::invalid_argument("grad_check: need at least one direction");

    const Tensor analytic = grad_f(x);
    check_same_shape(analytic, x, "grad_check");

    Rng rng(seed);
    double worst = 0.0;
    for (int k = 0; k < directions; ++k) {
        Tensor d = zeros_like(x);
        double norm_sq = 0.0;
        for (double& v : d.data) {
            v = rng.normal();
            norm_sq += v * v;
        }
        const double norm = std::sqrt(norm_sq);
        for (double& v : d.data) v /= norm;

        Tensor xp = x, xm = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xp.data[i] += step * d.data[i];
            xm.data[i] -= step * d.data[i];
        }
        const double fp = f(xp);
        const double fm = f(xm);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite forward value");
        const double numeric = (fp - fm) / (2.0 * step);

        double directional = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            directional += analytic.data[i] * d.data[i];

        const double denom = std::max({std::abs(directional), std::abs(numeric), 1.0});
        worst = std::max(worst, std::abs(directional - numeric) / denom);
    }
    return worst;
}

void save_params(const ParamMap& params, const std::string& path) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [name, entry] : params)
        doc[name] = {{"shape", entry.shape}, {"values", entry.values}};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

ParamMap load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);

    ParamMap params;
    try {
        const nlohmann::json doc = nlohmann::json::parse(in);
        for (const auto& [name, obj] : doc.items()) {
            ParamEntry entry;
            entry.shape = obj.at("shape").get<std::vector<int>>();
            entry.values = obj.at("values").get<std::vector<double>>();
            std::size_t expect = 1;
            for (int s : entry.shape) expect *= static_cast<std::size_t>(std::max(s, 0));
            if (entry.values.size() != expect)
                throw std::runtime_error("load_params: shape/value length mismatch for " + name);
            params[name] = std::move(entry);
        }
    } catch (const nlohmann::json::exception& err) {
        throw std::runtime_error("load_params: malformed file " + path + ": " + err.what());
    }
    return params;
}

Conv2d make_conv(int out_ch, int in_ch, int kh, int kw, Rng& rng, int stride, int pad_h,
                 int pad_w, int dilation, int groups) {
    if (in_ch % groups != 0 || out_ch % groups != 0)
        throw std::invalid_argument("make_conv: channels not divisible by groups");
    Conv2d conv;
    conv.weight = Tensor(out_ch, in_ch / groups, kh, kw);
    conv.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
    conv.stride = stride;
    conv.pad_h = pad_h;
    conv.pad_w = pad_w;
    conv.dilation = dilation;
    conv.groups = groups;

    const double bound = std::sqrt(1.0 / (static_cast<double>(in_ch / groups) * kh * kw));
    for (double& v : conv.weight.data) v = rng.uniform(-bound, bound);
    return conv;
}

BatchNorm make_batchnorm(int channels) {
    BatchNorm bn;
    bn.gamma.assign(static_cast<std::size_t>(channels), 1.0);
    bn.beta.assign(static_cast<std::size_t>(channels), 0.0);
    bn.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
    bn.running_var.assign(static_cast<std::size_t>(channels), 1.0);
    return bn;
}

}  // namespace shadowlab
