#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shadowlab/rng.hpp"
#include "shadowlab/tensor.hpp"

namespace shadowlab {

// Cross-correlation (deep-learning "convolution"), zero padding, with the
// usual stride/dilation/groups generalizations. weight is
// (out_channels, in_channels/groups, kh, kw).
struct Conv2d {
    Tensor weight;
    std::vector<double> bias;
    int stride = 1;
    int pad_h = 0;
    int pad_w = 0;
    int dilation = 1;
    int groups = 1;
};

Tensor conv2d(const Tensor& x, const Conv2d& p);

struct Conv2dGrads {
    Tensor x;
    Tensor weight;
    std::vector<double> bias;
};

Conv2dGrads conv2d_backward(const Tensor& x, const Conv2d& p, const Tensor& grad_out);

// Depthwise 5x1 strip convolution along H (used on coordinate-pooled maps
// where H is really the concatenated H+W axis). Just conv2d with the
// geometry pinned: kernel 5x1, groups = channels, padding (2,0).
Tensor strip_conv_dw(const Tensor& x, const Conv2d& p);

enum class PoolMode { avg_over_w, avg_over_h, global_avg };

// avg_over_w: (N,C,H,W) -> (N,C,H,1); avg_over_h: -> (N,C,1,W);
// global_avg: -> (N,C,1,1). Backward spreads the gradient uniformly.
Tensor pool(const Tensor& x, PoolMode mode);
Tensor pool_backward(const Tensor& x, PoolMode mode, const Tensor& grad_out);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_out);

// h-swish: x * ReLU6(x + 3) / 6. Piecewise smooth with derivative jumps at
// x = -3 and x = 3; finite-difference checks must avoid those neighborhoods.
Tensor h_swish(const Tensor& x);
Tensor h_swish_backward(const Tensor& x, const Tensor& grad_out);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

inline constexpr double kBnEps = 1e-5;

// Inference-form batch normalization: an affine map built from frozen
// running statistics. No batch coupling, so the backward is per-element.
struct BatchNorm {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

Tensor batchnorm(const Tensor& x, const BatchNorm& p);

struct BatchNormGrads {
    Tensor x;
    std::vector<double> gamma;
    std::vector<double> beta;
};

BatchNormGrads batchnorm_backward(const Tensor& x, const BatchNorm& p, const Tensor& grad_out);

// Align-corners-false bilinear interpolation by an integer factor >= 2:
// source coordinate (dst + 0.5)/factor - 0.5, clamped to the valid range.
Tensor bilinear_upsample(const Tensor& x, int factor);
Tensor bilinear_upsample_backward(const Tensor& x, int factor, const Tensor& grad_out);

// Compares the analytic directional derivative <grad_f(x), d> against a
// central difference of f along >= `directions` random unit directions and
// returns the worst relative error, with the denominator floored at 1 so
// near-zero derivatives are judged on absolute error.
double grad_check(const std::function<double(const Tensor&)>& f,
                  const std::function<Tensor(const Tensor&)>& grad_f, const Tensor& x,
                  std::uint64_t seed, int directions = 8, double step = 1e-5);

// Named parameter bundle for serializing block weights (fixture tests, the
// CLI gradient-check command). Flat JSON: name -> {shape, values}.
struct ParamEntry {
    std::vector<int> shape;
    std::vector<double> values;
};
using ParamMap = std::map<std::string, ParamEntry>;

void save_params(const ParamMap& params, const std::string& path);
ParamMap load_params(const std::string& path);

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero bias.
Conv2d make_conv(int out_ch, int in_ch, int kh, int kw, Rng& rng, int stride = 1,
                 int pad_h = 0, int pad_w = 0, int dilation = 1, int groups = 1);

// Identity-like defaults: gamma 1, beta 0, mean 0, variance 1.
BatchNorm make_batchnorm(int channels);

}  // namespace shadowlab
