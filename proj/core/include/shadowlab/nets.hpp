#pragma once

#include <algorithm>
#include <array>
#include <cstdint>

#include "shadowlab/image.hpp"
#include "shadowlab/nn.hpp"
#include "shadowlab/tensor.hpp"

namespace shadowlab {

// Weight/bias gradient pair for one conv, and the affine pair for one
// batchnorm. Block backwards return these alongside the input gradient.
struct ConvWB {
    Tensor weight;
    std::vector<double> bias;
};

struct BnWB {
    std::vector<double> gamma;
    std::vector<double> beta;
};

// ---------------------------------------------------------------------------
// Coordinate attention with a decay branch.
//
// The block pools the input along each spatial axis, concatenates the two
// pooled maps into one (H+W)-long column, runs a 1x1 "local" reduction and a
// 1x1-then-depthwise-5x1 "decay" reduction in parallel, fuses them as
// BN(h_swish(sum)), splits back into the H and W parts, and maps each through
// its own 1x1 conv + sigmoid into directional attention maps. The input is
// reweighted by both maps.
// ---------------------------------------------------------------------------

inline int sdca_reduced_width(int channels) { return std::max(8, channels / 32); }

struct SdcaParams {
    int channels = 0;
    int reduced = 0;     // max(8, channels/32)
    Conv2d local_reduce; // 1x1, C -> M
    Conv2d decay_reduce; // 1x1, C -> M
    Conv2d decay_strip;  // depthwise 5x1 over M
    BatchNorm norm;      // over M
    Conv2d out_h;        // 1x1, M -> C
    Conv2d out_w;        // 1x1, M -> C
};

SdcaParams make_sdca(int channels, std::uint64_t seed);

struct SdcaOut {
    Tensor fprime; // (N,C,H,W)
    Tensor a_h;    // (N,C,H,1)
    Tensor a_w;    // (N,C,1,W)
};

SdcaOut sdca_forward(const Tensor& f, const SdcaParams& p);

struct SdcaGrads {
    Tensor x;
    ConvWB local_reduce, decay_reduce, decay_strip, out_h, out_w;
    BnWB norm;
};

// Gradient of sum(grad_fprime . fprime) with respect to the input and every
// parameter. Intermediates are recomputed rather than cached; these blocks
// only run at toy sizes.
SdcaGrads sdca_backward(const Tensor& f, const SdcaParams& p, const Tensor& grad_fprime);

// ---------------------------------------------------------------------------
// Attentional feature fusion: a convex, elementwise blend of two streams
// with the blend weight predicted from their sum (local 1x1 path plus a
// globally pooled path, each conv-BN-relu-conv).
// ---------------------------------------------------------------------------

struct AffParams {
    int channels = 0;
    int hidden = 0;       // max(4, channels/4)
    Conv2d local1, local2;
    BatchNorm local_norm; // over hidden
    Conv2d global1, global2;
    BatchNorm global_norm;
};

AffParams make_aff(int channels, std::uint64_t seed);

struct AffOut {
    Tensor fused;
    Tensor w; // blend weight, strictly inside (0,1)
};

AffOut aff_fuse(const Tensor& fu, const Tensor& fp, const AffParams& p);

struct AffGrads {
    Tensor fu, fp;
    ConvWB local1, local2, global1, global2;
    BnWB local_norm, global_norm;
};

AffGrads aff_backward(const Tensor& fu, const Tensor& fp, const AffParams& p,
                      const Tensor& grad_fused);

// ---------------------------------------------------------------------------
// Two-stream encoder / bottleneck / cascaded decoder for the removal net.
// ---------------------------------------------------------------------------

// Dilated 3x3 pyramid with a residual 1x1 projection:
// out = x + proj(relu(d1(x) + d2(x) + d4(x))).
struct SaParams {
    int channels = 0;
    Conv2d d1, d2, d4; // 3x3, dilations 1/2/4, padding = dilation
    Conv2d proj;       // 1x1
};

struct DecodeStage {
    Conv2d conv1, conv2; // 3x3 pad 1, relu after each
};

inline constexpr std::array<int, 4> kEncoderWidths = {16, 32, 64, 128};
inline constexpr std::array<int, 4> kPenumbraDilations = {1, 2, 4, 8};

struct PcdsParams {
    // Stage 1 of each stream consumes the 4-channel [image, mask] concat;
    // every stage downsamples by 2 (stride-2 3x3, penumbra stream dilated).
    std::array<Conv2d, 4> umbra;
    std::array<Conv2d, 4> penumbra;
    std::array<AffParams, 4> fuse; // one per encoder level
    SaParams sa;                   // on the deepest fusion
    std::array<DecodeStage, 4> decode;
    Conv2d head;                   // 3x3 -> 3 channels, then sigmoid
};

PcdsParams make_pcds(std::uint64_t seed);

enum class Stream { umbra, penumbra };

// Returns the four per-stage features, spatial dims halving each stage.
// Input H and W must be multiples of 16.
std::array<Tensor, 4> encoder_forward(const Tensor& image, const Tensor& mask,
                                      const PcdsParams& p, Stream stream);

// Backpropagates per-stage gradients to the 4-channel input concat.
Tensor encoder_backward(const Tensor& image, const Tensor& mask, const PcdsParams& p,
                        Stream stream, const std::array<Tensor, 4>& stage_grads);

Tensor sa_forward(const Tensor& x, const SaParams& p);

struct SaGrads {
    Tensor x;
    ConvWB d1, d2, d4, proj;
};

SaGrads sa_backward(const Tensor& x, const SaParams& p, const Tensor& grad_out);

// Decoder stage k concatenates the running feature with fusion level 5-k at
// the current resolution, refines with two 3x3 convs + relu, then upsamples
// by 2; after four stages the head conv + sigmoid emits a 3-channel image at
// the input resolution.
Tensor cascade_decode(const Tensor& fsem, const std::array<Tensor, 4>& fusions,
                      const PcdsParams& p);

struct DecodeGrads {
    Tensor fsem;
    std::array<Tensor, 4> fusions;
};

DecodeGrads cascade_decode_backward(const Tensor& fsem, const std::array<Tensor, 4>& fusions,
                                    const PcdsParams& p, const Tensor& grad_out);

// Tensor-level composition (mask channels already split into umbra and
// penumbra). pcds_input_grad returns the gradient of the scalar
// sum(grad_out . output) with respect to the input image tensor, i.e. the
// two streams' image-channel gradients combined.
Tensor pcds_apply(const Tensor& image, const Tensor& umbra_mask, const Tensor& penumbra_mask,
                  const PcdsParams& p);
Tensor pcds_input_grad(const Tensor& image, const Tensor& umbra_mask,
                       const Tensor& penumbra_mask, const PcdsParams& p,
                       const Tensor& grad_out);

// Image-level entry: derives umbra/penumbra masks from the hard input mask
// by erosion/dilation with split_radius, then runs the full network.
Image pcds_forward(const Image& image, const Mask& mask, const PcdsParams& p, int split_radius);

// ---------------------------------------------------------------------------
// Patch scorer: 3 stride-2 conv+relu layers and a 1x1 head producing one
// unbounded score per ~8x8 patch (least-squares adversarial form).
// ---------------------------------------------------------------------------

struct PatchScorerParams {
    Conv2d conv1, conv2, conv3; // 3->16->32->64, stride 2, 3x3 pad 1
    Conv2d head;                // 1x1, 64 -> 1
};

PatchScorerParams make_patch_scorer(std::uint64_t seed);

// Output spatial dims are ceil(H/8) x ceil(W/8); input must be >= 16x16.
Tensor patch_score(const Tensor& x, const PatchScorerParams& p);

// ---------------------------------------------------------------------------
// Image <-> tensor bridging and parameter serialization.
// ---------------------------------------------------------------------------

Tensor image_to_tensor(const Image& image);  // (1,3,H,W)
Tensor mask_to_tensor(const Mask& mask);     // (1,1,H,W)
Image tensor_to_image(const Tensor& t);      // requires (1,3,H,W)

ParamMap collect_params(const SdcaParams& p);
void restore_params(SdcaParams& p, const ParamMap& m);
ParamMap collect_params(const AffParams& p);
void restore_params(AffParams& p, const ParamMap& m);
ParamMap collect_params(const PcdsParams& p);
void restore_params(PcdsParams& p, const ParamMap& m);

}  // namespace shadowlab
