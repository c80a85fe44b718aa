#pragma once

#include <string>

#include "shadowlab/image.hpp"

namespace shadowlab {

/// Decode an 8- or 16-bit RGB/RGBA/grayscale PNG. Integer samples map to
/// [0, 1] by dividing by the bit-depth maximum; alpha is dropped and
/// grayscale is broadcast to three channels. Throws std::runtime_error on
/// unreadable files and unsupported color types.
Image load_image_png(const std::string& path);

/// Encode as 8-bit RGB. Channels are clamped to [0, 1] and quantized with
/// round-half-up, so load(save(x)) differs from x by at most 1/510 per
/// channel.
void save_image_png(const Image& image, const std::string& path);

/// Masks travel as 8-bit grayscale PNG with 255 = shadow. Loading returns
/// the continuous [0, 1] values of the first channel.
Mask load_mask_png(const std::string& path);

/// Hard-mask variant: sample values >= 128 become 1, the rest 0.
Mask load_hard_mask_png(const std::string& path);

void save_mask_png(const Mask& mask, const std::string& path);

}  // namespace shadowlab
