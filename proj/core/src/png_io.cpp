#include "shadowlab/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace shadowlab {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("png: " + path + ": " + what);
}

int quantize8(double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<int>(std::floor(v * 255.0 + 0.5));  // round half up
}

}  // namespace

Image load_image_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail(path, "cannot open for reading");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> raw;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "decode error");
    }

    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (width == 0 || height == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "zero dimension");
    }
    if (bit_depth != 8 && bit_depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported bit depth " + std::to_string(bit_depth));
    }
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_GRAY_ALPHA &&
        color_type != PNG_COLOR_TYPE_RGB && color_type != PNG_COLOR_TYPE_RGB_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported color type");
    }

    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    raw.resize(row_bytes * height);
    row_ptrs.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = raw.data() + y * row_bytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image out(static_cast<int>(width), static_cast<int>(height));
    const double denom = bit_depth == 16 ? 65535.0 : 255.0;
    for (png_uint_32 y = 0; y < height; ++y) {
        const png_byte* row = raw.data() + y * row_bytes;
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                unsigned v;
                if (bit_depth == 16) {
                    // PNG stores 16-bit samples big endian.
                    const png_byte* s = row + (x * 3 + c) * 2;
                    v = (static_cast<unsigned>(s[0]) << 8) | s[1];
                } else {
                    v = row[x * 3 + c];
                }
                out.at(static_cast<int>(x), static_cast<int>(y), c) = v / denom;
            }
        }
    }
    return out;
}

void save_image_png(const Image& image, const std::string& path) {
    if (image.width <= 0 || image.height <= 0) fail(path, "zero dimension");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    std::vector<png_byte> raw;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "encode error");
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    raw.resize(static_cast<std::size_t>(image.width) * image.height * 3);
    row_ptrs.resize(image.height);
    for (int y = 0; y < image.height; ++y) {
        png_byte* row = raw.data() + static_cast<std::size_t>(y) * image.width * 3;
        row_ptrs[y] = row;
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[x * 3 + c] = static_cast<png_byte>(quantize8(image.at(x, y, c)));
    }
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Mask load_mask_png(const std::string& path) {
    const Image img = load_image_png(path);
    Mask out(img.width, img.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = img.data[3 * i];
    return out;
}

Mask load_hard_mask_png(const std::string& path) {
    Mask m = load_mask_png(path);
    // 128/255 is the first 8-bit level at or above one half.
    for (double& v : m.data) v = v >= 0.5 ? 1.0 : 0.0;
    return m;
}

void save_mask_png(const Mask& mask, const std::string& path) {
    if (mask.width <= 0 || mask.height <= 0) fail(path, "zero dimension");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    std::vector<png_byte> raw;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "encode error");
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    raw.resize(static_cast<std::size_t>(mask.width) * mask.height);
    row_ptrs.resize(mask.height);
    for (int y = 0; y < mask.height; ++y) {
        png_byte* row = raw.data() + static_cast<std::size_t>(y) * mask.width;
        row_ptrs[y] = row;
        for (int x = 0; x < mask.width; ++x)
            row[x] = static_cast<png_byte>(quantize8(mask.at(x, y)));
    }
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace shadowlab
