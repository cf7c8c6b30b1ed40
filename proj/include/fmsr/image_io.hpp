#pragma once

#include <png.h>

#include <cstdio>
#include <memory>

#include "tensor.hpp"

namespace fmsr {

/// 8-bit RGB image, row-major HWC.
struct ImageU8 {
    i64 height = 0;
    i64 width = 0;
    std::vector<unsigned char> pixels;  // height*width*3
    std::string source;

    unsigned char& at(i64 i, i64 j, i64 c) {
        return pixels[static_cast<size_t>((i * width + j) * 3 + c)];
    }
    unsigned char at(i64 i, i64 j, i64 c) const {
        return pixels[static_cast<size_t>((i * width + j) * 3 + c)];
    }
};

inline ImageU8 load_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw io_error("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw io_error("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw io_error("failed to decode " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    ImageU8 img;
    img.height = static_cast<i64>(h);
    img.width = static_cast<i64>(w);
    img.source = path;
    img.pixels.resize(static_cast<size_t>(img.height * img.width * 3));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 i = 0; i < h; ++i) rows[i] = img.pixels.data() + static_cast<size_t>(i) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

inline void save_png(const ImageU8& img, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw io_error("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw io_error("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw io_error("failed to encode " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_const_bytep> rows(static_cast<size_t>(img.height));
    for (i64 i = 0; i < img.height; ++i)
        rows[static_cast<size_t>(i)] = img.pixels.data() + static_cast<size_t>(i * img.width * 3);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

/// u8 -> [0,1] float tensor [3,H,W]
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
    Tensor<T> out({3, img.height, img.width});
    for (i64 i = 0; i < img.height; ++i)
        for (i64 j = 0; j < img.width; ++j)
            for (i64 c = 0; c < 3; ++c)
                out(c, i, j) = static_cast<T>(img.at(i, j, c)) / T(255);
    return out;
}

/// x*255 with round-half-away-from-zero, clamped to [0,255]
inline unsigned char quantize_u8(double v) {
    double r = std::round(v * 255.0);
    if (r < 0.0) r = 0.0;
    if (r > 255.0) r = 255.0;
    return static_cast<unsigned char>(r);
}

template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
    check_shape(t.rank() == 3 && t.dim(0) == 3, "tensor_to_image: want [3,H,W]");
    ImageU8 img;
    img.height = t.dim(1);
    img.width = t.dim(2);
    img.pixels.resize(static_cast<size_t>(img.height * img.width * 3));
    for (i64 i = 0; i < img.height; ++i)
        for (i64 j = 0; j < img.width; ++j)
            for (i64 c = 0; c < 3; ++c)
                img.at(i, j, c) = quantize_u8(static_cast<double>(t(c, i, j)));
    return img;
}

}  // namespace fmsr
