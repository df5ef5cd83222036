#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoptic/tensor.hpp"

namespace pk {

namespace detail {

struct ImageU8 {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<unsigned char> pixels;  // row-major, interleaved
};

struct PngRead {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWrite {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline ImageU8 read_png(const std::string& path, int want_color_type, const char* what) {
    PngRead ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error(std::string(what) + ": cannot open " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error(std::string(what) + ": libpng allocation failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error(std::string(what) + ": corrupt PNG data in " + path);

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);
    const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    const int color_type = png_get_color_type(ctx.png, ctx.info);
    if (bit_depth != 8)
        throw std::runtime_error(std::string(what) + ": " + path + " has bit depth " + std::to_string(bit_depth) +
                                 ", expected 8");
    if (color_type != want_color_type)
        throw std::runtime_error(std::string(what) + ": " + path + " has PNG color type " +
                                 std::to_string(color_type) + ", expected " + std::to_string(want_color_type));

    ImageU8 img;
    img.h = int(png_get_image_height(ctx.png, ctx.info));
    img.w = int(png_get_image_width(ctx.png, ctx.info));
    img.channels = want_color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    png_set_interlace_handling(ctx.png);
    png_read_update_info(ctx.png, ctx.info);
    img.pixels.resize(std::size_t(img.h) * img.w * img.channels);
    std::vector<png_bytep> rows(img.h);
    for (int i = 0; i < img.h; ++i) rows[i] = img.pixels.data() + std::size_t(i) * img.w * img.channels;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
    return img;
}

inline void write_png(const std::string& path, const ImageU8& img, const char* what) {
    PngWrite ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error(std::string(what) + ": cannot open " + path + " for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error(std::string(what) + ": libpng allocation failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error(std::string(what) + ": failed writing " + path);

    png_init_io(ctx.png, ctx.fp);
    const int color_type = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(ctx.png, ctx.info, png_uint_32(img.w), png_uint_32(img.h), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(img.h);
    for (int i = 0; i < img.h; ++i)
        rows[i] = const_cast<png_bytep>(img.pixels.data() + std::size_t(i) * img.w * img.channels);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

}  // namespace detail

/// Panoptic maps travel as 8-bit RGB PNGs with id = R + 256*G + 65536*B,
/// the COCO panoptic convention. Lossless for ids below 2^24.
inline PanopticMap read_panoptic_png(const std::string& path) {
    const detail::ImageU8 img = detail::read_png(path, PNG_COLOR_TYPE_RGB, "read_panoptic_png");
    PanopticMap map(img.h, img.w);
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j) {
            const unsigned char* px = &img.pixels[(std::size_t(i) * img.w + j) * 3];
            map.at(i, j) = std::uint32_t(px[0]) + 256u * px[1] + 65536u * px[2];
        }
    return map;
}

inline void write_panoptic_png(const PanopticMap& map, const std::string& path) {
    detail::ImageU8 img;
    img.h = map.height();
    img.w = map.width();
    img.channels = 3;
    img.pixels.resize(std::size_t(img.h) * img.w * 3);
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j) {
            const std::uint32_t id = map.at(i, j);
            if (id >= (1u << 24))
                throw std::runtime_error("write_panoptic_png: id " + std::to_string(id) + " at row " +
                                         std::to_string(i) + " col " + std::to_string(j) + " exceeds 24 bits");
            unsigned char* px = &img.pixels[(std::size_t(i) * img.w + j) * 3];
            px[0] = id & 0xFF;
            px[1] = (id >> 8) & 0xFF;
            px[2] = (id >> 16) & 0xFF;
        }
    detail::write_png(path, img, "write_panoptic_png");
}

/// Semantic maps travel as 8-bit grayscale PNGs, pixel value == class index.
inline SemanticMap read_semantic_png(const std::string& path, int num_classes) {
    if (num_classes < 1 || num_classes > 256)
        throw std::invalid_argument("read_semantic_png: class count must be in [1,256]");
    const detail::ImageU8 img = detail::read_png(path, PNG_COLOR_TYPE_GRAY, "read_semantic_png");
    SemanticMap map(img.h, img.w);
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j) {
            const int value = img.pixels[std::size_t(i) * img.w + j];
            if (value >= num_classes)
                throw std::domain_error("read_semantic_png: class " + std::to_string(value) + " at row " +
                                        std::to_string(i) + " col " + std::to_string(j) + " outside [0," +
                                        std::to_string(num_classes) + ")");
            map.at(i, j) = value;
        }
    return map;
}

inline void write_semantic_png(const SemanticMap& map, const std::string& path) {
    detail::ImageU8 img;
    img.h = map.height();
    img.w = map.width();
    img.channels = 1;
    img.pixels.resize(std::size_t(img.h) * img.w);
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j) {
            const std::int32_t cls = map.at(i, j);
            if (cls < 0 || cls > 255)
                throw std::runtime_error("write_semantic_png: class " + std::to_string(cls) + " at row " +
                                         std::to_string(i) + " not representable in 8 bits");
            img.pixels[std::size_t(i) * img.w + j] = (unsigned char)(cls);
        }
    detail::write_png(path, img, "write_semantic_png");
}

/// Quantize a (1, 3, H, W) tensor in [-1, 1] to an 8-bit RGB PNG:
/// v -> round((v+1)/2 * 255) with round-half-up, clamped to [0, 255].
template <typename T>
void write_image_png(const Tensor<T>& x, const std::string& path) {
    if (x.n() != 1 || x.c() != 3)
        throw std::invalid_argument("write_image_png: expected (1,3,H,W) tensor, got " + x.shape_string());
    detail::ImageU8 img;
    img.h = x.h();
    img.w = x.w();
    img.channels = 3;
    img.pixels.resize(std::size_t(img.h) * img.w * 3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < img.h; ++i)
            for (int j = 0; j < img.w; ++j) {
                const double v = double(x(0, c, i, j));
                if (!std::isfinite(v))
                    throw std::runtime_error("write_image_png: non-finite value at channel " + std::to_string(c) +
                                             " row " + std::to_string(i) + " col " + std::to_string(j));
                double q = std::floor((v + 1.0) / 2.0 * 255.0 + 0.5);
                q = q < 0.0 ? 0.0 : (q > 255.0 ? 255.0 : q);
                img.pixels[(std::size_t(i) * img.w + j) * 3 + c] = (unsigned char)(q);
            }
    detail::write_png(path, img, "write_image_png");
}

/// Text tensor fixture: header "tensor <n> <c> <h> <w>", then the values in
/// row-major order with 17 significant digits, which round-trips doubles
/// exactly.
template <typename T>
void write_tensor_fixture(const Tensor<T>& x, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_tensor_fixture: cannot open " + path + " for writing");
    out << "tensor " << x.n() << " " << x.c() << " " << x.h() << " " << x.w() << "\n";
    char buf[40];
    const T* d = x.data();
    const std::size_t row = std::size_t(x.w());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", double(d[i]));
        out << buf << ((i + 1) % row == 0 ? '\n' : ' ');
    }
    if (!out) throw std::runtime_error("write_tensor_fixture: write to " + path + " failed");
}

template <typename T = double>
Tensor<T> read_tensor_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_tensor_fixture: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "tensor")
        throw std::runtime_error("read_tensor_fixture: " + path + ": expected 'tensor' header, got '" + magic + "'");
    int n = 0, c = 0, h = 0, w = 0;
    if (!(in >> n >> c >> h >> w) || n <= 0 || c <= 0 || h <= 0 || w <= 0)
        throw std::runtime_error("read_tensor_fixture: " + path + ": malformed shape header");
    Tensor<T> x(n, c, h, w);
    T* d = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        double value = 0.0;
        if (!(in >> value))
            throw std::runtime_error("read_tensor_fixture: " + path + ": failed parsing value " + std::to_string(i) +
                                     " of " + std::to_string(x.size()) + " near byte offset " +
                                     std::to_string(long(in.tellg())));
        d[i] = T(value);
    }
    std::string trailing;
    if (in >> trailing)
        throw std::runtime_error("read_tensor_fixture: " + path + ": trailing data '" + trailing + "' after " +
                                 std::to_string(x.size()) + " values");
    return x;
}

}  // namespace pk
