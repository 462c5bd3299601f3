#include "fvita/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fvita/errors.hpp"
#include "fvita/io_util.hpp"

namespace fvita {

Image to_luminance(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3)
        throw ArgumentError("to_luminance: expected 1 or 3 channels, got " +
                            std::to_string(img.channels));
    Image out(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(y, x, 0) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                              0.114 * img.at(y, x, 2);
    return out;
}

Image replicate_channels(const Image& img, int channels) {
    if (img.channels == channels) return img;
    if (img.channels != 1)
        throw ArgumentError("replicate_channels: source must be single-channel");
    Image out(img.height, img.width, channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c) out.at(y, x, c) = img.at(y, x, 0);
    return out;
}

Image clamp01(Image img) {
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) return img;
    int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[size_t(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[size_t(i + radius)];
    }
    for (double& v : k) v /= sum;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - i - 1;
        }
        return i;
    };

    Image tmp(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[size_t(i + radius)] *
                           img.at(y, reflect(x + i, img.width), c);
                tmp.at(y, x, c) = acc;
            }
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[size_t(i + radius)] *
                           tmp.at(reflect(y + i, img.height), x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

namespace {

struct PngWriteCtx {
    std::string bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
    ctx->bytes.append(reinterpret_cast<const char*>(data), len);
}

void png_flush_cb(png_structp) {}

struct PngReadCtx {
    const unsigned char* data;
    size_t size;
    size_t pos;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + len > ctx->size) png_error(png, "read past end of PNG data");
    std::copy(ctx->data + ctx->pos, ctx->data + ctx->pos + len, out);
    ctx->pos += len;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ArgumentError("write_png: only 1- or 3-channel images supported");
    if (img.height <= 0 || img.width <= 0)
        throw ArgumentError("write_png: empty image");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    if (!png) throw IoError("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("write_png: png_create_info_struct failed");
    }

    PngWriteCtx ctx;
    std::vector<unsigned char> rowbuf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng failure for " + path);
    }
    png_set_write_fn(png, &ctx, png_write_cb, png_flush_cb);

    int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    rowbuf.resize(size_t(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
                rowbuf[size_t(x) * img.channels + c] =
                    (unsigned char)std::lround(v * 255.0);
            }
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);

    atomic_write_file(path, ctx.bytes);
}

Image read_png(const std::string& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < 8 ||
        png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
        throw ParseError("read_png: not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    if (!png) throw IoError("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("read_png: png_create_info_struct failed");
    }

    PngReadCtx ctx{reinterpret_cast<const unsigned char*>(bytes.data()),
                   bytes.size(), 0};
    std::vector<png_bytep> rows;
    std::vector<unsigned char> raster;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("read_png: corrupt PNG: " + path);
    }
    png_set_read_fn(png, &ctx, png_read_cb);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = int(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("read_png: unsupported channel count in " + path);
    }

    raster.resize(size_t(w) * h * channels);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = raster.data() + size_t(y) * w * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(int(h), int(w), channels);
    for (size_t i = 0; i < raster.size(); ++i)
        img.data[i] = double(raster[i]) / 255.0;
    return img;
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ArgumentError("mean_abs_diff: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        acc += std::abs(a.data[i] - b.data[i]);
    return acc / double(a.data.size());
}

double rmse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ArgumentError("rmse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / double(a.data.size()));
}

}  // namespace fvita
