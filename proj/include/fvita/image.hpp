#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fvita {

// H x W x C image with values in [0,1], interleaved channels, row-major.
// C is 3 (RGB) or 1 (grayscale) everywhere in this project.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c) {
        data.assign(size_t(h) * w * c, 0.0);
    }

    double& at(int y, int x, int c) {
        return data[(size_t(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(size_t(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// ITU-R BT.601 luminance; identity for single-channel images.
Image to_luminance(const Image& img);

// Replicates a grayscale image to n channels (used to feed 1-channel IR
// frames through the 3-channel codec).
Image replicate_channels(const Image& img, int channels);

Image clamp01(Image img);

// Separable gaussian blur with reflected borders (metrics tests use this to
// build degradation ladders).
Image gaussian_blur(const Image& img, double sigma);

// 8-bit PNG I/O. Quantization contract: round(value*255) on write, /255 on
// read. write_png accepts 1- or 3-channel images; read returns whatever the
// file holds (palette/alpha are rejected).
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

double mean_abs_diff(const Image& a, const Image& b);
double rmse(const Image& a, const Image& b);

}  // namespace fvita
