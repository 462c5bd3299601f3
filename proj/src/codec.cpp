#include "fvita/codec.hpp"

#include <cmath>

#include "fvita/errors.hpp"
#include "fvita/io_util.hpp"

namespace fvita {

using nn::Graph;
using nn::Var;

Tensor image_to_tensor(const Image& img) {
    Image rgb = img.channels == 1 ? replicate_channels(img, 3) : img;
    Tensor t({1, 3, rgb.height, rgb.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < rgb.height; ++y)
            for (int x = 0; x < rgb.width; ++x)
                t[(int64_t(c) * rgb.height + y) * rgb.width + x] =
                    rgb.at(y, x, c);
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.ndim() != 4 || t.dim(0) != 1)
        throw ArgumentError("tensor_to_image: expected [1,C,H,W]");
    int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    if (c != 1 && c != 3)
        throw ArgumentError("tensor_to_image: expected 1 or 3 channels");
    Image img(h, w, c);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(y, x, ci) = t[(int64_t(ci) * h + y) * w + x];
    return img;
}

LatentCodec::LatentCodec(nn::ParamStore& ps) {
    enc1_ = nn::Conv2d::create(ps, "codec.enc1", 3, 32, 3, 1, 1);
    enc2_ = nn::Conv2d::create(ps, "codec.enc2", 32, 48, 3, 2, 1);
    enc3_ = nn::Conv2d::create(ps, "codec.enc3", 48, 64, 3, 2, 1);
    enc4_ = nn::Conv2d::create(ps, "codec.enc4", 64, 48, 3, 1, 1);
    enc5_ = nn::Conv2d::create(ps, "codec.enc5", 48, kLatentChannels, 1, 1, 0);
    dec1_ = nn::Conv2d::create(ps, "codec.dec1", kLatentChannels, 64, 3, 1, 1);
    dec2_ = nn::Conv2d::create(ps, "codec.dec2", 64, 32, 3, 1, 1);
    dec3_ = nn::Conv2d::create(ps, "codec.dec3", 32, 16, 3, 1, 1);
    dec4_ = nn::Conv2d::create(ps, "codec.dec4", 16, 3, 3, 1, 1);
}

Var LatentCodec::encode(Graph& g, const Var& x) const {
    if (x->value.ndim() != 4 || x->value.dim(1) != 3)
        throw ArgumentError("codec.encode: expected [N,3,H,W]");
    if (x->value.dim(2) % kDownsample != 0 || x->value.dim(3) % kDownsample != 0)
        throw ArgumentError("codec.encode: image size must be divisible by 4");
    Var h1 = nn::silu(g, enc1_(g, x));
    Var h2 = nn::silu(g, enc2_(g, h1));
    Var h3 = nn::silu(g, enc3_(g, h2));
    Var h4 = nn::silu(g, enc4_(g, h3));
    return enc5_(g, h4);
}

Var LatentCodec::decode(Graph& g, const Var& z) const {
    if (z->value.ndim() != 4 || z->value.dim(1) != kLatentChannels)
        throw ArgumentError("codec.decode: expected [N,4,h,w]");
    Var h = nn::silu(g, dec1_(g, z));
    h = nn::silu(g, dec2_(g, nn::upsample_nearest2(g, h)));
    h = nn::silu(g, dec3_(g, nn::upsample_nearest2(g, h)));
    return nn::sigmoid_op(g, dec4_(g, h));
}

Tensor LatentCodec::encode_image(const Image& img) const {
    Graph g(false);
    return encode(g, g.constant(image_to_tensor(img)))->value;
}

Image LatentCodec::decode_latent(const Tensor& z) const {
    Graph g(false);
    return tensor_to_image(decode(g, g.constant(z))->value);
}

std::vector<Tensor> LatentCodec::encoder_features(const Image& img) const {
    Graph g(false);
    Var x = g.constant(image_to_tensor(img));
    Var h1 = nn::silu(g, enc1_(g, x));
    Var h2 = nn::silu(g, enc2_(g, h1));
    Var h3 = nn::silu(g, enc3_(g, h2));
    return {h1->value, h2->value, h3->value};
}

Tensor LatentCodec::pooled_feature(const Image& img) const {
    auto taps = encoder_features(img);
    Tensor out({feature_dim()});
    int offset = 0;
    for (const auto& tap : taps) {
        int c = tap.dim(1);
        int64_t hw = int64_t(tap.dim(2)) * tap.dim(3);
        for (int ci = 0; ci < c; ++ci) {
            const double* src = tap.data() + int64_t(ci) * hw;
            double acc = 0.0;
            for (int64_t p = 0; p < hw; ++p) acc += src[p];
            out[offset + ci] = acc / double(hw);
        }
        offset += c;
    }
    return out;
}

int LatentCodec::feature_dim() const { return 32 + 48 + 64; }

std::string LatentCodec::version() const {
    // Hash the encoder weights so reports pin the exact extractor.
    uint64_t h = 1469598103934665603ULL;
    for (const nn::Conv2d* conv : {&enc1_, &enc2_, &enc3_, &enc4_, &enc5_}) {
        h ^= fnv1a64_bytes(conv->w->value.data(),
                           size_t(conv->w->value.size()) * sizeof(double));
        h *= 1099511628211ULL;
        h ^= fnv1a64_bytes(conv->b->value.data(),
                           size_t(conv->b->value.size()) * sizeof(double));
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "codec-v1:%016llx",
                  (unsigned long long)h);
    return buf;
}

}  // namespace fvita
