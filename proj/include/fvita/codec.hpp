#pragma once

#include <string>
#include <vector>

#include "fvita/image.hpp"
#include "fvita/nn/modules.hpp"

namespace fvita {

// Image <-> NCHW tensor conversion ([0,1] doubles; grayscale replicated).
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);  // [1,3,H,W] or [1,1,H,W]

// Small convolutional autoencoder: 4x spatial downsample, 4 latent channels.
// Pretrained once on synthetic visible+IR images, then frozen; the encoder
// doubles as the feature extractor for the perceptual/FID metrics.
class LatentCodec {
  public:
    static constexpr int kLatentChannels = 4;
    static constexpr int kDownsample = 4;

    explicit LatentCodec(nn::ParamStore& ps);

    // x: [N,3,H,W] -> [N,4,H/4,W/4]
    nn::Var encode(nn::Graph& g, const nn::Var& x) const;
    // z: [N,4,h,w] -> [N,3,4h,4w], values in (0,1) via sigmoid
    nn::Var decode(nn::Graph& g, const nn::Var& z) const;

    // No-grad conveniences on plain images.
    Tensor encode_image(const Image& img) const;    // [1,4,h,w]
    Image decode_latent(const Tensor& z) const;     // H x W x 3

    // Encoder activations after each stage (3 taps), used by the metrics
    // module as the LPIPS-analog layers.
    std::vector<Tensor> encoder_features(const Image& img) const;
    // Spatially pooled concatenation of the taps (FID feature vector).
    Tensor pooled_feature(const Image& img) const;
    int feature_dim() const;

    // Version string derived from the (frozen) encoder weights; recorded in
    // every metric report.
    std::string version() const;

    // Scale applied to latents before diffusion so they are roughly
    // unit-variance; fixed at pretraining time and stored in checkpoints.
    double latent_scale = 1.0;

  private:
    nn::Conv2d enc1_, enc2_, enc3_, enc4_, enc5_;
    nn::Conv2d dec1_, dec2_, dec3_, dec4_;
};

}  // namespace fvita
