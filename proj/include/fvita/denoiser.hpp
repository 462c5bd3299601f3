#pragma once

#include <memory>
#include <vector>

#include "fvita/conditioning.hpp"
#include "fvita/nn/modules.hpp"

namespace fvita {

struct DenoiserConfig {
    int base_channels = 64;
    std::vector<int> channel_mults = {1, 2, 4};
    std::vector<int> attention_resolutions = {8, 4};
    int heads = 4;
    int head_dim = 32;
    int time_embed_dim = 128;  // sinusoidal width (also the MLP width)
    int latent_channels = 4;
    int d_model = 128;  // cross-attention K/V width
    int groups = 8;

    void validate() const;
};

// Cross-attention conditioned U-Net over latents. The input is the noisy IR
// latent channel-concatenated with the visible latent ([N, 2c, h, w]); K/V
// come from each sample's conditioning bundle, queries from feature maps.
class Denoiser {
  public:
    Denoiser(nn::ParamStore& ps, const DenoiserConfig& cfg, int latent_size);

    const DenoiserConfig& config() const { return cfg_; }
    int latent_size() const { return latent_size_; }

    // z_and_vis: [N, 2c, h, w]; timesteps: per-sample integer t; bundles:
    // per-sample conditioning. Returns eps prediction [N, c, h, w].
    nn::Var forward(nn::Graph& g, const nn::Var& z_and_vis,
                    const std::vector<int>& timesteps,
                    const std::vector<BundleVar>& bundles) const;

  private:
    struct ResBlock;
    struct AttnBlock;
    struct Level;

    nn::Var time_embedding(nn::Graph& g, const std::vector<int>& ts) const;

    DenoiserConfig cfg_;
    int latent_size_;

    nn::Linear time_fc1_, time_fc2_;
    nn::Conv2d stem_;
    std::vector<std::shared_ptr<ResBlock>> down_res_;
    std::vector<std::shared_ptr<AttnBlock>> down_attn_;   // null if absent
    std::vector<nn::Conv2d> downsample_;
    std::shared_ptr<ResBlock> mid_res1_, mid_res2_;
    std::shared_ptr<AttnBlock> mid_attn_;
    std::vector<std::shared_ptr<ResBlock>> up_res_;
    std::vector<std::shared_ptr<AttnBlock>> up_attn_;
    std::vector<nn::Conv2d> upsample_conv_;
    nn::GroupNorm out_norm_;
    nn::Conv2d out_conv_;
};

}  // namespace fvita
