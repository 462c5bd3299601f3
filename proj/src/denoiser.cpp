#include "fvita/denoiser.hpp"

#include "fvita/errors.hpp"

namespace fvita {

using nn::Graph;
using nn::ParamStore;
using nn::Var;

void DenoiserConfig::validate() const {
    if (base_channels <= 0 || channel_mults.empty())
        throw ConfigError("denoiser: invalid channel layout");
    if (heads * head_dim != d_model)
        throw ConfigError("denoiser: heads * head_dim must equal d_model");
    for (int ch : channel_mults)
        if (ch <= 0) throw ConfigError("denoiser: channel mult must be > 0");
    for (int m : channel_mults)
        if ((base_channels * m) % groups != 0)
            throw ConfigError("denoiser: channels must divide into norm groups");
    if (attention_resolutions.empty())
        throw ConfigError("denoiser: at least one attention resolution needed");
}

struct Denoiser::ResBlock {
    nn::GroupNorm gn1, gn2;
    nn::Conv2d conv1, conv2;
    nn::Linear temb;
    nn::Conv2d skip;  // 1x1, only when cin != cout
    bool has_skip = false;

    ResBlock(ParamStore& ps, const std::string& name, int cin, int cout,
             int time_dim, int groups) {
        gn1 = nn::GroupNorm::create(ps, name + ".gn1", cin, groups);
        conv1 = nn::Conv2d::create(ps, name + ".conv1", cin, cout, 3, 1, 1);
        temb = nn::Linear::create(ps, name + ".temb", time_dim, cout);
        gn2 = nn::GroupNorm::create(ps, name + ".gn2", cout, groups);
        conv2 = nn::Conv2d::create(ps, name + ".conv2", cout, cout, 3, 1, 1,
                                   /*zero_init=*/true);
        if (cin != cout) {
            skip = nn::Conv2d::create(ps, name + ".skip", cin, cout, 1, 1, 0);
            has_skip = true;
        }
    }

    Var forward(Graph& g, const Var& x, const Var& temb_act) const {
        Var h = conv1(g, nn::silu(g, gn1(g, x)));
        h = nn::add_channel_bias(g, h, temb(g, temb_act));
        h = conv2(g, nn::silu(g, gn2(g, h)));
        Var residual = has_skip ? skip(g, x) : x;
        return nn::add(g, h, residual);
    }
};

struct Denoiser::AttnBlock {
    nn::GroupNorm gn;
    nn::Linear q, k, v, out;
    int heads;

    AttnBlock(ParamStore& ps, const std::string& name, int channels,
              int d_model, int n_heads, int groups)
        : heads(n_heads) {
        gn = nn::GroupNorm::create(ps, name + ".gn", channels, groups);
        q = nn::Linear::create(ps, name + ".q", channels, d_model);
        k = nn::Linear::create(ps, name + ".k", d_model, d_model);
        v = nn::Linear::create(ps, name + ".v", d_model, d_model);
        out = nn::Linear::create(ps, name + ".out", d_model, channels,
                                 /*zero_init=*/true);
    }

    Var forward(Graph& g, const Var& x,
                const std::vector<BundleVar>& bundles) const {
        const int n = x->value.dim(0);
        const int c = x->value.dim(1);
        const int h = x->value.dim(2), w = x->value.dim(3);
        if (int(bundles.size()) != n)
            throw ArgumentError("attention: bundle count != batch size");
        Var normed = gn(g, x);
        std::vector<Var> outs;
        outs.reserve(size_t(n));
        for (int i = 0; i < n; ++i) {
            Var tokens = nn::to_tokens(g, nn::slice_batch(g, normed, i));
            Var qi = q(g, tokens);
            Var ki = k(g, bundles[size_t(i)].tokens);
            Var vi = v(g, bundles[size_t(i)].tokens);
            Var attended = nn::multihead_attention(g, qi, ki, vi,
                                                   bundles[size_t(i)].active,
                                                   heads);
            outs.push_back(nn::from_tokens(g, out(g, attended), c, h, w));
        }
        return nn::add(g, x, nn::stack_batch(g, outs));
    }
};

struct Denoiser::Level {};

Denoiser::Denoiser(ParamStore& ps, const DenoiserConfig& cfg, int latent_size)
    : cfg_(cfg), latent_size_(latent_size) {
    cfg_.validate();
    const int levels = int(cfg.channel_mults.size());
    int res = latent_size;
    for (int i = 1; i < levels; ++i) res /= 2;
    if (res < 2)
        throw ConfigError("denoiser: latent too small for channel_mults");

    auto wants_attention = [&](int resolution) {
        for (int r : cfg.attention_resolutions)
            if (r == resolution) return true;
        return false;
    };

    const int tdim = cfg.time_embed_dim;
    time_fc1_ = nn::Linear::create(ps, "denoiser.time.fc1", tdim, tdim);
    time_fc2_ = nn::Linear::create(ps, "denoiser.time.fc2", tdim, tdim);
    stem_ = nn::Conv2d::create(ps, "denoiser.stem", 2 * cfg.latent_channels,
                               cfg.base_channels, 3, 1, 1);

    int ch = cfg.base_channels;
    int cur_res = latent_size;
    bool attention_attached = false;
    for (int i = 0; i < levels; ++i) {
        int out_ch = cfg.base_channels * cfg.channel_mults[size_t(i)];
        std::string base = "denoiser.down" + std::to_string(i);
        down_res_.push_back(
            std::make_shared<ResBlock>(ps, base + ".res", ch, out_ch, tdim,
                                       cfg.groups));
        ch = out_ch;
        if (wants_attention(cur_res)) {
            down_attn_.push_back(std::make_shared<AttnBlock>(
                ps, base + ".attn", ch, cfg.d_model, cfg.heads, cfg.groups));
            attention_attached = true;
        } else {
            down_attn_.push_back(nullptr);
        }
        if (i + 1 < levels) {
            int next_ch = cfg.base_channels * cfg.channel_mults[size_t(i + 1)];
            downsample_.push_back(nn::Conv2d::create(
                ps, base + ".down", ch, next_ch, 3, 2, 1));
            ch = next_ch;
            cur_res /= 2;
        }
    }

    mid_res1_ = std::make_shared<ResBlock>(ps, "denoiser.mid.res1", ch, ch,
                                           tdim, cfg.groups);
    mid_attn_ = std::make_shared<AttnBlock>(ps, "denoiser.mid.attn", ch,
                                            cfg.d_model, cfg.heads, cfg.groups);
    mid_res2_ = std::make_shared<ResBlock>(ps, "denoiser.mid.res2", ch, ch,
                                           tdim, cfg.groups);
    attention_attached = true;

    for (int i = levels - 1; i >= 0; --i) {
        int level_ch = cfg.base_channels * cfg.channel_mults[size_t(i)];
        std::string base = "denoiser.up" + std::to_string(i);
        // Input is concat(current, skip from this level).
        up_res_.push_back(std::make_shared<ResBlock>(
            ps, base + ".res", ch + level_ch, level_ch, tdim, cfg.groups));
        ch = level_ch;
        if (wants_attention(cur_res)) {
            up_attn_.push_back(std::make_shared<AttnBlock>(
                ps, base + ".attn", ch, cfg.d_model, cfg.heads, cfg.groups));
        } else {
            up_attn_.push_back(nullptr);
        }
        if (i > 0) {
            int next_ch = cfg.base_channels * cfg.channel_mults[size_t(i - 1)];
            upsample_conv_.push_back(nn::Conv2d::create(
                ps, base + ".upconv", ch, next_ch, 3, 1, 1));
            ch = next_ch;
            cur_res *= 2;
        }
    }

    out_norm_ = nn::GroupNorm::create(ps, "denoiser.out.gn", ch, cfg_.groups);
    out_conv_ = nn::Conv2d::create(ps, "denoiser.out.conv", ch,
                                   cfg.latent_channels, 3, 1, 1,
                                   /*zero_init=*/true);

    if (!attention_attached)
        throw ConfigError("denoiser: no attention level matched the latent "
                          "resolutions; conditioning would be unreachable");
}

Var Denoiser::time_embedding(Graph& g, const std::vector<int>& ts) const {
    Var sinus = g.constant(
        nn::sinusoidal_timestep_embedding(ts, cfg_.time_embed_dim));
    return time_fc2_(g, nn::silu(g, time_fc1_(g, sinus)));
}

Var Denoiser::forward(Graph& g, const Var& z_and_vis,
                      const std::vector<int>& timesteps,
                      const std::vector<BundleVar>& bundles) const {
    if (z_and_vis->value.ndim() != 4 ||
        z_and_vis->value.dim(1) != 2 * cfg_.latent_channels)
        throw ArgumentError("denoiser: expected [N, 2c, h, w] input");
    const int n = z_and_vis->value.dim(0);
    if (int(timesteps.size()) != n || int(bundles.size()) != n)
        throw ArgumentError("denoiser: batch size mismatch");

    Var temb = nn::silu(g, time_embedding(g, timesteps));

    Var h = stem_(g, z_and_vis);
    std::vector<Var> skips;
    const int levels = int(cfg_.channel_mults.size());
    for (int i = 0; i < levels; ++i) {
        h = down_res_[size_t(i)]->forward(g, h, temb);
        if (down_attn_[size_t(i)])
            h = down_attn_[size_t(i)]->forward(g, h, bundles);
        skips.push_back(h);
        if (i + 1 < levels) h = downsample_[size_t(i)](g, h);
    }

    h = mid_res1_->forward(g, h, temb);
    h = mid_attn_->forward(g, h, bundles);
    h = mid_res2_->forward(g, h, temb);

    for (int j = 0; j < levels; ++j) {
        int level = levels - 1 - j;
        h = nn::concat_channels(g, h, skips[size_t(level)]);
        h = up_res_[size_t(j)]->forward(g, h, temb);
        if (up_attn_[size_t(j)]) h = up_attn_[size_t(j)]->forward(g, h, bundles);
        if (level > 0)
            h = upsample_conv_[size_t(j)](g, nn::upsample_nearest2(g, h));
    }

    h = nn::silu(g, out_norm_(g, h));
    return out_conv_(g, h);
}

}  // namespace fvita
