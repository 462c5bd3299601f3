#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fvita/checkpoint.hpp"
#include "fvita/codec.hpp"
#include "fvita/conditioning.hpp"
#include "fvita/dataset.hpp"
#include "fvita/denoiser.hpp"
#include "fvita/diffusion.hpp"
#include "fvita/instruction.hpp"
#include "fvita/schedule.hpp"

namespace fvita {

struct ModelConfig {
    int width = 64, height = 64;
    EmbedderConfig embedder;
    DenoiserConfig denoiser;
    int schedule_T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::string cond_mode = "text+masks";
    uint64_t init_seed = 42;  // denoiser + projector init

    void validate() const;
    std::string to_json_text() const;
    static ModelConfig from_json_text(const std::string& text);
};

// A training/eval sample after the frozen paths have been applied once.
struct PreparedSample {
    std::string sample_id;
    Tensor ir_latent;   // [1,4,h,w], scaled
    Tensor vis_latent;  // [1,4,h,w], scaled
    Tensor image_emb;   // [d_model]
    AnnotationSet annotations;
    Band band = Band::Long;
};

// The assembled translation pipeline: frozen codec + frozen embedders +
// trainable projector + trainable denoising U-Net + schedule + templates.
class TranslationModel {
  public:
    TranslationModel(const ModelConfig& cfg, InstructionBank bank);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    LatentCodec& codec() { return *codec_; }
    const LatentCodec& codec() const { return *codec_; }
    ConditioningModule& conditioning() { return *conditioning_; }
    const ConditioningModule& conditioning() const { return *conditioning_; }
    Denoiser& denoiser() { return *denoiser_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const InstructionBank& bank() const { return bank_; }
    AblationFlags cond_flags() const {
        return AblationFlags::from_mode(cfg_.cond_mode);
    }

    int latent_size() const { return cfg_.width / LatentCodec::kDownsample; }

    // Trainable set: exactly denoiser.* and projector.*.
    std::vector<std::pair<std::string, nn::Var>> trainable_params() const;
    // Frozen set: codec.* and embed.*.
    std::vector<std::pair<std::string, nn::Var>> frozen_params() const;

    // Frozen-path helpers.
    Tensor encode_scaled(const Image& img) const;  // codec latent * scale
    Tensor image_token(const Image& visible) const;
    PreparedSample prepare_sample(const PairedSample& sample) const;

    // Single eps prediction (inference mode, NaN-checked).
    Tensor predict_noise(const Tensor& z_t, int t, const Tensor& vis_latent,
                         const ConditioningBundle& cond) const;

    // Differentiable training loss with explicit stochastic draws. The
    // predictor defaults to the denoiser; tests may stub it.
    using Predictor = std::function<nn::Var(
        nn::Graph&, const nn::Var& z_and_vis, const std::vector<int>& ts,
        const std::vector<BundleVar>& bundles)>;

    nn::Var translation_loss(nn::Graph& g,
                             const std::vector<const PreparedSample*>& batch,
                             const StepDraws& draws,
                             const Predictor& predictor = nullptr) const;

    // Deterministic DDIM sampler with classifier-free guidance. force_cfg
    // runs the guidance combination even at scale 1 (used by tests).
    Image sample_translation(const Image& visible, Band band, int template_id,
                             const AnnotationSet& annotations, int steps,
                             double guidance_scale, uint64_t seed,
                             bool force_cfg = false) const;

    void save(const std::string& path, CheckpointMeta meta) const;
    static std::unique_ptr<TranslationModel> from_checkpoint(
        const std::string& path, const InstructionBank& bank,
        bool force = false);

    CheckpointMeta base_meta() const;  // schedule/size/seeds filled in

  private:
    BundleVar bundle_to_var(nn::Graph& g, const ConditioningBundle& b) const;

    ModelConfig cfg_;
    nn::ParamStore params_;
    InstructionBank bank_;
    NoiseSchedule schedule_;
    std::unique_ptr<LatentCodec> codec_;
    std::unique_ptr<ConditioningModule> conditioning_;
    std::unique_ptr<Denoiser> denoiser_;
};

}  // namespace fvita
