#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fvita/annotation.hpp"
#include "fvita/common.hpp"
#include "fvita/nn/modules.hpp"
#include "fvita/tensor.hpp"

namespace fvita {

// Dimensions of the frozen embedders and the common token width.
struct EmbedderConfig {
    int mask_grid = 16;        // pooled mask resolution
    int d_mask = 256;          // mask_grid^2
    int d_label = 128;
    int d_instr = 128;
    int d_model = 128;         // common conditioning token width
    int vocab_buckets = 1024;  // hashed bag-of-words table size
    uint64_t init_seed = 2024; // frozen-table seed

    void validate() const;
};

// Which foundation-model components feed the conditioning tokens.
struct AblationFlags {
    bool use_text_labels = true;
    bool use_boxes = false;
    bool use_masks = true;

    // Modes: none, text, boxes, masks, text+boxes, text+masks.
    static AblationFlags from_mode(const std::string& mode);
    static const std::vector<std::string>& all_modes();
    std::string mode_name() const;
    void validate() const;  // boxes together with masks is rejected
};

enum class TokenRole : uint8_t { Object, Image, Instruction, Pad };
std::string_view token_role_name(TokenRole r);

// Fixed-shape cross-attention token sequence: 3*kMaxObjects x d_model.
// Slots [0,16) objects, [16,32) repeated image token, [32,48) repeated
// instruction token; pad slots are zero and masked out of attention.
struct ConditioningBundle {
    Tensor tokens;
    std::vector<TokenRole> roles;
    int n_objects = 0;

    std::vector<uint8_t> active_mask() const;
};

// Graph-space bundle (projector outputs are differentiable).
struct BundleVar {
    nn::Var tokens;  // [3*kMaxObjects, d_model]
    std::vector<TokenRole> roles;
    std::vector<uint8_t> active;
    int n_objects = 0;
};

uint32_t fnv1a32(std::string_view text);

// Picks the kMaxObjects largest-area annotations, preserving input order
// among the survivors (ties keep the earlier item).
std::vector<int> select_topk_by_area(const std::vector<ObjectAnnotation>& items,
                                     int k);

// Area-average-pools a binary mask onto a grid x grid cell layout (fractional
// pixel coverage when sizes do not divide) and flattens row-major.
Tensor pool_mask_to_grid(const BinaryMask& mask, int grid);

// Frozen mask/label/instruction embedders plus the trainable projector and
// the learned null/unconditional tokens. Only "projector.*" parameters are
// trainable; the embedding tables never receive gradients.
class ConditioningModule {
  public:
    static constexpr int kTokensPerBundle = 3 * kMaxObjects;

    ConditioningModule(nn::ParamStore& ps, const EmbedderConfig& cfg,
                       int latent_channels);

    const EmbedderConfig& config() const { return cfg_; }

    // Frozen embedders.
    Tensor embed_mask(const BinaryMask& mask) const;           // [d_mask]
    Tensor embed_label(const std::string& label) const;        // [d_label]
    Tensor embed_instruction(const std::string& text) const;   // [d_instr]
    // Image token from the spatially pooled codec latent.
    Tensor embed_visible_pooled(const Tensor& pooled_latent) const;  // [d_model]

    // Trainable projector: [mask_emb ; label_emb] -> d_model token.
    nn::Var project_object_token(nn::Graph& g, const Tensor& mask_emb,
                                 const Tensor& label_emb) const;

    BundleVar assemble(nn::Graph& g, const AnnotationSet& ann,
                       const Tensor& image_emb, const Tensor& instr_emb,
                       const AblationFlags& flags, bool drop_objects = false,
                       bool drop_instruction = false) const;
    BundleVar null_bundle_var(nn::Graph& g) const;

    // Plain-tensor entry points (inference / inspection).
    ConditioningBundle assemble_conditioning(const AnnotationSet& ann,
                                             const Tensor& image_emb,
                                             const Tensor& instr_emb,
                                             const AblationFlags& flags) const;
    ConditioningBundle null_bundle() const;

  private:
    Tensor hashed_bag_of_words(const std::string& text, const nn::Var& table,
                               int dim) const;

    EmbedderConfig cfg_;
    nn::Var label_table_;   // [vocab_buckets, d_label], frozen
    nn::Var instr_table_;   // [vocab_buckets, d_instr], frozen
    nn::Var visible_w_;     // [latent_channels, d_model], frozen
    nn::Var visible_b_;     // [d_model], frozen
    nn::Linear proj_fc1_;   // trainable
    nn::Linear proj_fc2_;   // trainable
    nn::Var null_object_token_;  // [1, d_model], trainable
    nn::Var uncond_token_;       // [1, d_model], trainable
};

}  // namespace fvita
