#include "fvita/conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "fvita/errors.hpp"
#include "fvita/rng.hpp"

namespace fvita {

using nn::Graph;
using nn::Var;

void EmbedderConfig::validate() const {
    if (mask_grid <= 0 || d_mask != mask_grid * mask_grid)
        throw ConfigError("embedder: d_mask must equal mask_grid^2");
    if (d_label <= 0 || d_instr <= 0 || d_model <= 0 || vocab_buckets <= 0)
        throw ConfigError("embedder: dimensions must be positive");
    if (d_instr != d_model)
        throw ConfigError("embedder: d_instr must equal d_model (instruction "
                          "tokens enter the bundle unprojected)");
}

AblationFlags AblationFlags::from_mode(const std::string& mode) {
    AblationFlags f{false, false, false};
    if (mode == "none") {
    } else if (mode == "text") {
        f.use_text_labels = true;
    } else if (mode == "boxes") {
        f.use_boxes = true;
    } else if (mode == "masks") {
        f.use_masks = true;
    } else if (mode == "text+boxes") {
        f.use_text_labels = true;
        f.use_boxes = true;
    } else if (mode == "text+masks") {
        f.use_text_labels = true;
        f.use_masks = true;
    } else {
        throw ConfigError("unknown conditioning mode '" + mode + "'");
    }
    return f;
}

const std::vector<std::string>& AblationFlags::all_modes() {
    static const std::vector<std::string> modes = {
        "none", "text", "boxes", "masks", "text+boxes", "text+masks"};
    return modes;
}

std::string AblationFlags::mode_name() const {
    validate();
    if (use_text_labels && use_masks) return "text+masks";
    if (use_text_labels && use_boxes) return "text+boxes";
    if (use_masks) return "masks";
    if (use_boxes) return "boxes";
    if (use_text_labels) return "text";
    return "none";
}

void AblationFlags::validate() const {
    // Boxes are superfluous in the presence of masks; the combination is
    // rejected rather than silently ignored.
    if (use_boxes && use_masks)
        throw ConfigError("conditioning: boxes and masks cannot both be enabled");
}

std::string_view token_role_name(TokenRole r) {
    switch (r) {
        case TokenRole::Object: return "object";
        case TokenRole::Image: return "image";
        case TokenRole::Instruction: return "instruction";
        case TokenRole::Pad: return "pad";
    }
    return "?";
}

std::vector<uint8_t> ConditioningBundle::active_mask() const {
    std::vector<uint8_t> m(roles.size());
    for (size_t i = 0; i < roles.size(); ++i)
        m[i] = roles[i] != TokenRole::Pad ? 1 : 0;
    return m;
}

uint32_t fnv1a32(std::string_view text) {
    uint32_t h = 2166136261u;
    for (unsigned char c : text) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

std::vector<int> select_topk_by_area(const std::vector<ObjectAnnotation>& items,
                                     int k) {
    std::vector<int> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    // Stable sort by descending area keeps earlier items on ties.
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return items[size_t(a)].mask.area() > items[size_t(b)].mask.area();
    });
    if (int(order.size()) > k) order.resize(size_t(k));
    std::sort(order.begin(), order.end());  // preserve original order
    return order;
}

Tensor pool_mask_to_grid(const BinaryMask& mask, int grid) {
    if (mask.height <= 0 || mask.width <= 0)
        throw ArgumentError("pool_mask_to_grid: empty mask shape");
    Tensor out({grid * grid});
    const double cell_h = double(mask.height) / grid;
    const double cell_w = double(mask.width) / grid;
    for (int gy = 0; gy < grid; ++gy) {
        const double y0 = gy * cell_h, y1 = (gy + 1) * cell_h;
        for (int gx = 0; gx < grid; ++gx) {
            const double x0 = gx * cell_w, x1 = (gx + 1) * cell_w;
            double acc = 0.0, area = 0.0;
            for (int py = int(std::floor(y0)); py < int(std::ceil(y1)); ++py) {
                double hy = std::min<double>(py + 1, y1) - std::max<double>(py, y0);
                if (hy <= 0) continue;
                for (int px = int(std::floor(x0)); px < int(std::ceil(x1)); ++px) {
                    double wx =
                        std::min<double>(px + 1, x1) - std::max<double>(px, x0);
                    if (wx <= 0) continue;
                    double wgt = hy * wx;
                    area += wgt;
                    if (mask.at(py, px)) acc += wgt;
                }
            }
            out[gy * grid + gx] = acc / area;
        }
    }
    return out;
}

ConditioningModule::ConditioningModule(nn::ParamStore& ps,
                                       const EmbedderConfig& cfg,
                                       int latent_channels)
    : cfg_(cfg) {
    cfg_.validate();
    // Frozen, unit-variance tables pinned to the embedder seed.
    label_table_ = ps.create_normal_seeded(
        "embed.label_table", {cfg_.vocab_buckets, cfg_.d_label}, 1.0,
        cfg_.init_seed, false);
    instr_table_ = ps.create_normal_seeded(
        "embed.instr_table", {cfg_.vocab_buckets, cfg_.d_instr}, 1.0,
        cfg_.init_seed, false);
    visible_w_ = ps.create_normal_seeded(
        "embed.visible.w", {latent_channels, cfg_.d_model},
        1.0 / std::sqrt(double(latent_channels)), cfg_.init_seed, false);
    visible_b_ = ps.create_normal_seeded("embed.visible.b", {cfg_.d_model}, 0.0,
                                         cfg_.init_seed, false);

    const int concat_dim = cfg_.d_mask + cfg_.d_label;
    proj_fc1_ = nn::Linear::create(ps, "projector.fc1", concat_dim, 256);
    proj_fc2_ = nn::Linear::create(ps, "projector.fc2", 256, cfg_.d_model);
    null_object_token_ = ps.create_normal("projector.null_object_token",
                                          {1, cfg_.d_model}, 0.02);
    uncond_token_ =
        ps.create_normal("projector.uncond_token", {1, cfg_.d_model}, 0.02);
}

Tensor ConditioningModule::embed_mask(const BinaryMask& mask) const {
    if (mask.empty())
        throw ArgumentError("embed_mask: empty mask (caller must drop it)");
    return pool_mask_to_grid(mask, cfg_.mask_grid);
}

Tensor ConditioningModule::hashed_bag_of_words(const std::string& text,
                                               const nn::Var& table,
                                               int dim) const {
    std::vector<uint32_t> buckets;
    std::string word;
    auto flush = [&]() {
        if (!word.empty()) {
            buckets.push_back(fnv1a32(word) % uint32_t(cfg_.vocab_buckets));
            word.clear();
        }
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch)))
            flush();
        else
            word.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
    }
    flush();
    if (buckets.empty())
        throw ArgumentError("text embedder: empty input string");

    Tensor out({dim});
    for (uint32_t b : buckets) {
        const double* row = table->value.data() + int64_t(b) * dim;
        for (int i = 0; i < dim; ++i) out[i] += row[i];
    }
    for (int i = 0; i < dim; ++i) out[i] /= double(buckets.size());
    return out;
}

Tensor ConditioningModule::embed_label(const std::string& label) const {
    return hashed_bag_of_words(label, label_table_, cfg_.d_label);
}

Tensor ConditioningModule::embed_instruction(const std::string& text) const {
    return hashed_bag_of_words(text, instr_table_, cfg_.d_instr);
}

Tensor ConditioningModule::embed_visible_pooled(const Tensor& pooled) const {
    if (pooled.size() != visible_w_->value.dim(0))
        throw ArgumentError("embed_visible: pooled latent dim mismatch");
    const int c = int(pooled.size());
    Tensor out({cfg_.d_model});
    for (int j = 0; j < cfg_.d_model; ++j) {
        double acc = visible_b_->value[j];
        for (int i = 0; i < c; ++i)
            acc += pooled[i] * visible_w_->value.at(i, j);
        out[j] = acc;
    }
    return out;
}

Var ConditioningModule::project_object_token(Graph& g, const Tensor& mask_emb,
                                             const Tensor& label_emb) const {
    if (mask_emb.size() != cfg_.d_mask || label_emb.size() != cfg_.d_label)
        throw ArgumentError("project_object_token: embedding dim mismatch");
    Tensor in({1, cfg_.d_mask + cfg_.d_label});
    std::copy(mask_emb.data(), mask_emb.data() + cfg_.d_mask, in.data());
    std::copy(label_emb.data(), label_emb.data() + cfg_.d_label,
              in.data() + cfg_.d_mask);
    Var x = g.constant(std::move(in));
    return proj_fc2_(g, nn::silu(g, proj_fc1_(g, x)));
}

namespace {

Tensor box_embedding(const Box& box, int height, int width, int d_mask) {
    Tensor out({d_mask});
    out[0] = double(box.x0) / width;
    out[1] = double(box.y0) / height;
    out[2] = double(box.x1) / width;
    out[3] = double(box.y1) / height;
    return out;
}

}  // namespace

BundleVar ConditioningModule::assemble(Graph& g, const AnnotationSet& ann,
                                       const Tensor& image_emb,
                                       const Tensor& instr_emb,
                                       const AblationFlags& flags,
                                       bool drop_objects,
                                       bool drop_instruction) const {
    flags.validate();
    ann.validate();
    if (image_emb.size() != cfg_.d_model || instr_emb.size() != cfg_.d_instr)
        throw ArgumentError("assemble: token dim mismatch");

    BundleVar bundle;
    bundle.roles.assign(kTokensPerBundle, TokenRole::Pad);

    auto keep = select_topk_by_area(ann.items, kMaxObjects);
    const int n = int(keep.size());
    bundle.n_objects = n;

    std::vector<int> row_index;
    std::vector<Var> rows;

    if (n == 0) {
        // Degenerate scene: a single learned null-object token stands in.
        bundle.roles[0] = TokenRole::Object;
        row_index.push_back(0);
        rows.push_back(drop_objects ? uncond_token_ : null_object_token_);
    } else {
        for (int i = 0; i < n; ++i) {
            const auto& item = ann.items[size_t(keep[size_t(i)])];
            bundle.roles[size_t(i)] = TokenRole::Object;
            row_index.push_back(i);
            if (drop_objects) {
                rows.push_back(uncond_token_);
                continue;
            }
            Tensor mask_part({cfg_.d_mask});
            if (flags.use_masks)
                mask_part = embed_mask(item.mask);
            else if (flags.use_boxes)
                mask_part = box_embedding(item.box, ann.height, ann.width,
                                          cfg_.d_mask);
            Tensor label_part({cfg_.d_label});
            if (flags.use_text_labels) label_part = embed_label(item.label);
            rows.push_back(project_object_token(g, mask_part, label_part));
        }
    }

    const int n_rep = std::max(n, 1);
    Var image_var = g.constant(image_emb);
    for (int i = 0; i < n_rep; ++i) {
        bundle.roles[size_t(kMaxObjects + i)] = TokenRole::Image;
        row_index.push_back(kMaxObjects + i);
        rows.push_back(image_var);
    }
    Var instr_var = g.constant(instr_emb);
    for (int i = 0; i < n_rep; ++i) {
        bundle.roles[size_t(2 * kMaxObjects + i)] = TokenRole::Instruction;
        row_index.push_back(2 * kMaxObjects + i);
        rows.push_back(drop_instruction ? uncond_token_ : instr_var);
    }

    bundle.tokens =
        nn::assemble_rows(g, kTokensPerBundle, cfg_.d_model, row_index, rows);
    bundle.active.assign(kTokensPerBundle, 0);
    for (int i = 0; i < kTokensPerBundle; ++i)
        bundle.active[size_t(i)] = bundle.roles[size_t(i)] != TokenRole::Pad;
    return bundle;
}

BundleVar ConditioningModule::null_bundle_var(Graph& g) const {
    BundleVar bundle;
    bundle.roles.assign(kTokensPerBundle, TokenRole::Pad);
    bundle.roles[0] = TokenRole::Object;
    bundle.n_objects = 0;
    bundle.tokens = nn::assemble_rows(g, kTokensPerBundle, cfg_.d_model, {0},
                                      {uncond_token_});
    bundle.active.assign(kTokensPerBundle, 0);
    bundle.active[0] = 1;
    return bundle;
}

ConditioningBundle ConditioningModule::assemble_conditioning(
    const AnnotationSet& ann, const Tensor& image_emb, const Tensor& instr_emb,
    const AblationFlags& flags) const {
    Graph g(false);
    BundleVar bv = assemble(g, ann, image_emb, instr_emb, flags);
    ConditioningBundle out;
    out.tokens = bv.tokens->value;
    out.roles = bv.roles;
    out.n_objects = bv.n_objects;
    return out;
}

ConditioningBundle ConditioningModule::null_bundle() const {
    Graph g(false);
    BundleVar bv = null_bundle_var(g);
    ConditioningBundle out;
    out.tokens = bv.tokens->value;
    out.roles = bv.roles;
    out.n_objects = 0;
    return out;
}

}  // namespace fvita
