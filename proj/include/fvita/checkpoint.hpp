#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "fvita/nn/modules.hpp"
#include "fvita/tensor.hpp"

namespace fvita {

// Checkpoint metadata. Everything needed to rebuild the model that produced
// the blobs, plus provenance (bank/table versions, config hash).
struct CheckpointMeta {
    std::string schema = kCheckpointSchemaString();
    std::string kind;  // "codec" or "translation"
    int64_t step = 0;
    std::string config_hash;  // fnv64 hex of the canonical config JSON
    std::string template_bank_version;
    std::string template_bank_hash;
    std::string emissivity_table_version;
    int schedule_T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double latent_scale = 1.0;
    int width = 64, height = 64;
    std::string cond_mode = "text+masks";
    uint64_t embedder_seed = 2024;
    uint64_t model_init_seed = 0;
    // Canonical JSON of the full model configuration (embedded in the header
    // as an object so a checkpoint is self-describing).
    std::string model_config_json;

    static std::string kCheckpointSchemaString();
};

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::map<std::string, Tensor> blobs;  // float32 payload widened to double
};

// Container: magic "FVCK", u64 header length, header JSON, then per
// parameter (sorted ascending by name) a u64 byte length followed by raw
// little-endian float32 data. Per-blob fnv64 checksums live in the header,
// so any single corrupted byte is caught on load.
void save_checkpoint(const nn::ParamStore& params, const CheckpointMeta& meta,
                     const std::string& path);

// expected_config_hash: when given and different from the stored hash, the
// load is refused unless force is set.
LoadedCheckpoint load_checkpoint(
    const std::string& path,
    const std::optional<std::string>& expected_config_hash = std::nullopt,
    bool force = false);

// Copies blobs into an existing store; shapes must match and name sets must
// be identical.
void apply_checkpoint_blobs(nn::ParamStore& params,
                            const std::map<std::string, Tensor>& blobs);

// Raw float32 serialization of a parameter (the "blob" used in byte-level
// equality checks).
std::string param_blob_bytes(const Tensor& value);

std::string config_hash_hex(const std::string& canonical_json);

}  // namespace fvita
