#include "fvita/checkpoint.hpp"

#include <cstring>

#include <nlohmann/json.hpp>

#include "fvita/common.hpp"
#include "fvita/errors.hpp"
#include "fvita/io_util.hpp"

namespace fvita {

using nlohmann::json;

std::string CheckpointMeta::kCheckpointSchemaString() {
    return kCheckpointSchema;
}

namespace {

constexpr char kMagic[4] = {'F', 'V', 'C', 'K'};

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

uint64_t read_u64(const std::string& bytes, size_t& pos) {
    if (pos + 8 > bytes.size())
        throw IntegrityError("checkpoint: truncated (length field)");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= uint64_t(uint8_t(bytes[pos + size_t(i)])) << (8 * i);
    pos += 8;
    return v;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
    return buf;
}

json meta_to_json(const CheckpointMeta& m) {
    json j;
    j["schema"] = m.schema;
    j["kind"] = m.kind;
    j["step"] = m.step;
    j["config_hash"] = m.config_hash;
    j["template_bank_version"] = m.template_bank_version;
    j["template_bank_hash"] = m.template_bank_hash;
    j["emissivity_table_version"] = m.emissivity_table_version;
    j["schedule"] = {{"T", m.schedule_T},
                     {"beta_start", m.beta_start},
                     {"beta_end", m.beta_end}};
    j["latent_scale"] = m.latent_scale;
    j["image_size"] = {m.height, m.width};
    j["cond_mode"] = m.cond_mode;
    j["embedder_seed"] = m.embedder_seed;
    j["model_init_seed"] = m.model_init_seed;
    j["model_config"] = m.model_config_json.empty()
                            ? json(nullptr)
                            : json::parse(m.model_config_json);
    return j;
}

CheckpointMeta meta_from_json(const json& j) {
    CheckpointMeta m;
    m.schema = j.at("schema").get<std::string>();
    if (m.schema != kCheckpointSchema)
        throw VersionError("checkpoint: unknown schema '" + m.schema +
                           "', expected '" + kCheckpointSchema + "'");
    m.kind = j.at("kind").get<std::string>();
    m.step = j.at("step").get<int64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.template_bank_version = j.at("template_bank_version").get<std::string>();
    m.template_bank_hash = j.at("template_bank_hash").get<std::string>();
    m.emissivity_table_version =
        j.at("emissivity_table_version").get<std::string>();
    m.schedule_T = j.at("schedule").at("T").get<int>();
    m.beta_start = j.at("schedule").at("beta_start").get<double>();
    m.beta_end = j.at("schedule").at("beta_end").get<double>();
    m.latent_scale = j.at("latent_scale").get<double>();
    m.height = j.at("image_size").at(0).get<int>();
    m.width = j.at("image_size").at(1).get<int>();
    m.cond_mode = j.at("cond_mode").get<std::string>();
    m.embedder_seed = j.at("embedder_seed").get<uint64_t>();
    m.model_init_seed = j.at("model_init_seed").get<uint64_t>();
    return m;
}

}  // namespace

std::string param_blob_bytes(const Tensor& value) {
    std::string bytes;
    bytes.resize(size_t(value.size()) * 4);
    for (int64_t i = 0; i < value.size(); ++i) {
        float f = float(value[i]);
        uint32_t u;
        std::memcpy(&u, &f, 4);
        for (int b = 0; b < 4; ++b)
            bytes[size_t(i) * 4 + size_t(b)] = char((u >> (8 * b)) & 0xff);
    }
    return bytes;
}

std::string config_hash_hex(const std::string& canonical_json) {
    return hex64(fnv1a64_bytes(canonical_json.data(), canonical_json.size()));
}

void save_checkpoint(const nn::ParamStore& params, const CheckpointMeta& meta,
                     const std::string& path) {
    json header = meta_to_json(meta);
    json plist = json::array();
    std::vector<std::string> blobs;
    for (const auto& [name, var] : params.all()) {  // std::map: sorted order
        std::string blob = param_blob_bytes(var->value);
        json p;
        p["name"] = name;
        p["shape"] = var->value.shape();
        p["checksum"] = hex64(fnv1a64_bytes(blob.data(), blob.size()));
        plist.push_back(std::move(p));
        blobs.push_back(std::move(blob));
    }
    header["params"] = std::move(plist);

    std::string header_text = header.dump();
    std::string out;
    out.append(kMagic, 4);
    append_u64(out, header_text.size());
    out += header_text;
    for (const auto& blob : blobs) {
        append_u64(out, blob.size());
        out += blob;
    }
    atomic_write_file(path, out);
}

LoadedCheckpoint load_checkpoint(
    const std::string& path,
    const std::optional<std::string>& expected_config_hash, bool force) {
    std::string bytes = read_file(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IntegrityError("checkpoint: bad magic in " + path);
    size_t pos = 4;
    uint64_t header_len = read_u64(bytes, pos);
    if (pos + header_len > bytes.size())
        throw IntegrityError("checkpoint: truncated header in " + path);

    json header;
    try {
        header = json::parse(bytes.substr(pos, header_len));
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("checkpoint: corrupt header: ") +
                             e.what());
    }
    pos += header_len;

    LoadedCheckpoint ckpt;
    try {
        ckpt.meta = meta_from_json(header);
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("checkpoint: header fields: ") +
                             e.what());
    }

    if (expected_config_hash && *expected_config_hash != ckpt.meta.config_hash &&
        !force)
        throw VersionError(
            "checkpoint config hash " + ckpt.meta.config_hash +
            " does not match this run (" + *expected_config_hash +
            "); pass --force to override");

    if (!header.contains("params") || !header["params"].is_array())
        throw IntegrityError("checkpoint: missing params list");

    for (const auto& p : header["params"]) {
        std::string name, checksum;
        std::vector<int> shape;
        try {
            name = p.at("name").get<std::string>();
            shape = p.at("shape").get<std::vector<int>>();
            checksum = p.at("checksum").get<std::string>();
        } catch (const json::exception& e) {
            throw IntegrityError(std::string("checkpoint: param entry: ") +
                                 e.what());
        }
        uint64_t blob_len = read_u64(bytes, pos);
        if (pos + blob_len > bytes.size())
            throw IntegrityError("checkpoint: truncated blob for " + name);
        int64_t numel = Tensor::numel(shape);
        if (blob_len != uint64_t(numel) * 4)
            throw IntegrityError("checkpoint: blob size mismatch for " + name);
        if (hex64(fnv1a64_bytes(bytes.data() + pos, blob_len)) != checksum)
            throw IntegrityError("checkpoint: checksum mismatch for " + name);

        Tensor t(shape);
        for (int64_t i = 0; i < numel; ++i) {
            uint32_t u = 0;
            for (int b = 0; b < 4; ++b)
                u |= uint32_t(uint8_t(bytes[pos + size_t(i) * 4 + size_t(b)]))
                     << (8 * b);
            float f;
            std::memcpy(&f, &u, 4);
            t[i] = double(f);
        }
        pos += blob_len;
        ckpt.blobs.emplace(std::move(name), std::move(t));
    }
    if (pos != bytes.size())
        throw IntegrityError("checkpoint: trailing bytes in " + path);
    return ckpt;
}

void apply_checkpoint_blobs(nn::ParamStore& params,
                            const std::map<std::string, Tensor>& blobs) {
    if (params.all().size() != blobs.size())
        throw IntegrityError(
            "checkpoint: parameter count mismatch (model has " +
            std::to_string(params.all().size()) + ", checkpoint has " +
            std::to_string(blobs.size()) + ")");
    for (const auto& [name, var] : params.all()) {
        auto it = blobs.find(name);
        if (it == blobs.end())
            throw IntegrityError("checkpoint: missing parameter " + name);
        if (it->second.shape() != var->value.shape())
            throw IntegrityError("checkpoint: shape mismatch for " + name);
        var->value = it->second;
    }
}

}  // namespace fvita
