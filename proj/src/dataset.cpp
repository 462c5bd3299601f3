#include "fvita/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "fvita/errors.hpp"
#include "fvita/io_util.hpp"
#include "fvita/rng.hpp"

namespace fvita {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json table_to_json(const EmissivityTable& t) {
    json j;
    j["version"] = t.version;
    j["noise_sigma"] = t.noise_sigma;
    json entries;
    for (const auto& [cls, row] : t.entries) {
        json bands;
        for (size_t b = 0; b < kAllBands.size(); ++b)
            bands[std::string(band_name(kAllBands[b]))] = row[b];
        entries[cls] = bands;
    }
    j["entries"] = entries;
    return j;
}

EmissivityTable table_from_json(const json& j) {
    EmissivityTable t;
    t.version = j.at("version").get<std::string>();
    t.noise_sigma = j.at("noise_sigma").get<double>();
    for (const auto& [cls, bands] : j.at("entries").items()) {
        std::array<double, 3> row{};
        for (size_t b = 0; b < kAllBands.size(); ++b)
            row[b] = bands.at(std::string(band_name(kAllBands[b]))).get<double>();
        t.entries[cls] = row;
    }
    t.validate();
    return t;
}

std::vector<Band> bands_from_json(const json& arr) {
    std::vector<Band> bands;
    for (const auto& b : arr) {
        auto band = band_from_name(b.get<std::string>());
        if (!band) throw ParseError("unknown band '" + b.get<std::string>() + "'");
        bands.push_back(*band);
    }
    if (bands.empty()) throw ParseError("band list is empty");
    return bands;
}

json bands_to_json(const std::vector<Band>& bands) {
    json arr = json::array();
    for (Band b : bands) arr.push_back(std::string(band_name(b)));
    return arr;
}

}  // namespace

void DatasetConfig::validate() const {
    generator.validate();
    table.validate();
    if (train_count < 0 || test_count < 0 || train_count + test_count == 0)
        throw ConfigError("dataset: train/test counts must be >= 0, sum > 0");
    if (bands.empty()) throw ConfigError("dataset: at least one band required");
}

std::string DatasetConfig::to_json_text() const {
    json j;
    j["width"] = generator.width;
    j["height"] = generator.height;
    j["min_objects"] = generator.min_objects;
    j["max_objects"] = generator.max_objects;
    j["min_size"] = generator.min_size;
    j["max_size"] = generator.max_size;
    j["thermal_jitter_range"] = generator.thermal_jitter_range;
    j["color_jitter"] = generator.color_jitter;
    j["background_class"] = generator.background_class;
    if (!generator.class_weights.empty()) j["class_weights"] = generator.class_weights;
    j["train"] = train_count;
    j["test"] = test_count;
    j["bands"] = bands_to_json(bands);
    j["seed"] = seed;
    j["emissivity_table"] = table_to_json(table);
    return j.dump(2) + "\n";
}

DatasetConfig DatasetConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset config: invalid JSON: ") + e.what());
    }
    DatasetConfig cfg;
    try {
        auto& g = cfg.generator;
        if (j.contains("width")) g.width = j["width"].get<int>();
        if (j.contains("height")) g.height = j["height"].get<int>();
        if (j.contains("min_objects")) g.min_objects = j["min_objects"].get<int>();
        if (j.contains("max_objects")) g.max_objects = j["max_objects"].get<int>();
        if (j.contains("min_size")) g.min_size = j["min_size"].get<int>();
        if (j.contains("max_size")) g.max_size = j["max_size"].get<int>();
        if (j.contains("thermal_jitter_range"))
            g.thermal_jitter_range = j["thermal_jitter_range"].get<double>();
        if (j.contains("color_jitter")) g.color_jitter = j["color_jitter"].get<double>();
        if (j.contains("background_class"))
            g.background_class = j["background_class"].get<std::string>();
        if (j.contains("class_weights"))
            g.class_weights =
                j["class_weights"].get<std::map<std::string, double>>();
        if (j.contains("train")) cfg.train_count = j["train"].get<int>();
        if (j.contains("test")) cfg.test_count = j["test"].get<int>();
        if (j.contains("bands")) cfg.bands = bands_from_json(j["bands"]);
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("emissivity_table"))
            cfg.table = table_from_json(j["emissivity_table"]);
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string DatasetManifest::to_json_text() const {
    json j;
    j["schema"] = schema;
    j["generator_version"] = generator_version;
    j["seed"] = seed;
    j["bands"] = bands_to_json(bands);
    j["image_size"] = {height, width};
    j["emissivity_table"] = table_to_json(table);
    j["splits"] = {{"train", train_count}, {"test", test_count}};
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: invalid JSON: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.schema = j.at("schema").get<std::string>();
        if (m.schema != kDatasetSchema)
            throw VersionError("manifest: unknown schema '" + m.schema + "'");
        m.generator_version = j.at("generator_version").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.bands = bands_from_json(j.at("bands"));
        m.height = j.at("image_size").at(0).get<int>();
        m.width = j.at("image_size").at(1).get<int>();
        m.table = table_from_json(j.at("emissivity_table"));
        m.train_count = j.at("splits").at("train").get<int>();
        m.test_count = j.at("splits").at("test").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    return m;
}

Band band_for_index(const std::vector<Band>& bands, int index) {
    return bands[size_t(index) % bands.size()];
}

uint64_t sample_noise_seed(uint64_t dataset_seed, const std::string& split,
                           int index) {
    return mix_seed(mix_seed(mix_seed(dataset_seed, split), "noise"),
                    uint64_t(index));
}

uint64_t sample_scene_seed(uint64_t dataset_seed, const std::string& split,
                           int index) {
    return mix_seed(mix_seed(mix_seed(dataset_seed, split), "scene"),
                    uint64_t(index));
}

namespace {

std::string sample_id_for(const std::string& split, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", split.c_str(), index);
    return buf;
}

void write_split(const DatasetConfig& cfg, const fs::path& root,
                 const std::string& split, int count,
                 std::set<std::string>& seen_ids) {
    ensure_dir(root / split / "visible");
    ensure_dir(root / split / "infrared");
    ensure_dir(root / split / "annotations");
    ensure_dir(root / split / "band");

    for (int i = 0; i < count; ++i) {
        std::string id = sample_id_for(split, i);
        if (!seen_ids.insert(id).second)
            throw TrainingError("dataset generation: duplicate sample_id " + id);

        SceneSpec spec =
            sample_scene(sample_scene_seed(cfg.seed, split, i), cfg.generator);
        Band band = band_for_index(cfg.bands, i);
        Image visible = render_visible(spec);
        Image infrared = render_infrared(spec, band, cfg.table,
                                         sample_noise_seed(cfg.seed, split, i));
        AnnotationSet ann = annotate_oracle(spec);

        write_png((root / split / "visible" / (id + ".png")).string(), visible);
        write_png((root / split / "infrared" / (id + ".png")).string(), infrared);
        save_annotation_set(ann,
                            (root / split / "annotations" / (id + ".json")).string());
        atomic_write_file((root / split / "band" / (id + ".txt")).string(),
                          std::string(band_name(band)) + "\n");
    }
}

}  // namespace

DatasetManifest generate_dataset(const DatasetConfig& cfg,
                                 const std::string& out_dir) {
    cfg.validate();
    fs::path target(out_dir);
    if (fs::exists(target))
        throw IoError("dataset output directory already exists: " + out_dir);

    // Build under a temp name, rename when complete.
    fs::path tmp = target;
    tmp += ".building";
    std::error_code ec;
    fs::remove_all(tmp, ec);
    ensure_dir(tmp);

    try {
        std::set<std::string> seen_ids;
        write_split(cfg, tmp, "train", cfg.train_count, seen_ids);
        write_split(cfg, tmp, "test", cfg.test_count, seen_ids);

        DatasetManifest manifest;
        manifest.seed = cfg.seed;
        manifest.bands = cfg.bands;
        manifest.width = cfg.generator.width;
        manifest.height = cfg.generator.height;
        manifest.table = cfg.table;
        manifest.train_count = cfg.train_count;
        manifest.test_count = cfg.test_count;
        atomic_write_file((tmp / "manifest.json").string(),
                          manifest.to_json_text());

        fs::rename(tmp, target);
        return manifest;
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }
}

DatasetManifest load_manifest(const std::string& root) {
    try {
        return DatasetManifest::from_json_text(
            read_file((fs::path(root) / "manifest.json").string()));
    } catch (const IoError& e) {
        throw IoError("dataset at '" + root + "': " + e.what());
    }
}

std::vector<std::string> list_sample_ids(const std::string& root,
                                         const std::string& split) {
    fs::path dir = fs::path(root) / split / "visible";
    if (!fs::is_directory(dir))
        throw IoError("dataset split directory missing: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".png")
            ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

PairedSample load_sample(const std::string& root, const std::string& split,
                         const std::string& sample_id) {
    fs::path base = fs::path(root) / split;
    PairedSample s;
    s.sample_id = sample_id;
    s.visible = read_png((base / "visible" / (sample_id + ".png")).string());
    if (s.visible.channels == 1) s.visible = replicate_channels(s.visible, 3);
    s.infrared = read_png((base / "infrared" / (sample_id + ".png")).string());
    if (s.infrared.channels != 1) s.infrared = to_luminance(s.infrared);
    if (!s.visible.data.size() || s.visible.height != s.infrared.height ||
        s.visible.width != s.infrared.width)
        throw ParseError("sample " + sample_id + ": visible/infrared size mismatch");
    s.annotations =
        load_annotation_set((base / "annotations" / (sample_id + ".json")).string());
    if (s.annotations.height != s.visible.height ||
        s.annotations.width != s.visible.width)
        throw ParseError("sample " + sample_id + ": annotation size mismatch");

    std::string band_text = read_file((base / "band" / (sample_id + ".txt")).string());
    while (!band_text.empty() &&
           (band_text.back() == '\n' || band_text.back() == '\r' ||
            band_text.back() == ' '))
        band_text.pop_back();
    auto band = band_from_name(band_text);
    if (!band)
        throw ParseError("sample " + sample_id + ": unknown band '" + band_text +
                         "'");
    s.band = *band;
    return s;
}

}  // namespace fvita
