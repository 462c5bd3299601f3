#include "fvita/scene.hpp"

#include <algorithm>
#include <cmath>

#include "fvita/errors.hpp"
#include "fvita/rng.hpp"

namespace fvita {

std::string_view shape_name(ObjectShape s) {
    switch (s) {
        case ObjectShape::Ellipse: return "ellipse";
        case ObjectShape::Rectangle: return "rectangle";
        case ObjectShape::Blob: return "blob";
    }
    return "?";
}

bool operator==(const ObjectSpec& a, const ObjectSpec& b) {
    auto disks_eq = [](const ObjectSpec& u, const ObjectSpec& v) {
        if (u.blob_disks.size() != v.blob_disks.size()) return false;
        for (size_t i = 0; i < u.blob_disks.size(); ++i) {
            if (u.blob_disks[i].cx != v.blob_disks[i].cx ||
                u.blob_disks[i].cy != v.blob_disks[i].cy ||
                u.blob_disks[i].r != v.blob_disks[i].r)
                return false;
        }
        return true;
    };
    return a.class_name == b.class_name && a.shape == b.shape && a.x == b.x &&
           a.y == b.y && a.size_w == b.size_w && a.size_h == b.size_h &&
           a.visible_color == b.visible_color &&
           a.thermal_jitter == b.thermal_jitter && disks_eq(a, b);
}

bool SceneSpec::operator==(const SceneSpec& o) const {
    return seed == o.seed && width == o.width && height == o.height &&
           objects == o.objects && background_class == o.background_class &&
           illumination == o.illumination;
}

double EmissivityTable::lookup(const std::string& class_name, Band band) const {
    auto it = entries.find(class_name);
    if (it == entries.end())
        throw ConfigError("emissivity table has no entry for class '" +
                          class_name + "'");
    return it->second[size_t(band)];
}

void EmissivityTable::validate() const {
    if (noise_sigma < 0.0)
        throw ConfigError("emissivity table: noise_sigma must be >= 0");
    if (version.empty())
        throw ConfigError("emissivity table: version string required");
    for (const auto& [cls, row] : entries)
        for (double v : row)
            if (v < 0.0 || v > 1.0)
                throw ConfigError("emissivity table: entry for '" + cls +
                                  "' outside [0,1]");
    for (auto cls : kClassVocabulary)
        if (!entries.count(std::string(cls)))
            throw ConfigError("emissivity table: missing class '" +
                              std::string(cls) + "'");
}

EmissivityTable EmissivityTable::defaults() {
    EmissivityTable t;
    t.version = kEmissivityVersion;
    t.noise_sigma = 0.02;
    // Band order: {near, mid, long}.
    t.entries["person"] = {0.50, 0.80, 0.90};
    t.entries["car"] = {0.40, 0.75, 0.70};
    t.entries["building"] = {0.45, 0.40, 0.45};
    t.entries["tree"] = {0.85, 0.30, 0.35};
    t.entries["road"] = {0.30, 0.55, 0.50};
    t.entries["sky"] = {0.10, 0.05, 0.05};
    return t;
}

std::map<std::string, double> GeneratorConfig::default_class_weights() {
    // Street-scene mix; persons and cars dominate so every band pair keeps a
    // comfortable intensity separation on typical scenes.
    return {{"person", 0.30}, {"car", 0.25},  {"tree", 0.15},
            {"building", 0.15}, {"road", 0.05}, {"sky", 0.10}};
}

void GeneratorConfig::validate() const {
    if (width < 32 || width > 256 || height < 32 || height > 256)
        throw ConfigError("generator: image size must be in [32, 256]");
    if (width % 16 != 0 || height % 16 != 0)
        throw ConfigError("generator: image size must be divisible by 16");
    if (min_objects < 0 || max_objects > kMaxObjects ||
        min_objects > max_objects)
        throw ConfigError("generator: object count range must be within [0, " +
                          std::to_string(kMaxObjects) + "]");
    if (min_size < 4 || min_size > max_size)
        throw ConfigError("generator: object size range invalid (min 4)");
    if (max_size > std::min(width, height))
        throw ConfigError("generator: max object size exceeds image bounds");
    if (thermal_jitter_range < 0.0 || thermal_jitter_range > 0.05)
        throw ConfigError("generator: thermal_jitter_range must be in [0, 0.05]");
    if (!is_known_class(background_class))
        throw ConfigError("generator: unknown background class '" +
                          background_class + "'");
    for (const auto& [cls, w] : class_weights) {
        if (!is_known_class(cls))
            throw ConfigError("generator: unknown class '" + cls + "' in weights");
        if (w < 0.0) throw ConfigError("generator: negative class weight");
    }
}

std::array<double, 3> class_base_color(const std::string& class_name) {
    if (class_name == "person") return {0.80, 0.30, 0.25};
    if (class_name == "car") return {0.25, 0.35, 0.80};
    if (class_name == "tree") return {0.15, 0.60, 0.20};
    if (class_name == "building") return {0.55, 0.50, 0.45};
    if (class_name == "road") return {0.30, 0.30, 0.32};
    if (class_name == "sky") return {0.55, 0.70, 0.95};
    throw ConfigError("unknown class '" + class_name + "'");
}

namespace {

std::string pick_class(Rng& rng, const std::map<std::string, double>& weights) {
    double total = 0.0;
    for (const auto& [_, w] : weights) total += w;
    if (total <= 0.0) throw ConfigError("generator: class weights sum to zero");
    double r = rng.uniform() * total;
    for (const auto& [cls, w] : weights) {
        r -= w;
        if (r < 0.0) return cls;
    }
    return weights.rbegin()->first;
}

}  // namespace

SceneSpec sample_scene(uint64_t seed, const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(seed, "scene"));

    SceneSpec spec;
    spec.seed = seed;
    spec.width = cfg.width;
    spec.height = cfg.height;
    spec.background_class = cfg.background_class;
    spec.illumination = rng.uniform(0.5, 1.0);

    auto weights =
        cfg.class_weights.empty() ? GeneratorConfig::default_class_weights()
                                  : cfg.class_weights;

    int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    spec.objects.reserve(size_t(count));
    for (int i = 0; i < count; ++i) {
        ObjectSpec obj;
        obj.class_name = pick_class(rng, weights);
        int shape_pick = rng.uniform_int(0, 2);
        obj.shape = shape_pick == 0 ? ObjectShape::Ellipse
                    : shape_pick == 1 ? ObjectShape::Rectangle
                                      : ObjectShape::Blob;
        obj.size_w = rng.uniform_int(cfg.min_size, cfg.max_size);
        obj.size_h = rng.uniform_int(cfg.min_size, cfg.max_size);
        obj.x = rng.uniform_int(0, cfg.width - obj.size_w);
        obj.y = rng.uniform_int(0, cfg.height - obj.size_h);

        auto base = class_base_color(obj.class_name);
        for (int c = 0; c < 3; ++c)
            obj.visible_color[size_t(c)] = std::clamp(
                base[size_t(c)] + rng.uniform(-cfg.color_jitter, cfg.color_jitter),
                0.0, 1.0);
        obj.thermal_jitter =
            cfg.thermal_jitter_range == 0.0
                ? 0.0
                : rng.uniform(-cfg.thermal_jitter_range, cfg.thermal_jitter_range);

        if (obj.shape == ObjectShape::Blob) {
            int disks = rng.uniform_int(2, 4);
            for (int d = 0; d < disks; ++d) {
                ObjectSpec::BlobDisk disk;
                disk.r = rng.uniform(0.18, 0.38);
                disk.cx = rng.uniform(disk.r, 1.0 - disk.r);
                disk.cy = rng.uniform(disk.r, 1.0 - disk.r);
                obj.blob_disks.push_back(disk);
            }
        }
        spec.objects.push_back(std::move(obj));
    }
    return spec;
}

std::vector<uint8_t> rasterize_footprint(const ObjectSpec& obj, int height,
                                         int width) {
    std::vector<uint8_t> mask(size_t(height) * width, 0);
    int x1 = std::min(obj.x + obj.size_w, width);
    int y1 = std::min(obj.y + obj.size_h, height);
    double w = obj.size_w, h = obj.size_h;
    for (int y = std::max(0, obj.y); y < y1; ++y) {
        for (int x = std::max(0, obj.x); x < x1; ++x) {
            // Pixel-center test in footprint-relative unit coordinates.
            double u = (x - obj.x + 0.5) / w;
            double v = (y - obj.y + 0.5) / h;
            bool inside = false;
            switch (obj.shape) {
                case ObjectShape::Rectangle:
                    inside = true;
                    break;
                case ObjectShape::Ellipse: {
                    double du = 2.0 * (u - 0.5), dv = 2.0 * (v - 0.5);
                    inside = du * du + dv * dv <= 1.0;
                    break;
                }
                case ObjectShape::Blob: {
                    // Metaball field: sum of r^2 / d^2 over disks.
                    double field = 0.0;
                    for (const auto& d : obj.blob_disks) {
                        double du = u - d.cx, dv = v - d.cy;
                        double dist2 = du * du + dv * dv + 1e-12;
                        field += (d.r * d.r) / dist2;
                    }
                    inside = field >= 1.0;
                    break;
                }
            }
            if (inside) mask[size_t(y) * width + x] = 1;
        }
    }
    return mask;
}

std::vector<int> rasterize_index_map(const SceneSpec& spec) {
    std::vector<int> map(size_t(spec.height) * spec.width, -1);
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        auto fp = rasterize_footprint(spec.objects[i], spec.height, spec.width);
        for (size_t p = 0; p < fp.size(); ++p)
            if (fp[p]) map[p] = int(i);
    }
    return map;
}

Image render_visible(const SceneSpec& spec) {
    if (int(spec.objects.size()) > kMaxObjects)
        throw ArgumentError("scene has more than 16 objects");
    Image img(spec.height, spec.width, 3);
    auto bg = class_base_color(spec.background_class);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = bg[size_t(c)] * spec.illumination;

    for (const auto& obj : spec.objects) {
        auto fp = rasterize_footprint(obj, spec.height, spec.width);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                if (fp[size_t(y) * spec.width + x])
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) =
                            obj.visible_color[size_t(c)] * spec.illumination;
    }
    return clamp01(std::move(img));
}

Image render_infrared(const SceneSpec& spec, Band band,
                      const EmissivityTable& table, uint64_t noise_seed) {
    table.validate();
    Image img(spec.height, spec.width, 1);
    double bg = table.lookup(spec.background_class, band);
    for (double& v : img.data) v = bg;

    for (const auto& obj : spec.objects) {
        double base = table.lookup(obj.class_name, band) + obj.thermal_jitter;
        auto fp = rasterize_footprint(obj, spec.height, spec.width);
        for (size_t p = 0; p < fp.size(); ++p)
            if (fp[p]) img.data[p] = base;
    }

    if (table.noise_sigma > 0.0) {
        Rng rng(mix_seed(noise_seed, "ir-noise"));
        for (double& v : img.data) v += table.noise_sigma * rng.normal();
    }
    return clamp01(std::move(img));
}

}  // namespace fvita
