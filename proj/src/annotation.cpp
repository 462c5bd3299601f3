#include "fvita/annotation.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fvita/errors.hpp"
#include "fvita/io_util.hpp"
#include "fvita/rng.hpp"

namespace fvita {

using nlohmann::json;

int64_t BinaryMask::area() const {
    return std::accumulate(data.begin(), data.end(), int64_t(0));
}

Box tight_box(const BinaryMask& mask) {
    Box b{mask.width, mask.height, 0, 0};
    bool any = false;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x)) {
                any = true;
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x + 1);
                b.y1 = std::max(b.y1, y + 1);
            }
    if (!any) throw ArgumentError("tight_box: empty mask");
    return b;
}

std::string_view annotation_source_name(AnnotationSource s) {
    switch (s) {
        case AnnotationSource::Oracle: return "oracle";
        case AnnotationSource::Degraded: return "degraded";
        case AnnotationSource::File: return "file";
    }
    return "?";
}

void AnnotationSet::validate() const {
    if (height <= 0 || width <= 0)
        throw ArgumentError("annotation set: invalid image size");
    if (items.size() > 64)
        throw ArgumentError("annotation set: more than 64 items");
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        if (it.mask.height != height || it.mask.width != width)
            throw ArgumentError("annotation " + std::to_string(i) +
                                ": mask size mismatch");
        if (it.mask.empty())
            throw ArgumentError("annotation " + std::to_string(i) +
                                ": empty mask");
        if (it.box.x0 >= it.box.x1 || it.box.y0 >= it.box.y1 ||
            it.box.x0 < 0 || it.box.y0 < 0 || it.box.x1 > width ||
            it.box.y1 > height)
            throw ArgumentError("annotation " + std::to_string(i) +
                                ": invalid box");
        if (it.label.empty())
            throw ArgumentError("annotation " + std::to_string(i) +
                                ": empty label");
    }
}

AnnotationSet annotate_oracle(const SceneSpec& spec) {
    AnnotationSet set;
    set.height = spec.height;
    set.width = spec.width;
    set.source = AnnotationSource::Oracle;

    auto index_map = rasterize_index_map(spec);
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        BinaryMask mask(spec.height, spec.width);
        int64_t area = 0;
        for (size_t p = 0; p < index_map.size(); ++p)
            if (index_map[p] == int(i)) {
                mask.data[p] = 1;
                ++area;
            }
        if (area == 0) continue;  // fully occluded: dropped, never emitted empty
        ObjectAnnotation ann;
        ann.label = spec.objects[i].class_name;
        ann.box = tight_box(mask);
        ann.mask = std::move(mask);
        set.items.push_back(std::move(ann));
    }
    set.validate();
    return set;
}

namespace {

BinaryMask morph(const BinaryMask& mask, int radius, bool dilate_mode) {
    if (radius <= 0) return mask;
    BinaryMask out(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            bool hit = !dilate_mode;
            for (int dy = -radius; dy <= radius && hit == !dilate_mode; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    bool v = yy >= 0 && yy < mask.height && xx >= 0 &&
                             xx < mask.width && mask.at(yy, xx);
                    if (dilate_mode && v) {
                        hit = true;
                        break;
                    }
                    if (!dilate_mode && !v) {
                        hit = false;
                        break;
                    }
                }
            out.at(y, x) = hit ? 1 : 0;
        }
    return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) {
    return morph(mask, radius, false);
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
    return morph(mask, radius, true);
}

AnnotationSet degrade_annotations(const AnnotationSet& set,
                                  const DegradeConfig& cfg, uint64_t seed) {
    if (cfg.p_drop < 0.0 || cfg.p_drop > 1.0 || cfg.p_confuse < 0.0 ||
        cfg.p_confuse > 1.0 || cfg.max_morph_radius < 0)
        throw ConfigError("degrade: invalid noise configuration");
    set.validate();

    AnnotationSet out;
    out.height = set.height;
    out.width = set.width;
    out.source = AnnotationSource::Degraded;

    for (size_t i = 0; i < set.items.size(); ++i) {
        Rng rng(mix_seed(mix_seed(seed, uint64_t(i)), "degrade"));
        if (rng.bernoulli(cfg.p_drop)) continue;

        ObjectAnnotation ann = set.items[i];
        if (cfg.max_morph_radius > 0) {
            int radius = rng.uniform_int(0, cfg.max_morph_radius);
            bool grow = rng.bernoulli(0.5);
            ann.mask = grow ? dilate(ann.mask, radius) : erode(ann.mask, radius);
            if (ann.mask.empty()) continue;  // eroded away entirely
        }
        if (cfg.p_confuse > 0.0 && rng.bernoulli(cfg.p_confuse)) {
            auto it = cfg.confusion_map.find(ann.label);
            if (it != cfg.confusion_map.end() && !it->second.empty())
                ann.label = it->second[size_t(
                    rng.uniform_int(0, int(it->second.size()) - 1))];
        }
        ann.box = tight_box(ann.mask);
        out.items.push_back(std::move(ann));
    }
    out.validate();
    return out;
}

std::vector<int64_t> rle_encode(const BinaryMask& mask) {
    std::vector<int64_t> runs;
    uint8_t current = 0;  // first run counts zeros
    int64_t run = 0;
    for (uint8_t v : mask.data) {
        uint8_t bit = v ? 1 : 0;
        if (bit == current) {
            ++run;
        } else {
            runs.push_back(run);
            current = bit;
            run = 1;
        }
    }
    runs.push_back(run);
    return runs;
}

BinaryMask rle_decode(const std::vector<int64_t>& runs, int height, int width) {
    BinaryMask mask(height, width);
    int64_t total = int64_t(height) * width;
    int64_t pos = 0;
    uint8_t value = 0;
    for (int64_t run : runs) {
        if (run < 0) throw ParseError("rle: negative run length");
        if (pos + run > total) throw ParseError("rle: runs exceed mask size");
        if (value)
            std::fill(mask.data.begin() + pos, mask.data.begin() + pos + run,
                      uint8_t(1));
        pos += run;
        value ^= 1;
    }
    if (pos != total)
        throw ParseError("rle: run sum " + std::to_string(pos) +
                         " != mask size " + std::to_string(total));
    return mask;
}

std::string annotation_set_to_json(const AnnotationSet& set) {
    set.validate();
    json j;
    j["schema"] = kAnnotationSchema;
    j["image_size"] = {set.height, set.width};
    j["items"] = json::array();
    for (const auto& ann : set.items) {
        json item;
        item["label"] = ann.label;
        item["box"] = {ann.box.x0, ann.box.y0, ann.box.x1, ann.box.y1};
        item["mask_rle"] = rle_encode(ann.mask);
        j["items"].push_back(std::move(item));
    }
    return j.dump(2) + "\n";
}

AnnotationSet annotation_set_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("annotation file: invalid JSON: ") +
                         e.what());
    }
    if (!j.contains("schema") || !j["schema"].is_string())
        throw ParseError("annotation file: missing schema field");
    if (j["schema"].get<std::string>() != kAnnotationSchema)
        throw VersionError("annotation file: unknown schema '" +
                           j["schema"].get<std::string>() + "', expected '" +
                           kAnnotationSchema + "'");
    AnnotationSet set;
    set.source = AnnotationSource::File;
    try {
        set.height = j.at("image_size").at(0).get<int>();
        set.width = j.at("image_size").at(1).get<int>();
    } catch (const json::exception&) {
        throw ParseError("annotation file: bad image_size");
    }
    if (!j.contains("items") || !j["items"].is_array())
        throw ParseError("annotation file: missing items array");

    for (size_t i = 0; i < j["items"].size(); ++i) {
        const auto& item = j["items"][i];
        ObjectAnnotation ann;
        try {
            ann.label = item.at("label").get<std::string>();
            ann.box.x0 = item.at("box").at(0).get<int>();
            ann.box.y0 = item.at("box").at(1).get<int>();
            ann.box.x1 = item.at("box").at(2).get<int>();
            ann.box.y1 = item.at("box").at(3).get<int>();
        } catch (const json::exception&) {
            throw ParseError("annotation item " + std::to_string(i) +
                             ": malformed fields");
        }
        std::vector<int64_t> runs;
        try {
            runs = item.at("mask_rle").get<std::vector<int64_t>>();
        } catch (const json::exception&) {
            throw ParseError("annotation item " + std::to_string(i) +
                             ": malformed mask_rle");
        }
        try {
            ann.mask = rle_decode(runs, set.height, set.width);
        } catch (const ParseError& e) {
            throw ParseError("annotation item " + std::to_string(i) + ": " +
                             e.what());
        }
        if (ann.mask.empty())
            throw ParseError("annotation item " + std::to_string(i) +
                             ": empty mask");
        set.items.push_back(std::move(ann));
    }
    set.validate();
    return set;
}

void save_annotation_set(const AnnotationSet& set, const std::string& path) {
    atomic_write_file(path, annotation_set_to_json(set));
}

AnnotationSet load_annotation_set(const std::string& path) {
    return annotation_set_from_json(read_file(path));
}

}  // namespace fvita
