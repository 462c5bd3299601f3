#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fvita/scene.hpp"

namespace fvita {

struct BinaryMask {
    int height = 0, width = 0;
    std::vector<uint8_t> data;  // row-major, 0/1

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), data(size_t(h) * w, 0) {}

    uint8_t& at(int y, int x) { return data[size_t(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[size_t(y) * width + x]; }
    int64_t area() const;
    bool empty() const { return area() == 0; }
    bool operator==(const BinaryMask&) const = default;
};

// Half-open tight bounding box [x0, x1) x [y0, y1).
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool operator==(const Box&) const = default;
};

Box tight_box(const BinaryMask& mask);

struct ObjectAnnotation {
    std::string label;
    BinaryMask mask;  // >= 1 true pixel
    Box box;
    bool operator==(const ObjectAnnotation&) const = default;
};

enum class AnnotationSource { Oracle, Degraded, File };
std::string_view annotation_source_name(AnnotationSource s);

struct AnnotationSet {
    int height = 0, width = 0;
    std::vector<ObjectAnnotation> items;  // at most 64 before truncation
    AnnotationSource source = AnnotationSource::Oracle;

    void validate() const;
    bool operator==(const AnnotationSet& o) const {
        return height == o.height && width == o.width && items == o.items;
    }
};

// Exact per-object masks recovered from the scene spec: one annotation per
// object whose footprint survives back-to-front overwrite; fully occluded
// objects are dropped. Order follows spec.objects.
AnnotationSet annotate_oracle(const SceneSpec& spec);

// Simulated zero-shot imperfection.
struct DegradeConfig {
    double p_drop = 0.0;
    int max_morph_radius = 0;  // erosion/dilation radius drawn from [0, r]
    double p_confuse = 0.0;
    std::map<std::string, std::vector<std::string>> confusion_map;
};

AnnotationSet degrade_annotations(const AnnotationSet& set,
                                  const DegradeConfig& cfg, uint64_t seed);

// Chebyshev-ball binary morphology (square structuring element).
BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);

// Row-major alternating-run RLE; first run counts zeros (possibly 0), runs
// sum to H*W.
std::vector<int64_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const std::vector<int64_t>& runs, int height, int width);

// JSON annotation file ({schema:"fvita-ann-1", image_size, items:[...]}).
// load(save(x)) == x exactly.
void save_annotation_set(const AnnotationSet& set, const std::string& path);
AnnotationSet load_annotation_set(const std::string& path);

std::string annotation_set_to_json(const AnnotationSet& set);
AnnotationSet annotation_set_from_json(const std::string& json_text);

}  // namespace fvita
