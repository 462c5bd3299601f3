#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fvita/common.hpp"
#include "fvita/image.hpp"

namespace fvita {

enum class ObjectShape { Ellipse, Rectangle, Blob };

std::string_view shape_name(ObjectShape s);

// One drawable object. Footprint is the axis-aligned box
// [x, x+size_w) x [y, y+size_h) intersected with the shape; it always lies
// fully inside the image.
struct ObjectSpec {
    std::string class_name;
    ObjectShape shape = ObjectShape::Rectangle;
    int x = 0, y = 0;           // top-left corner, pixels
    int size_w = 4, size_h = 4; // >= 4x4
    std::array<double, 3> visible_color = {0.5, 0.5, 0.5};
    double thermal_jitter = 0.0;  // in [-0.05, 0.05]
    // Blob geometry: 2-4 disks in footprint-relative unit coordinates.
    struct BlobDisk {
        double cx, cy, r;
    };
    std::vector<BlobDisk> blob_disks;
};

// Procedural scene description. Both renders are pure functions of this.
struct SceneSpec {
    uint64_t seed = 0;
    int width = 64, height = 64;
    std::vector<ObjectSpec> objects;  // drawn back-to-front in list order
    std::string background_class = "road";
    double illumination = 1.0;  // in [0.5, 1.0], applied to visible only

    bool operator==(const SceneSpec&) const;
};

bool operator==(const ObjectSpec& a, const ObjectSpec& b);

// Per (class, band) base IR intensity plus the render noise level.
struct EmissivityTable {
    std::string version = kEmissivityVersion;
    double noise_sigma = 0.02;
    // entries[class][band index per kAllBands order] in [0,1]
    std::map<std::string, std::array<double, 3>> entries;

    double lookup(const std::string& class_name, Band band) const;
    void validate() const;

    // The shipped "v1" table: hot pedestrians in LWIR, NIR-bright foliage.
    static EmissivityTable defaults();
};

struct GeneratorConfig {
    int width = 64, height = 64;
    int min_objects = 2, max_objects = 7;   // range must be within [0, 16]
    int min_size = 8, max_size = 26;        // object bbox side, pixels
    double thermal_jitter_range = 0.05;     // 0 disables jitter
    double color_jitter = 0.08;
    std::string background_class = "road";
    std::map<std::string, double> class_weights;  // empty = built-in default

    void validate() const;
    static std::map<std::string, double> default_class_weights();
};

// Deterministic: identical (seed, cfg) give identical SceneSpec.
SceneSpec sample_scene(uint64_t seed, const GeneratorConfig& cfg);

// Boolean footprint of a single object on a height x width grid. Shared by
// both renderers and the oracle annotator so masks match renders exactly.
std::vector<uint8_t> rasterize_footprint(const ObjectSpec& obj, int height,
                                         int width);

// Object-index map after back-to-front overwrite: -1 background, else index
// into spec.objects.
std::vector<int> rasterize_index_map(const SceneSpec& spec);

Image render_visible(const SceneSpec& spec);

// IR render: per-pixel clamp(table[class,band] + thermal_jitter + N(0,sigma)).
// Background pixels are treated the same (no jitter term). Illumination does
// not apply here.
Image render_infrared(const SceneSpec& spec, Band band,
                      const EmissivityTable& table, uint64_t noise_seed);

// Visible base color per class; exposed so tests can assert renders.
std::array<double, 3> class_base_color(const std::string& class_name);

}  // namespace fvita
