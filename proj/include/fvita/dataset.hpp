#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fvita/annotation.hpp"
#include "fvita/common.hpp"
#include "fvita/image.hpp"
#include "fvita/scene.hpp"

namespace fvita {

// One visible/infrared training pair with its annotations.
struct PairedSample {
    std::string sample_id;
    Image visible;   // H x W x 3
    Image infrared;  // H x W x 1
    Band band = Band::Long;
    AnnotationSet annotations;
};

struct DatasetConfig {
    GeneratorConfig generator;
    int train_count = 10;
    int test_count = 4;
    std::vector<Band> bands = {Band::Long};  // sample i gets bands[i % n]
    uint64_t seed = 0;
    EmissivityTable table = EmissivityTable::defaults();

    void validate() const;
    static DatasetConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

struct DatasetManifest {
    std::string schema = kDatasetSchema;
    std::string generator_version = kGeneratorVersion;
    uint64_t seed = 0;
    std::vector<Band> bands;
    int width = 0, height = 0;
    EmissivityTable table;
    int train_count = 0;
    int test_count = 0;

    std::string to_json_text() const;
    static DatasetManifest from_json_text(const std::string& text);
};

// Writes the dataset layout:
//   root/manifest.json
//   root/{train|test}/visible/<id>.png      8-bit RGB
//   root/{train|test}/infrared/<id>.png     8-bit grayscale
//   root/{train|test}/annotations/<id>.json
//   root/{train|test}/band/<id>.txt         near|mid|long
// Generation happens in a temp directory that is renamed into place, so an
// interrupted run leaves no partial dataset at out_dir.
DatasetManifest generate_dataset(const DatasetConfig& cfg,
                                 const std::string& out_dir);

// Band assignment used by the generator (also the histogram contract).
Band band_for_index(const std::vector<Band>& bands, int index);

// Per-sample seeds; schedule-independent so generation may parallelize.
uint64_t sample_noise_seed(uint64_t dataset_seed, const std::string& split,
                           int index);
uint64_t sample_scene_seed(uint64_t dataset_seed, const std::string& split,
                           int index);

// Read side of the contract.
DatasetManifest load_manifest(const std::string& root);
std::vector<std::string> list_sample_ids(const std::string& root,
                                         const std::string& split);
PairedSample load_sample(const std::string& root, const std::string& split,
                         const std::string& sample_id);

}  // namespace fvita
