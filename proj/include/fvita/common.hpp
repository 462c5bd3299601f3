#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace fvita {

// Spectral bands selectable through the instruction's <type> slot.
enum class Band { Near, Mid, Long };

constexpr std::array<Band, 3> kAllBands = {Band::Near, Band::Mid, Band::Long};

inline std::string_view band_name(Band b) {
    switch (b) {
        case Band::Near: return "near";
        case Band::Mid: return "mid";
        case Band::Long: return "long";
    }
    return "?";
}

std::optional<Band> band_from_name(std::string_view name);

// Closed class vocabulary of the synthetic scenes.
constexpr std::array<std::string_view, 6> kClassVocabulary = {
    "person", "car", "tree", "building", "road", "sky"};

bool is_known_class(std::string_view name);

// Hard cap on objects per scene and on object tokens per conditioning bundle.
inline constexpr int kMaxObjects = 16;

// Version / schema strings.
inline constexpr const char* kGeneratorVersion = "v1";
inline constexpr const char* kEmissivityVersion = "v1";
inline constexpr const char* kTemplateBankVersion = "v1";
inline constexpr const char* kDatasetSchema = "fvita-dataset-1";
inline constexpr const char* kAnnotationSchema = "fvita-ann-1";
inline constexpr const char* kCheckpointSchema = "fvita-ckpt-1";
inline constexpr const char* kMetricsSchema = "fvita-metrics-1";

}  // namespace fvita
