#include "fvita/common.hpp"

#include <algorithm>

namespace fvita {

std::optional<Band> band_from_name(std::string_view name) {
    if (name == "near") return Band::Near;
    if (name == "mid") return Band::Mid;
    if (name == "long") return Band::Long;
    return std::nullopt;
}

bool is_known_class(std::string_view name) {
    return std::find(kClassVocabulary.begin(), kClassVocabulary.end(), name) !=
           kClassVocabulary.end();
}

}  // namespace fvita
