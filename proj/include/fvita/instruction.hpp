#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fvita/common.hpp"

namespace fvita {

struct InstructionTemplate {
    int template_id = 0;
    std::string text;  // contains the <type> placeholder exactly once
};

// The 50-template instruction scheme. Immutable after load; template 0 is
// the base sentence, the remaining 49 are frozen synonyms shipped as a data
// file (one template per line, line index = template_id).
class InstructionBank {
  public:
    static constexpr int kSize = 50;

    static InstructionBank load(const std::string& path);
    static InstructionBank from_text(const std::string& text);

    // Resolution order: explicit path, $FVITA_DATA_DIR, compiled-in default.
    static std::string default_path();
    static InstructionBank load_default();

    const std::vector<InstructionTemplate>& templates() const {
        return templates_;
    }
    int size() const { return int(templates_.size()); }

    // Substitutes the band word for <type>; no placeholder remains.
    std::string render(int template_id, Band band) const;

    const std::string& version() const { return version_; }
    uint64_t content_hash() const { return content_hash_; }

  private:
    std::vector<InstructionTemplate> templates_;
    std::string version_ = kTemplateBankVersion;
    uint64_t content_hash_ = 0;
};

// Returns the band whose word appears in the text (word-boundary match);
// nullopt when no band word or more than one distinct band word appears.
std::optional<Band> parse_band(const std::string& text);

}  // namespace fvita
