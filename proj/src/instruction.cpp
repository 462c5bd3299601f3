#include "fvita/instruction.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <sstream>

#include "fvita/errors.hpp"
#include "fvita/io_util.hpp"
#include "fvita/rng.hpp"

#ifndef FVITA_DEFAULT_DATA_DIR
#define FVITA_DEFAULT_DATA_DIR "."
#endif

namespace fvita {

namespace {

constexpr const char* kPlaceholder = "<type>";
constexpr const char* kBaseTemplate =
    "Create an infrared version of the given image. Make it <type> wave "
    "infrared.";

int count_occurrences(const std::string& text, const std::string& needle) {
    int n = 0;
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalpha(static_cast<unsigned char>(ch))) {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

}  // namespace

InstructionBank InstructionBank::from_text(const std::string& text) {
    InstructionBank bank;
    bank.content_hash_ = fnv1a64_bytes(text.data(), text.size());

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        InstructionTemplate t;
        t.template_id = int(bank.templates_.size());
        t.text = line;
        bank.templates_.push_back(std::move(t));
    }

    if (bank.size() != kSize)
        throw ConfigError("instruction bank: expected " + std::to_string(kSize) +
                          " templates, found " + std::to_string(bank.size()));

    std::set<std::string> distinct;
    for (const auto& t : bank.templates_) {
        if (count_occurrences(t.text, kPlaceholder) != 1)
            throw ConfigError("instruction bank: template " +
                              std::to_string(t.template_id) +
                              " must contain <type> exactly once");
        if (!distinct.insert(t.text).second)
            throw ConfigError("instruction bank: duplicate template " +
                              std::to_string(t.template_id));
        // Band words may only enter via substitution, otherwise
        // parse_band(render(...)) would be ambiguous.
        for (const auto& w : tokenize_words(t.text))
            if (band_from_name(w))
                throw ConfigError("instruction bank: template " +
                                  std::to_string(t.template_id) +
                                  " contains a literal band word");
    }
    if (bank.templates_[0].text != kBaseTemplate)
        throw ConfigError("instruction bank: template 0 must be the base "
                          "sentence");
    return bank;
}

InstructionBank InstructionBank::load(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(std::string("instruction bank: ") + e.what());
    }
    return from_text(text);
}

std::string InstructionBank::default_path() {
    if (const char* dir = std::getenv("FVITA_DATA_DIR"))
        return std::string(dir) + "/instruction_templates_v1.txt";
    return std::string(FVITA_DEFAULT_DATA_DIR) + "/instruction_templates_v1.txt";
}

InstructionBank InstructionBank::load_default() {
    return load(default_path());
}

std::string InstructionBank::render(int template_id, Band band) const {
    if (template_id < 0 || template_id >= size())
        throw ArgumentError("render_instruction: template_id " +
                            std::to_string(template_id) + " out of [0, " +
                            std::to_string(size() - 1) + "]");
    std::string out = templates_[size_t(template_id)].text;
    size_t pos = out.find(kPlaceholder);
    out.replace(pos, std::string(kPlaceholder).size(), band_name(band));
    return out;
}

std::optional<Band> parse_band(const std::string& text) {
    std::set<Band> found;
    for (const auto& w : tokenize_words(text))
        if (auto b = band_from_name(w)) found.insert(*b);
    if (found.size() == 1) return *found.begin();
    return std::nullopt;
}

}  // namespace fvita
