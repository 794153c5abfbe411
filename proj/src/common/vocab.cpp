// SPDX-License-Identifier: Apache-2.0
#include "cepo/common/vocab.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cepo {

namespace {
constexpr std::array<char, tok::kVocabSize> kGlyphs = {'0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '+',
                                                      '-', '*', '=', ';', 'Q', '?', 'H', '|', 'A', 'E'};
} // namespace

char glyph(TokenId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= kGlyphs.size()) {
        throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary");
    }
    return kGlyphs[static_cast<std::size_t>(id)];
}

TokenId token_of(char g) {
    for (std::size_t i = 0; i < kGlyphs.size(); ++i) {
        if (kGlyphs[i] == g) return static_cast<TokenId>(i);
    }
    throw std::invalid_argument(std::string("glyph '") + g + "' outside vocabulary");
}

std::string render(std::span<const TokenId> tokens) {
    std::string s;
    s.reserve(tokens.size());
    for (TokenId t : tokens) s.push_back(glyph(t));
    return s;
}

Tokens parse_tokens(std::string_view text) {
    Tokens out;
    out.reserve(text.size());
    for (char c : text) out.push_back(token_of(c));
    return out;
}

void write_vocab_file(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < kGlyphs.size(); ++i) os << i << '\t' << kGlyphs[i] << '\n';
}

std::vector<char> read_vocab_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::vector<char> glyphs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t idx = 0;
        char tab = 0, g = 0;
        if (!(ls >> idx) || !ls.get(tab) || tab != '\t' || !ls.get(g) || idx != glyphs.size()) {
            throw std::runtime_error("malformed vocabulary line: " + line);
        }
        glyphs.push_back(g);
    }
    if (glyphs.size() != kGlyphs.size()) throw std::runtime_error("vocabulary size mismatch in " + path.string());
    for (std::size_t i = 0; i < glyphs.size(); ++i) {
        if (glyphs[i] != kGlyphs[i]) throw std::runtime_error("vocabulary glyph mismatch at index " + std::to_string(i));
    }
    return glyphs;
}

} // namespace cepo
