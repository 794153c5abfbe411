// SPDX-License-Identifier: Apache-2.0
//
// The synthetic vocabulary. Every token renders as a single glyph, so token
// sequences round-trip through plain strings.
//
//   0-9   digits
//   + - * operators
//   =     "equals" inside a worked step
//   ;     end of a worked step
//   Q ?   question / ask markers around the expression
//   H |   hint marker and hint separator around a reference answer
//   A E   answer marker and end-of-answer
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cepo {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

namespace tok {
inline constexpr TokenId kDigit0 = 0;
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kMinus = 11;
inline constexpr TokenId kTimes = 12;
inline constexpr TokenId kEquals = 13;
inline constexpr TokenId kStepEnd = 14;
inline constexpr TokenId kQuestion = 15;
inline constexpr TokenId kAsk = 16;
inline constexpr TokenId kHint = 17;
inline constexpr TokenId kSep = 18;
inline constexpr TokenId kAns = 19;
inline constexpr TokenId kEnd = 20;
inline constexpr std::size_t kVocabSize = 21;

constexpr TokenId digit(int d) noexcept { return kDigit0 + d; }
constexpr bool is_digit(TokenId t) noexcept { return t >= kDigit0 && t < kDigit0 + 10; }
constexpr int digit_value(TokenId t) noexcept { return t - kDigit0; }
constexpr bool is_operator(TokenId t) noexcept { return t == kPlus || t == kMinus || t == kTimes; }
/// Tokens with no arithmetic content: markers and punctuation.
constexpr bool is_filler(TokenId t) noexcept { return !is_digit(t) && !is_operator(t); }
} // namespace tok

char glyph(TokenId id);
/// Throws std::invalid_argument for characters outside the vocabulary.
TokenId token_of(char glyph);

std::string render(std::span<const TokenId> tokens);
Tokens parse_tokens(std::string_view text);

void write_vocab_file(const std::filesystem::path& path);
/// Reads "index<TAB>glyph" lines and checks them against the built-in table.
std::vector<char> read_vocab_file(const std::filesystem::path& path);

} // namespace cepo
