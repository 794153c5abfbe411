// SPDX-License-Identifier: Apache-2.0
//
// Synthetic verifiable arithmetic: chained single-digit {+, -, *} expressions
// evaluated left to right modulo a small modulus.
//
//   prompt    Q 3 + 4 * 2 ?
//   solution  + 4 = 7 ; * 2 = 4 ; A 4 E
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cepo/common/vocab.hpp"

namespace cepo::synthmath {

struct Problem {
    std::uint64_t id = 0;
    Tokens prompt;
    Tokens ground_truth;
    int difficulty = 0;  ///< number of operations
    int modulus = 10;
};

struct VerifierResult {
    int reward = 0;
    std::optional<Tokens> extracted_answer;
};

struct DatasetSpec {
    std::size_t n = 1;
    int k_ops = 4;
    int modulus = 10;
    std::uint64_t seed = 0;
};

/// Seed offset separating the held-out split from the training split.
inline constexpr std::uint64_t kHeldOutSeedOffset = 1'000'003;

/// Deterministic in the seed. Answers are balanced across residues: a target
/// residue is drawn first and expressions are redrawn until they hit it.
/// Throws std::invalid_argument on n < 1, k_ops < 1 or modulus outside [2, 10].
std::vector<Problem> generate_dataset(const DatasetSpec& spec);

/// Left-to-right evaluation of a rendered prompt; independent of generation.
int evaluate_expression(std::span<const TokenId> prompt, int modulus);

/// Extract the span between the answer marker and end-of-answer. Responses
/// with no marker, several markers, no end token or an empty span have no
/// answer and score 0.
VerifierResult verify(const Problem& p, std::span<const TokenId> response);

/// The answer span alone, same rules as verify.
std::optional<Tokens> extract_answer(std::span<const TokenId> response);

/// Worked step-by-step solution ending in "A <answer> E".
Tokens render_solution(const Problem& p);

/// Response containing only the final answer block.
Tokens render_answer(std::span<const TokenId> answer);

/// Dataset file: one problem per line, "prompt<TAB>ground_truth<TAB>difficulty".
void write_dataset(const std::filesystem::path& path, std::span<const Problem> problems);
/// Problem ids are line indices. Tolerates a single trailing newline only.
std::vector<Problem> read_dataset(const std::filesystem::path& path, int modulus);

} // namespace cepo::synthmath
