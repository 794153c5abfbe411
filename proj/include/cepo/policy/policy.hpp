// SPDX-License-Identifier: Apache-2.0
//
// A small pre-norm decoder-only transformer over the synthetic vocabulary.
// The same parameters score a rollout under three contexts: the student
// prompt x, and the teacher prompts x ⊕ H r⁺ | and x ⊕ H r⁻ |.
//
// Reference blocks get their own learned position slots (after the
// max_seq_len main slots), and the ask marker that ends x is fed after the
// block. Every token of x and of the rollout therefore keeps the same token
// and position in all three contexts, and the only way a reference block can
// move a rollout log-prob is attention into the block. Hiding the block from
// those queries reproduces the student numbers exactly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cepo/autodiff/checkpoint.hpp"
#include "cepo/autodiff/ops.hpp"
#include "cepo/common/rng.hpp"
#include "cepo/common/vocab.hpp"

namespace cepo::policy {

struct PolicyConfig {
    std::size_t vocab_size = tok::kVocabSize;
    std::size_t max_seq_len = 64;
    std::size_t max_ref_len = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_ff = 256;

    /// Throws std::invalid_argument when a field is zero or d_model is not
    /// divisible by n_heads.
    void validate() const;
};

struct LayerParams {
    ad::Tensor ln1_gain, ln1_bias;
    ad::Tensor w_qkv, b_qkv;  ///< [d, 3d], [3d]
    ad::Tensor w_out, b_out;  ///< [d, d], [d]
    ad::Tensor ln2_gain, ln2_bias;
    ad::Tensor w_ff1, b_ff1;  ///< [d, d_ff], [d_ff]
    ad::Tensor w_ff2, b_ff2;  ///< [d_ff, d], [d]
};

class PolicyParams {
public:
    PolicyParams() = default;

    /// Small normal initialization; layer norms start at identity.
    static PolicyParams init(const PolicyConfig& config, std::uint64_t seed);

    const PolicyConfig& config() const noexcept { return config_; }

    ad::Tensor token_embedding, position_embedding;  ///< [V, d], [max_seq_len + max_ref_len, d]
    std::vector<LayerParams> layers;
    ad::Tensor final_gain, final_bias;
    ad::Tensor head_w, head_b;  ///< [d, V], [V]

    /// Handles (shared storage) in a fixed order with stable names.
    ad::TensorList named() const;
    std::vector<ad::Tensor> tensors() const;
    std::size_t parameter_count() const;

    /// Deep copy with fresh storage.
    PolicyParams clone() const;
    void set_requires_grad(bool on);
    void zero_grad();
    /// Copy values from another parameter set of the same shape.
    void assign(const PolicyParams& other);

    void save(const std::filesystem::path& path) const;
    static PolicyParams load(const std::filesystem::path& path);

private:
    PolicyConfig config_;
};

bool params_equal(const PolicyParams& a, const PolicyParams& b);

// ---------------------------------------------------------------------------
// Teacher prompts

/// x ⊕ H ⊕ reference ⊕ |. Throws std::invalid_argument on an empty reference
/// and std::length_error when the block does not fit the reference slots.
Tokens build_teacher_prompt(const PolicyConfig& config, std::span<const TokenId> x,
                            std::span<const TokenId> reference);

struct TeacherPromptParts {
    Tokens student_prompt;
    Tokens reference;
};

/// Inverse of build_teacher_prompt; nullopt for a prompt without a hint block.
std::optional<TeacherPromptParts> strip_teacher_prompt(std::span<const TokenId> prompt);

/// How a (prompt, continuation) pair is fed to the network.
struct SequenceLayout {
    Tokens tokens;                      ///< network input order
    std::vector<std::int32_t> positions;
    std::size_t block_begin = 0;        ///< reference block rows [block_begin, block_end)
    std::size_t block_end = 0;
    std::size_t first_prediction_row = 0;  ///< row whose output predicts continuation[0]
    std::size_t continuation_length = 0;

    bool has_block() const noexcept { return block_end > block_begin; }
    /// Hides the block from the ask marker and every rollout row.
    ad::AttentionMask ablation_mask() const noexcept { return {block_begin, block_end, block_end}; }
};

/// Validates ids and lengths. The final continuation token is never fed
/// because nothing is predicted from it.
SequenceLayout layout_sequence(const PolicyConfig& config, std::span<const TokenId> prompt,
                               std::span<const TokenId> continuation);

// ---------------------------------------------------------------------------
// Scoring

struct ForwardOptions {
    /// White-box ablation: rollout rows do not attend to the reference block.
    bool ablate_reference = false;
};

/// Log-softmax rows [|continuation|, V]; row t is log π(· | prompt, y_<t).
ad::Tensor forward_logprobs(ad::Tape& tape, const PolicyParams& params, std::span<const TokenId> prompt,
                            std::span<const TokenId> continuation, const ForwardOptions& options = {});

/// Picks log π(y_t | ...) out of forward_logprobs rows -> [|continuation|].
ad::Tensor select_tokens(ad::Tape& tape, const ad::Tensor& logprob_rows, std::span<const TokenId> continuation);

enum class ContextKind { Student, TeacherPositive, TeacherNegative };

struct ConditioningContext {
    ContextKind kind = ContextKind::Student;
    Tokens prompt_tokens;
    Tokens prefix_tokens;  ///< y_<t preceding the scored continuation
};

enum class TeacherMode { Actor, FrozenReference, PeriodicSync };

/// Which parameters score teacher contexts.
class TeacherSource {
public:
    TeacherSource() = default;
    static TeacherSource actor();
    static TeacherSource frozen(const PolicyParams& snapshot);
    static TeacherSource periodic(const PolicyParams& snapshot, std::size_t sync_interval);

    TeacherMode mode() const noexcept { return mode_; }
    std::size_t sync_interval() const noexcept { return sync_interval_; }
    const std::optional<PolicyParams>& snapshot() const noexcept { return snapshot_; }

    const PolicyParams& resolve(const PolicyParams& actor) const;
    /// Call after optimizer step `step` (1-based). PeriodicSync refreshes its
    /// snapshot when step is a multiple of sync_interval.
    void after_step(std::size_t step, const PolicyParams& actor);
    /// Replace the snapshot values (used when restoring a saved run).
    void restore_snapshot(const PolicyParams& snapshot);

private:
    TeacherMode mode_ = TeacherMode::Actor;
    std::size_t sync_interval_ = 0;
    std::optional<PolicyParams> snapshot_;
};

/// Per-token log-probabilities of `continuation` under the context. Teacher
/// contexts are scored by the parameters the source designates, the student
/// context always by the actor. Values only; nothing is taped.
std::vector<double> logprobs(const ConditioningContext& ctx, std::span<const TokenId> continuation,
                             const TeacherSource& source, const PolicyParams& actor);

// ---------------------------------------------------------------------------
// Sampling

/// Incremental decoder with a key/value cache. It runs the same row kernels
/// in the same order as forward_logprobs, so the log-probs it produces are
/// bit-identical to a full forward pass over the same tokens.
class IncrementalDecoder {
public:
    explicit IncrementalDecoder(const PolicyParams& params);

    /// Feed one token at the given position. When `blocked_end > blocked_begin`
    /// the token does not attend to rows in that range.
    void push(TokenId token, std::int32_t position, std::size_t blocked_begin = 0, std::size_t blocked_end = 0);
    /// Log-softmax over the vocabulary at the last pushed row.
    std::span<const double> last_logprobs() const noexcept { return logprobs_; }
    std::size_t length() const noexcept { return length_; }

private:
    const PolicyParams* params_;
    std::size_t length_ = 0;
    std::vector<std::vector<double>> qkv_;  ///< per layer, [capacity, 3d]
    std::vector<double> x_, h_, attn_, proj_, ff_, logits_, logprobs_, probs_;
};

struct SamplingOptions {
    double temperature = 1.0;
    bool greedy = false;  ///< argmax decoding, the temperature -> 0 limit
    std::size_t max_new = 32;
};

struct RolloutDraft {
    Tokens tokens;
    /// Untempered log π(y_t | x, y_<t) of each emitted token.
    std::vector<double> logprobs;
    bool truncated = false;
};

/// Samples until the end token or max_new tokens. Throws
/// std::invalid_argument when temperature <= 0 outside greedy mode.
RolloutDraft sample_rollout(const PolicyParams& params, std::span<const TokenId> prompt,
                            const SamplingOptions& options, RngStream& rng);

} // namespace cepo::policy
