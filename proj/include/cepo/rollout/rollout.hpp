// SPDX-License-Identifier: Apache-2.0
//
// Rollout groups: G sampled responses per problem, their reward statistics,
// the accepted/rejected partition and the (r⁺, r⁻) reference pair.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cepo/policy/policy.hpp"
#include "cepo/synthmath/synthmath.hpp"

namespace cepo::rollout {

struct Trajectory {
    Tokens tokens;
    std::vector<double> old_logprobs;
    int reward = 0;
    std::optional<Tokens> extracted_answer;
    bool truncated = false;

    std::size_t length() const noexcept { return tokens.size(); }
};

/// Which references the teacher contexts see.
enum class FeedbackSource {
    GtPeerAnswer,      ///< r⁺ = ground truth, r⁻ = a rejected peer's final answer (default)
    GtPeerFull,        ///< r⁺ = ground truth, r⁻ = a rejected peer's whole response
    PeerFullPeerFull,  ///< r⁺ = an accepted peer's whole response, r⁻ = a rejected peer's
    PeerPrefix,        ///< r⁺ = ground truth, r⁻ = first half of a rejected peer's response
    PeerSuffix,        ///< r⁺ = ground truth, r⁻ = last half of a rejected peer's response
};

const char* feedback_name(FeedbackSource f) noexcept;
/// Throws std::invalid_argument for unknown names.
FeedbackSource parse_feedback(std::string_view name);

struct GroupStats {
    double mu = 0.0;
    double sigma = 0.0;  ///< population standard deviation
};

GroupStats reward_stats(std::span<const int> rewards);

struct RolloutGroup {
    synthmath::Problem problem;
    std::vector<Trajectory> trajectories;
    double mu_G = 0.0;
    double sigma_G = 0.0;
    std::vector<std::size_t> positive_idx;
    std::vector<std::size_t> negative_idx;
    Tokens r_plus;
    std::optional<Tokens> r_minus;

    std::size_t size() const noexcept { return trajectories.size(); }
    bool degenerate() const noexcept { return sigma_G == 0.0; }
    std::vector<int> rewards() const;
};

/// Fills statistics, the partition and both references from the trajectories.
void finalize_group(RolloutGroup& group, FeedbackSource feedback = FeedbackSource::GtPeerAnswer);

/// r⁻ per the feedback source: the first rejected rollout (lowest index) with
/// an extractable answer that yields a reference different from r⁺. Absent
/// when no rejected rollout qualifies; the caller then scores P_T⁻ with P_S.
std::optional<Tokens> select_negative_reference(const RolloutGroup& group,
                                                FeedbackSource feedback = FeedbackSource::GtPeerAnswer);

struct GroupSampling {
    std::size_t group_size = 8;
    policy::SamplingOptions sampling;
    FeedbackSource feedback = FeedbackSource::GtPeerAnswer;
};

/// Samples and verifies G rollouts. Throws std::invalid_argument when G < 2.
RolloutGroup sample_group(const policy::PolicyParams& params, const synthmath::Problem& problem,
                          const GroupSampling& options, RngStream& rng);

/// Per-problem stream for step `step`; independent of evaluation order.
std::uint64_t group_seed(std::uint64_t run_seed, std::uint64_t step, std::uint64_t problem_id);

/// One group per problem, each from its own group_seed stream.
std::vector<RolloutGroup> sample_groups(const policy::PolicyParams& params,
                                        std::span<const synthmath::Problem> problems,
                                        const GroupSampling& options, std::uint64_t run_seed, std::uint64_t step);

// ---------------------------------------------------------------------------
// Held-out evaluation

struct EvalResult {
    double accuracy = 0.0;
    double standard_error = 0.0;  ///< binomial standard error sqrt(p (1 - p) / n)
    double format_validity = 0.0;  ///< fraction of responses with an extractable answer
    std::size_t samples = 0;
};

/// Samples `samples_per_problem` responses per problem and scores them. The
/// streams are tagged apart from every training stream. Throws
/// std::invalid_argument on an empty problem set or zero samples.
EvalResult evaluate(const policy::PolicyParams& params, std::span<const synthmath::Problem> problems,
                    std::size_t samples_per_problem, std::uint64_t seed,
                    const policy::SamplingOptions& sampling = {});

// ---------------------------------------------------------------------------
// Rollout dump: one JSON object per trajectory per line.

struct DumpRecord {
    std::uint64_t step = 0;
    synthmath::Problem problem;
    std::size_t trajectory_index = 0;
    Trajectory trajectory;
};

void append_rollout_dump(std::ostream& os, std::uint64_t step, const RolloutGroup& group);
void write_rollout_dump(const std::filesystem::path& path, std::uint64_t step, std::span<const RolloutGroup> groups);
/// Throws std::runtime_error naming the line on malformed input.
std::vector<DumpRecord> read_rollout_dump(const std::filesystem::path& path);

/// Rebuild groups (grouped by step and problem id, in file order) from a dump.
std::vector<RolloutGroup> groups_from_dump(std::span<const DumpRecord> records,
                                           FeedbackSource feedback = FeedbackSource::GtPeerAnswer);

} // namespace cepo::rollout
