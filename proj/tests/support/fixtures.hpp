// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures: small policies and rollout groups with exact old
// log-probs, so that the PPO ratio is 1 at the start of a gradient pass.
#pragma once

#include <vector>

#include "cepo/rollout/rollout.hpp"

namespace cepo::testing {

inline policy::PolicyConfig small_config() {
    policy::PolicyConfig c;
    c.max_seq_len = 40;
    c.max_ref_len = 20;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 24;
    return c;
}

/// Initialized weights plus noise, so teacher and student contexts disagree
/// visibly.
inline policy::PolicyParams lively_params(const policy::PolicyConfig& c, std::uint64_t seed, double noise = 0.3) {
    auto p = policy::PolicyParams::init(c, seed);
    RngStream rng(derive_seed(seed, {0x11FE}));
    for (auto& t : p.tensors()) {
        for (double& v : t.mutable_values()) v += noise * rng.normal();
    }
    return p;
}

inline rollout::Trajectory scored(const policy::PolicyParams& params, const synthmath::Problem& p, Tokens y) {
    rollout::Trajectory t;
    t.old_logprobs = policy::logprobs({policy::ContextKind::Student, p.prompt, {}}, y, policy::TeacherSource::actor(),
                                      params);
    auto v = synthmath::verify(p, y);
    t.reward = v.reward;
    t.extracted_answer = v.extracted_answer;
    t.tokens = std::move(y);
    return t;
}

/// Group of `size` >= 4 trajectories: the worked solution, sampled drafts,
/// the bare correct answer and (when `with_wrong`) a bare wrong answer, so
/// the group is never degenerate and r⁻ exists exactly when `with_wrong`.
inline rollout::RolloutGroup mixed_group(const policy::PolicyParams& params, const synthmath::Problem& p,
                                         std::size_t size, bool with_wrong, RngStream& rng,
                                         std::size_t max_new = 12) {
    rollout::RolloutGroup g;
    g.problem = p;
    g.trajectories.push_back(scored(params, p, synthmath::render_solution(p)));
    policy::SamplingOptions so;
    so.max_new = max_new;
    const std::size_t drafts = size - (with_wrong ? 3 : 2);
    while (g.trajectories.size() < 1 + drafts) {
        auto d = policy::sample_rollout(params, p.prompt, so, rng);
        auto v = synthmath::verify(p, d.tokens);
        // Drafts stay malformed so r⁻ comes only from the planted answer.
        if (v.extracted_answer) continue;
        rollout::Trajectory t;
        t.tokens = d.tokens;
        t.old_logprobs = d.logprobs;
        t.truncated = d.truncated;
        g.trajectories.push_back(std::move(t));
    }
    g.trajectories.push_back(scored(params, p, synthmath::render_answer(p.ground_truth)));
    if (with_wrong) {
        const int gt = tok::digit_value(p.ground_truth.at(0));
        const int wrong = (gt + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.modulus - 1)))) % p.modulus;
        g.trajectories.push_back(scored(params, p, synthmath::render_answer(Tokens{tok::digit(wrong)})));
    }
    rollout::finalize_group(g);
    return g;
}

/// A batch of mixed groups over freshly generated problems. Every third
/// group lacks a wrong answer and so exercises the P_T- = P_S fallback.
inline std::vector<rollout::RolloutGroup> mixed_batch(const policy::PolicyParams& params, std::size_t n_groups,
                                                      std::size_t group_size, std::uint64_t seed, int k_ops = 2) {
    auto problems = synthmath::generate_dataset({n_groups, k_ops, 10, seed});
    RngStream rng(derive_seed(seed, {0xBA7C4}));
    std::vector<rollout::RolloutGroup> out;
    for (std::size_t i = 0; i < n_groups; ++i) {
        out.push_back(mixed_group(params, problems[i], group_size, i % 3 != 2, rng));
    }
    return out;
}

} // namespace cepo::testing
