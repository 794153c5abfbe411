// SPDX-License-Identifier: Apache-2.0
#include "cepo/rollout/rollout.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace cepo::rollout {

using synthmath::Problem;

const char* feedback_name(FeedbackSource f) noexcept {
    switch (f) {
    case FeedbackSource::GtPeerAnswer: return "gt+peer_answer";
    case FeedbackSource::GtPeerFull: return "gt+peer_full";
    case FeedbackSource::PeerFullPeerFull: return "peer_full+peer_full";
    case FeedbackSource::PeerPrefix: return "peer_prefix";
    case FeedbackSource::PeerSuffix: return "peer_suffix";
    }
    return "?";
}

FeedbackSource parse_feedback(std::string_view name) {
    for (auto f : {FeedbackSource::GtPeerAnswer, FeedbackSource::GtPeerFull, FeedbackSource::PeerFullPeerFull,
                   FeedbackSource::PeerPrefix, FeedbackSource::PeerSuffix}) {
        if (name == feedback_name(f)) return f;
    }
    throw std::invalid_argument("unknown feedback source '" + std::string(name) + "'");
}

GroupStats reward_stats(std::span<const int> rewards) {
    GroupStats s;
    if (rewards.empty()) return s;
    const double n = static_cast<double>(rewards.size());
    for (int r : rewards) s.mu += r;
    s.mu /= n;
    double var = 0.0;
    for (int r : rewards) var += (r - s.mu) * (r - s.mu);
    s.sigma = std::sqrt(var / n);
    return s;
}

std::vector<int> RolloutGroup::rewards() const {
    std::vector<int> r;
    r.reserve(trajectories.size());
    for (const auto& t : trajectories) r.push_back(t.reward);
    return r;
}

namespace {

Tokens half(const Tokens& t, bool prefix) {
    const std::size_t n = (t.size() + 1) / 2;
    return prefix ? Tokens(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n))
                  : Tokens(t.end() - static_cast<std::ptrdiff_t>(n), t.end());
}

} // namespace

std::optional<Tokens> select_negative_reference(const RolloutGroup& group, FeedbackSource feedback) {
    for (std::size_t i : group.negative_idx) {
        const Trajectory& tr = group.trajectories[i];
        if (!tr.extracted_answer || tr.extracted_answer->empty()) continue;
        Tokens ref;
        switch (feedback) {
        case FeedbackSource::GtPeerAnswer: ref = *tr.extracted_answer; break;
        case FeedbackSource::GtPeerFull:
        case FeedbackSource::PeerFullPeerFull: ref = tr.tokens; break;
        case FeedbackSource::PeerPrefix: ref = half(tr.tokens, true); break;
        case FeedbackSource::PeerSuffix: ref = half(tr.tokens, false); break;
        }
        if (!ref.empty() && ref != group.r_plus) return ref;
    }
    return std::nullopt;
}

void finalize_group(RolloutGroup& group, FeedbackSource feedback) {
    const auto rewards = group.rewards();
    const auto stats = reward_stats(rewards);
    group.mu_G = stats.mu;
    group.sigma_G = stats.sigma;
    group.positive_idx.clear();
    group.negative_idx.clear();
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        (rewards[i] > 0 ? group.positive_idx : group.negative_idx).push_back(i);
    }
    group.r_plus = group.problem.ground_truth;
    if (feedback == FeedbackSource::PeerFullPeerFull && !group.positive_idx.empty()) {
        group.r_plus = group.trajectories[group.positive_idx.front()].tokens;
    }
    group.r_minus = select_negative_reference(group, feedback);
}

RolloutGroup sample_group(const policy::PolicyParams& params, const Problem& problem, const GroupSampling& options,
                          RngStream& rng) {
    if (options.group_size < 2) throw std::invalid_argument("sample_group: G must be >= 2");
    RolloutGroup g;
    g.problem = problem;
    g.trajectories.reserve(options.group_size);
    for (std::size_t i = 0; i < options.group_size; ++i) {
        auto draft = policy::sample_rollout(params, problem.prompt, options.sampling, rng);
        Trajectory t;
        t.tokens = std::move(draft.tokens);
        t.old_logprobs = std::move(draft.logprobs);
        t.truncated = draft.truncated;
        const auto v = synthmath::verify(problem, t.tokens);
        t.reward = v.reward;
        t.extracted_answer = v.extracted_answer;
        g.trajectories.push_back(std::move(t));
    }
    finalize_group(g, options.feedback);
    return g;
}

std::uint64_t group_seed(std::uint64_t run_seed, std::uint64_t step, std::uint64_t problem_id) {
    return derive_seed(run_seed, {0x6A0B, step, problem_id});
}

std::vector<RolloutGroup> sample_groups(const policy::PolicyParams& params, std::span<const Problem> problems,
                                        const GroupSampling& options, std::uint64_t run_seed, std::uint64_t step) {
    std::vector<RolloutGroup> out;
    out.reserve(problems.size());
    for (const auto& p : problems) {
        RngStream rng(group_seed(run_seed, step, p.id));
        out.push_back(sample_group(params, p, options, rng));
    }
    return out;
}

EvalResult evaluate(const policy::PolicyParams& params, std::span<const Problem> problems,
                    std::size_t samples_per_problem, std::uint64_t seed, const policy::SamplingOptions& sampling) {
    if (problems.empty()) throw std::invalid_argument("evaluate: empty problem set");
    if (samples_per_problem == 0) throw std::invalid_argument("evaluate: samples_per_problem must be >= 1");
    std::size_t correct = 0, valid = 0, n = 0;
    for (const auto& p : problems) {
        for (std::size_t s = 0; s < samples_per_problem; ++s) {
            RngStream rng(derive_seed(seed, {0xE7A1, p.id, s}));
            auto draft = policy::sample_rollout(params, p.prompt, sampling, rng);
            auto v = synthmath::verify(p, draft.tokens);
            correct += static_cast<std::size_t>(v.reward);
            valid += v.extracted_answer ? 1 : 0;
            ++n;
        }
    }
    EvalResult r;
    r.samples = n;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    r.standard_error = std::sqrt(r.accuracy * (1.0 - r.accuracy) / static_cast<double>(n));
    r.format_validity = static_cast<double>(valid) / static_cast<double>(n);
    return r;
}

// ---------------------------------------------------------------------------

void append_rollout_dump(std::ostream& os, std::uint64_t step, const RolloutGroup& group) {
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
        const auto& t = group.trajectories[i];
        nlohmann::ordered_json j;
        j["step"] = step;
        j["problem_id"] = group.problem.id;
        j["prompt"] = render(group.problem.prompt);
        j["ground_truth"] = render(group.problem.ground_truth);
        j["modulus"] = group.problem.modulus;
        j["difficulty"] = group.problem.difficulty;
        j["trajectory"] = i;
        j["tokens"] = t.tokens;
        j["text"] = render(t.tokens);
        j["reward"] = t.reward;
        j["truncated"] = t.truncated;
        j["old_logprobs"] = t.old_logprobs;
        os << j.dump() << '\n';
    }
}

void write_rollout_dump(const std::filesystem::path& path, std::uint64_t step, std::span<const RolloutGroup> groups) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    for (const auto& g : groups) append_rollout_dump(os, step, g);
}

std::vector<DumpRecord> read_rollout_dump(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::vector<DumpRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            DumpRecord r;
            r.step = j.at("step").get<std::uint64_t>();
            r.problem.id = j.at("problem_id").get<std::uint64_t>();
            r.problem.prompt = parse_tokens(j.at("prompt").get<std::string>());
            r.problem.ground_truth = parse_tokens(j.at("ground_truth").get<std::string>());
            r.problem.modulus = j.at("modulus").get<int>();
            r.problem.difficulty = j.at("difficulty").get<int>();
            r.trajectory_index = j.at("trajectory").get<std::size_t>();
            r.trajectory.tokens = j.at("tokens").get<Tokens>();
            r.trajectory.old_logprobs = j.at("old_logprobs").get<std::vector<double>>();
            r.trajectory.reward = j.at("reward").get<int>();
            r.trajectory.truncated = j.at("truncated").get<bool>();
            r.trajectory.extracted_answer = synthmath::extract_answer(r.trajectory.tokens);
            if (r.trajectory.old_logprobs.size() != r.trajectory.tokens.size()) {
                throw std::runtime_error("tokens and old_logprobs differ in length");
            }
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<RolloutGroup> groups_from_dump(std::span<const DumpRecord> records, FeedbackSource feedback) {
    std::vector<RolloutGroup> out;
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> index;
    for (const auto& r : records) {
        auto key = std::make_pair(r.step, r.problem.id);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, out.size()).first;
            out.emplace_back();
            out.back().problem = r.problem;
        }
        auto& trs = out[it->second].trajectories;
        if (r.trajectory_index != trs.size()) throw std::runtime_error("rollout dump: trajectories out of order");
        trs.push_back(r.trajectory);
    }
    for (auto& g : out) finalize_group(g, feedback);
    return out;
}

} // namespace cepo::rollout
