// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <iostream>

#include "cepo/trainers/trainers.hpp"

namespace cepo::trainers {

using ad::Tape;

SupervisedExample supervised_example(const policy::PolicyConfig& config, const synthmath::Problem& p, bool hint) {
    SupervisedExample e;
    e.prompt = hint ? policy::build_teacher_prompt(config, p.prompt, p.ground_truth) : p.prompt;
    e.target = synthmath::render_solution(p);
    return e;
}

double supervised_step(policy::PolicyParams& params, AdamState& adam, std::span<const SupervisedExample> batch,
                       const AdamConfig& config) {
    if (batch.empty()) throw std::invalid_argument("supervised_step: empty batch");
    params.set_requires_grad(true);
    params.zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& ex : batch) {
        Tape tape;
        auto rows = policy::forward_logprobs(tape, params, ex.prompt, ex.target);
        auto lp = policy::select_tokens(tape, rows, ex.target);
        auto loss = ad::scale(tape, ad::sum(tape, lp), -inv_b / static_cast<double>(ex.target.size()));
        total += loss.item();
        tape.backward(loss);
    }
    auto tensors = params.tensors();
    optimizer_update(tensors, adam, config);
    return total;
}

WarmStartReport warm_start(policy::PolicyParams& params, std::span<const synthmath::Problem> train,
                           std::span<const synthmath::Problem> heldout, const WarmStartConfig& config,
                           const policy::SamplingOptions& sampling) {
    if (train.empty() || heldout.empty()) throw std::invalid_argument("warm_start: empty dataset");
    if (config.check_every == 0 || config.batch_size == 0) {
        throw std::invalid_argument("warm_start: batch_size and check_every must be >= 1");
    }
    const auto probe = heldout.first(std::min(config.eval_problems, heldout.size()));
    const std::uint64_t eval_seed = derive_seed(config.seed, {0x3A28});
    WarmStartReport report;
    AdamState adam;
    const AdamConfig ac{config.learning_rate, 0.9, 0.999, 1e-8, 0.0};
    std::vector<SupervisedExample> batch;
    for (std::size_t s = 0; s < config.steps; ++s) {
        RngStream rng(derive_seed(config.seed, {0x3A27, s}));
        batch.clear();
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            const auto& p = train[static_cast<std::size_t>(rng.below(train.size()))];
            batch.push_back(supervised_example(params.config(), p, rng.uniform() < config.hint_fraction));
        }
        report.losses.push_back(supervised_step(params, adam, batch, ac));
        report.steps_run = s + 1;
        if (report.steps_run >= config.min_steps && report.steps_run % config.check_every == 0) {
            const auto r = rollout::evaluate(params, probe, 1, eval_seed, sampling);
            if (r.format_validity >= config.target_validity) break;
        }
    }
    const auto r = rollout::evaluate(params, probe, 1, eval_seed, sampling);
    report.format_validity = r.format_validity;
    report.heldout_accuracy = r.accuracy;
    report.reached_target = r.format_validity >= config.target_validity;
    if (!report.reached_target && config.steps > 0) {
        std::cerr << "warning: warm start stopped after " << report.steps_run << " steps at format validity "
                  << r.format_validity << " (target " << config.target_validity << ")\n";
    }
    return report;
}

} // namespace cepo::trainers
