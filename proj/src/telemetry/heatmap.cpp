// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "cepo/telemetry/telemetry.hpp"

namespace cepo::telemetry {

Heatmap export_heatmap(const policy::PolicyParams& params, std::span<const rollout::RolloutGroup> groups,
                       std::span<const trainers::Method> methods, double lambda, double eps_w) {
    std::vector<rollout::RolloutGroup> scored(groups.begin(), groups.end());
    for (auto& g : scored) {
        for (auto& t : g.trajectories) {
            t.old_logprobs = policy::logprobs({policy::ContextKind::Student, g.problem.prompt, {}}, t.tokens,
                                              policy::TeacherSource::actor(), params);
        }
    }
    Heatmap h;
    for (const auto method : methods) {
        if (!trainers::uses_surrogate(method)) {
            throw std::invalid_argument(std::string("export_heatmap: ") + trainers::method_name(method) +
                                        " has no per-token credit");
        }
        trainers::TrainerConfig config = trainers::TrainerConfig::defaults_for(method);
        config.eps_w = eps_w;
        auto actor = params.clone();
        const trainers::TeacherParams teachers{&params, &params};
        const auto grad = trainers::compute_batch_gradient(actor, teachers, scored, config, lambda);

        MethodSummary s;
        s.method = trainers::method_name(method);
        double filler_sum = 0.0, digit_sum = 0.0;
        std::size_t filler_n = 0, digit_n = 0;
        for (std::size_t gi = 0; gi < scored.size(); ++gi) {
            const auto& g = scored[gi];
            for (std::size_t ti = 0; ti < grad.credits[gi].size(); ++ti) {
                const auto& y = g.trajectories[ti].tokens;
                const auto& credits = grad.credits[gi][ti];
                ++s.trajectories;
                bool in_answer = false;
                for (std::size_t p = 0; p < y.size(); ++p) {
                    if (y[p] == tok::kAns) in_answer = true;
                    else if (y[p] == tok::kEnd) in_answer = false;
                    const auto& k = credits[p];
                    ++s.tokens;
                    s.clipped += k.clipped ? 1 : 0;
                    if (tok::is_filler(y[p])) {
                        filler_sum += std::abs(k.delta);
                        ++filler_n;
                    } else if (in_answer && tok::is_digit(y[p])) {
                        digit_sum += std::abs(k.delta);
                        ++digit_n;
                    }
                    h.rows.push_back({s.method, std::to_string(g.problem.id) + "#" + std::to_string(ti), p,
                                      glyph(y[p]), k});
                }
            }
        }
        if (s.tokens) s.clip_rate = static_cast<double>(s.clipped) / static_cast<double>(s.tokens);
        if (filler_n) s.filler_mean_abs_delta = filler_sum / static_cast<double>(filler_n);
        if (digit_n) s.answer_digit_mean_abs_delta = digit_sum / static_cast<double>(digit_n);
        h.summaries.push_back(s);
    }
    return h;
}

void write_heatmap_tsv(const std::filesystem::path& path, const Heatmap& h) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    out << "method\tproblem_id\tposition\tglyph\tdelta\tweight\tclipped\tadvantage\n";
    for (const auto& r : h.rows) {
        out << r.method << '\t' << r.problem_id << '\t' << r.position << '\t' << r.glyph << '\t' << r.credit.delta
            << '\t' << r.credit.weight << '\t' << (r.credit.clipped ? 1 : 0) << '\t'
            << r.credit.modulated_advantage << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_heatmap_summary_tsv(const std::filesystem::path& path, const Heatmap& h) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    out << "method\ttrajectories\ttokens\tclipped\tclip_rate\tfiller_mean_abs_delta\tanswer_digit_mean_abs_delta\n";
    for (const auto& s : h.summaries) {
        out << s.method << '\t' << s.trajectories << '\t' << s.tokens << '\t' << s.clipped << '\t' << s.clip_rate
            << '\t' << s.filler_mean_abs_delta << '\t' << s.answer_digit_mean_abs_delta << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace cepo::telemetry
