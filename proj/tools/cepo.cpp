// SPDX-License-Identifier: Apache-2.0
//
// cepo: data generation, warm start, training, evaluation, heatmaps and run
// comparison for the synthetic arithmetic lab.
//
// Every subcommand accepts --config FILE (JSON, missing keys take defaults),
// --seed N and repeated --set section.field=value overrides. The resolved
// configuration is written beside the outputs.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cepo/telemetry/telemetry.hpp"

namespace fs = std::filesystem;
using namespace cepo;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "run seed");
    app->add_option("--set", c.sets, "override, e.g. trainer.lambda_schedule.lambda0=0");
}

telemetry::RunConfig resolve(const Common& c, std::vector<std::string> extra = {}) {
    json j = json::object();
    if (!c.config.empty()) {
        std::ifstream in(c.config);
        j = json::parse(in);
    }
    auto sets = c.sets;
    sets.insert(sets.end(), extra.begin(), extra.end());
    auto config = telemetry::run_config_from_json(telemetry::apply_overrides(std::move(j), sets));
    telemetry::set_seed(config, c.seed);
    return config;
}

void write_config(const fs::path& dir, const telemetry::RunConfig& c) {
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << telemetry::to_json(c).dump(2) << "\n";
}

/// A parameter file or a training-state directory.
policy::PolicyParams load_params(const fs::path& p) {
    return policy::PolicyParams::load(fs::is_directory(p) ? p / "params.ckpt" : p);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CEPO synthetic arithmetic lab"};
    app.require_subcommand(1);

    Common gen_c;
    std::string gen_out = "data";
    auto* gen = app.add_subcommand("gen-data", "write train/held-out splits and the vocabulary");
    add_common(gen, gen_c);
    gen->add_option("--out", gen_out, "output directory");

    Common ws_c;
    std::string ws_out;
    auto* ws = app.add_subcommand("warm-start", "supervised warm start of a fresh policy");
    add_common(ws, ws_c);
    ws->add_option("--out", ws_out, "output directory (default: run.output_dir)");

    Common tr_c;
    std::string tr_out, tr_method;
    std::optional<std::size_t> tr_steps;
    auto* tr = app.add_subcommand("train", "warm start (unless run.init_checkpoint) and train");
    add_common(tr, tr_c);
    tr->add_option("--out", tr_out, "run directory (default: run.output_dir)");
    tr->add_option("--method", tr_method, "GRPO, RLSD, CEPO, OPSD, SDPO or ContrastiveKL");
    tr->add_option("--steps", tr_steps, "trainer.total_steps");

    Common ev_c;
    std::string ev_ckpt;
    auto* ev = app.add_subcommand("eval", "held-out accuracy of a checkpoint");
    add_common(ev, ev_c);
    ev->add_option("--checkpoint", ev_ckpt, "parameter file or state directory")->required();

    Common hm_c;
    std::string hm_ckpt, hm_rollouts, hm_out = "heatmap", hm_methods = "RLSD,CEPO";
    std::size_t hm_groups = 16;
    auto* hm = app.add_subcommand("heatmap", "per-token credits of several methods on shared trajectories");
    add_common(hm, hm_c);
    hm->add_option("--checkpoint", hm_ckpt, "parameter file or state directory")->required();
    hm->add_option("--rollouts", hm_rollouts, "rollout dump to score (default: sample from the checkpoint)");
    hm->add_option("--groups", hm_groups, "groups to sample when no dump is given");
    hm->add_option("--methods", hm_methods, "comma-separated surrogate methods");
    hm->add_option("--out", hm_out, "output directory");

    Common cmp_c;
    std::vector<std::string> cmp_runs;
    std::string cmp_out = "comparison";
    auto* cmp = app.add_subcommand("compare", "aggregate run directories into curves.tsv and summary.tsv");
    add_common(cmp, cmp_c);
    cmp->add_option("--runs", cmp_runs, "run directories")->required();
    cmp->add_option("--out", cmp_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto c = resolve(gen_c);
            c.task.seed = gen_c.seed;
            c.task.data_dir.clear();
            telemetry::write_datasets(gen_out, telemetry::load_datasets(c.task));
            write_config(gen_out, c);
            std::cout << "wrote " << c.task.train_size << " train and " << c.task.heldout_size
                      << " held-out problems to " << gen_out << "\n";
        } else if (ws->parsed()) {
            auto c = resolve(ws_c);
            const fs::path out = ws_out.empty() ? fs::path(c.run.output_dir) : fs::path(ws_out);
            c.run.output_dir = out.string();
            c.run.init_checkpoint.clear();
            write_config(out, c);
            const auto init = telemetry::initial_policy(c, telemetry::load_datasets(c.task));
            init.params.save(out / "warm_start.ckpt");
            if (init.report) {
                const auto report = telemetry::to_json(*init.report).dump();
                std::ofstream(out / "warm_start.json") << report << "\n";
                std::cout << "steps " << init.report->steps_run << ", format validity "
                          << init.report->format_validity << ", held-out accuracy "
                          << init.report->heldout_accuracy << "\n";
            }
        } else if (tr->parsed()) {
            std::vector<std::string> extra;
            if (!tr_method.empty()) extra.push_back("trainer.method=\"" + tr_method + "\"");
            if (tr_steps) extra.push_back("trainer.total_steps=" + std::to_string(*tr_steps));
            auto c = resolve(tr_c, extra);
            if (!tr_out.empty()) c.run.output_dir = tr_out;
            const auto r = telemetry::run_experiment(c);
            if (!r.evals.empty()) {
                std::cout << "held-out accuracy " << r.evals.front().second.accuracy << " -> "
                          << r.evals.back().second.accuracy << " (" << r.dir.string() << ")\n";
            } else {
                std::cout << "wrote " << r.dir.string() << "\n";
            }
        } else if (ev->parsed()) {
            const auto c = resolve(ev_c);
            const auto data = telemetry::load_datasets(c.task);
            const auto r = telemetry::evaluate_heldout(load_params(ev_ckpt), c, data.heldout, 0);
            auto j = telemetry::to_json(r, 0);
            j.erase("step");
            std::cout << j.dump() << "\n";
        } else if (hm->parsed()) {
            const auto c = resolve(hm_c);
            const auto params = load_params(hm_ckpt);
            std::vector<trainers::Method> methods;
            std::stringstream ss(hm_methods);
            for (std::string m; std::getline(ss, m, ',');) methods.push_back(trainers::parse_method(m));
            fs::create_directories(hm_out);
            std::vector<rollout::RolloutGroup> groups;
            if (!hm_rollouts.empty()) {
                groups = rollout::groups_from_dump(rollout::read_rollout_dump(hm_rollouts), c.trainer.feedback);
            } else {
                const auto data = telemetry::load_datasets(c.task);
                const auto problems = std::span(data.heldout).first(std::min(hm_groups, data.heldout.size()));
                groups = rollout::sample_groups(params, problems, trainers::group_sampling(c.trainer),
                                                c.trainer.seed, 0);
                rollout::write_rollout_dump(fs::path(hm_out) / "rollouts.jsonl", 0, groups);
            }
            write_config(hm_out, c);
            const auto h = telemetry::export_heatmap(params, groups, methods, c.trainer.lambda_schedule.lambda0,
                                                     c.trainer.eps_w);
            telemetry::write_heatmap_tsv(fs::path(hm_out) / "heatmap.tsv", h);
            telemetry::write_heatmap_summary_tsv(fs::path(hm_out) / "summary.tsv", h);
            for (const auto& s : h.summaries) {
                std::cout << s.method << " clip_rate " << s.clip_rate << " over " << s.tokens << " tokens\n";
            }
        } else if (cmp->parsed()) {
            std::vector<telemetry::RunRecord> runs;
            for (const auto& d : cmp_runs) runs.push_back(telemetry::load_run(d));
            telemetry::compare_runs(runs, cmp_out);
            std::cout << "wrote " << (fs::path(cmp_out) / "summary.tsv").string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
