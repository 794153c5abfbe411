// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"

#include "cepo/telemetry/telemetry.hpp"

using namespace cepo;
using namespace cepo::telemetry;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("cepo_telemetry_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig tiny(trainers::Method m, const fs::path& dir) {
    RunConfig c = default_run_config(m);
    c.policy = testing::small_config();
    c.task.train_size = 48;
    c.task.heldout_size = 12;
    c.task.k_ops = 1;
    c.task.modulus = 3;
    c.warm_start.steps = 300;
    c.warm_start.min_steps = 300;
    c.warm_start.batch_size = 8;
    c.warm_start.learning_rate = 1e-2;
    c.warm_start.eval_problems = 6;
    c.trainer.batch_prompts = 3;
    c.trainer.group_size = 4;
    c.trainer.total_steps = 3;
    c.trainer.max_new = 12;
    c.run.eval_every = 2;
    c.run.eval_problems = 6;
    c.run.eval_samples = 1;
    c.run.checkpoint_every = 2;
    c.run.output_dir = dir.string();
    return c;
}

} // namespace

TEST_CASE("run config round-trips and rejects unknown keys") {
    auto c = default_run_config(trainers::Method::RLSD);
    c.trainer.lambda_schedule.lambda0 = 0.25;
    c.trainer.feedback = rollout::FeedbackSource::PeerPrefix;
    c.run.name = "probe";
    const auto j = json(to_json(c));
    const auto back = run_config_from_json(j);
    CHECK(json(to_json(back)) == j);
    CHECK(back.trainer.teacher_source.mode == policy::TeacherMode::PeriodicSync);

    SUBCASE("method defaults follow the method") {
        const auto cepo = run_config_from_json(json{{"trainer", {{"method", "CEPO"}}}});
        const auto grpo = run_config_from_json(json{{"trainer", {{"method", "GRPO"}}}});
        CHECK(cepo.trainer.learning_rate == doctest::Approx(5.0 * grpo.trainer.learning_rate));
    }
    SUBCASE("typos are errors") {
        CHECK_THROWS_WITH_AS(run_config_from_json(json{{"trainer", {{"lamda0", 0.1}}}}),
                             doctest::Contains("trainer.lamda0"), std::invalid_argument);
        CHECK_THROWS_AS(run_config_from_json(json{{"trainer", {{"method", "PPO"}}}}), std::invalid_argument);
        CHECK_THROWS_AS(run_config_from_json(json{{"trainer", {{"eps_w", "wide"}}}}), std::invalid_argument);
    }
    SUBCASE("overrides") {
        auto o = apply_overrides(json::object(), {"trainer.lambda_schedule.lambda0=0", "run.name=sweep",
                                                  "trainer.teacher_source.mode=frozen"});
        const auto r = run_config_from_json(o);
        CHECK(r.trainer.lambda_schedule.lambda0 == 0.0);
        CHECK(r.run.name == "sweep");
        CHECK(r.trainer.teacher_source.mode == policy::TeacherMode::FrozenReference);
        CHECK_THROWS_AS(apply_overrides(json::object(), {"novalue"}), std::invalid_argument);
    }
    SUBCASE("labels name the swept settings") {
        auto a = default_run_config(trainers::Method::CEPO);
        CHECK(a.label() == "CEPO");
        a.trainer.lambda_schedule.lambda0 = 1.0;
        a.trainer.seed = 7;
        CHECK(a.label() == "CEPO lambda_schedule.lambda0=1.0");
    }
}

TEST_CASE("metrics records") {
    trainers::StepMetrics m;
    m.step = 4;
    m.mean_reward = 0.375;
    m.lambda = 0.42;
    const auto j = to_json(m);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"step", "mean_reward", "train_accuracy", "heldout_accuracy",
                                           "pos_delta_fraction", "neg_delta_fraction", "clip_rate", "lambda",
                                           "degenerate_group_fraction", "loss"});
    CHECK(j["heldout_accuracy"].is_null());
    m.heldout_accuracy = 0.5;
    const auto back = step_metrics_from_json(json(to_json(m)));
    CHECK(back.heldout_accuracy == 0.5);
    CHECK(back.lambda == 0.42);

    const auto dir = scratch("metrics");
    {
        MetricsWriter w(dir / "m.jsonl");
        w.write(to_json(m));
        m.step = 5;
        m.heldout_accuracy.reset();
        w.write(to_json(m));
    }
    SUBCASE("a truncated final record is dropped") {
        std::ofstream(dir / "m.jsonl", std::ios::app) << R"({"step": 6, "mean_rew)";
        const auto got = read_metrics(dir / "m.jsonl");
        REQUIRE(got.size() == 2);
        CHECK(got[1].step == 5);
        CHECK_FALSE(got[1].heldout_accuracy);
    }
    SUBCASE("a malformed middle record is an error") {
        std::ofstream(dir / "m.jsonl", std::ios::app) << "garbage\n" << json(to_json(m)).dump() << "\n";
        CHECK_THROWS_WITH(read_metrics(dir / "m.jsonl"), doctest::Contains(":3:"));
    }
}

TEST_CASE("run_experiment outputs") {
    SUBCASE("zero steps writes the warm-start checkpoint and the config only") {
        const auto dir = scratch("zero");
        auto c = tiny(trainers::Method::CEPO, dir);
        c.trainer.total_steps = 0;
        run_experiment(c);
        CHECK(fs::exists(dir / "config.json"));
        CHECK(fs::exists(dir / "checkpoints" / "warm_start.ckpt"));
        CHECK_FALSE(fs::exists(dir / "metrics.jsonl"));
        CHECK_FALSE(fs::exists(dir / "eval.jsonl"));
        CHECK(load_run_config(dir / "config.json").trainer.total_steps == 0);
    }
    SUBCASE("a short run is reproducible byte for byte") {
        const auto a = scratch("det_a");
        const auto b = scratch("det_b");
        auto ca = tiny(trainers::Method::CEPO, a);
        auto cb = tiny(trainers::Method::CEPO, b);
        const auto ra = run_experiment(ca);
        run_experiment(cb);
        CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
        CHECK(slurp(a / "eval.jsonl") == slurp(b / "eval.jsonl"));
        REQUIRE(ra.metrics.size() == 3);
        CHECK_FALSE(ra.metrics[0].heldout_accuracy);
        CHECK(ra.metrics[1].heldout_accuracy);
        CHECK(ra.evals.size() == 2);  // steps 0 and 2
        CHECK(fs::exists(a / "checkpoints" / "step_2" / "params.ckpt"));
        CHECK(fs::exists(a / "checkpoints" / "step_3" / "params.ckpt"));
        CHECK(policy::params_equal(trainers::StepState::load(a / "checkpoints" / "step_3").params,
                                   ra.final_state.params));

        SUBCASE("starting from the saved warm start skips the warm start and matches") {
            const auto d = scratch("det_init");
            auto cd = tiny(trainers::Method::CEPO, d);
            cd.run.init_checkpoint = (a / "checkpoints" / "warm_start.ckpt").string();
            run_experiment(cd);
            CHECK_FALSE(fs::exists(d / "warm_start.json"));
            CHECK(slurp(a / "metrics.jsonl") == slurp(d / "metrics.jsonl"));
        }
    }
    SUBCASE("another seed gives another stream") {
        const auto a = scratch("seed_a");
        const auto b = scratch("seed_b");
        auto ca = tiny(trainers::Method::GRPO, a);
        auto cb = tiny(trainers::Method::GRPO, b);
        set_seed(cb, 1);
        run_experiment(ca);
        run_experiment(cb);
        CHECK(slurp(a / "checkpoints" / "warm_start.ckpt") != slurp(b / "checkpoints" / "warm_start.ckpt"));
        CHECK(slurp(a / "metrics.jsonl") != slurp(b / "metrics.jsonl"));
    }
}

TEST_CASE("heatmap export") {
    const auto c = testing::small_config();
    const auto params = testing::lively_params(c, 3);
    const auto groups = testing::mixed_batch(params, 4, 5, 21);
    const std::vector<trainers::Method> methods{trainers::Method::GRPO, trainers::Method::RLSD,
                                                trainers::Method::CEPO};
    const auto h = export_heatmap(params, groups, methods, 0.5, 0.5);
    REQUIRE(h.summaries.size() == 3);
    std::size_t tokens = 0;
    for (const auto& g : groups) {
        for (const auto& t : g.trajectories) tokens += t.tokens.size();
    }
    CHECK(h.rows.size() == 3 * tokens);
    CHECK(h.summaries[0].clip_rate == 0.0);
    for (const auto& r : h.rows) {
        if (r.method == "GRPO") CHECK(r.credit.delta == 0.0);
        CHECK(std::isfinite(r.credit.delta));
    }
    CHECK(h.rows.front().problem_id == std::to_string(groups[0].problem.id) + "#0");

    SUBCASE("stored old log-probs do not matter") {
        auto shifted = groups;
        for (auto& g : shifted) {
            for (auto& t : g.trajectories) {
                for (double& v : t.old_logprobs) v -= 1.0;
            }
        }
        const auto h2 = export_heatmap(params, shifted, methods, 0.5, 0.5);
        REQUIRE(h2.rows.size() == h.rows.size());
        for (std::size_t i = 0; i < h.rows.size(); ++i) {
            CHECK(h2.rows[i].credit.modulated_advantage == h.rows[i].credit.modulated_advantage);
        }
    }
    SUBCASE("distillation methods have no token credits") {
        const std::vector<trainers::Method> bad{trainers::Method::OPSD};
        CHECK_THROWS_AS(export_heatmap(params, groups, bad, 0.5, 0.5), std::invalid_argument);
    }
    SUBCASE("tables") {
        const auto dir = scratch("heatmap");
        write_heatmap_tsv(dir / "h.tsv", h);
        write_heatmap_summary_tsv(dir / "s.tsv", h);
        std::ifstream in(dir / "h.tsv");
        std::string header;
        std::getline(in, header);
        CHECK(header == "method\tproblem_id\tposition\tglyph\tdelta\tweight\tclipped\tadvantage");
        std::size_t lines = 0;
        for (std::string l; std::getline(in, l);) ++lines;
        CHECK(lines == h.rows.size());
    }
}

TEST_CASE("run comparison") {
    auto record = [](std::string label, std::uint64_t seed, std::vector<double> acc) {
        RunRecord r;
        r.label = std::move(label);
        r.seed = seed;
        for (std::size_t i = 0; i < acc.size(); ++i) {
            trainers::StepMetrics m;
            m.step = i + 1;
            m.mean_reward = acc[i];
            r.metrics.push_back(m);
            rollout::EvalResult e;
            e.accuracy = acc[i];
            r.evals.emplace_back(i + 1, e);
        }
        return r;
    };
    auto read_rows = [](const fs::path& p) {
        std::ifstream in(p);
        std::vector<std::vector<std::string>> rows;
        for (std::string l; std::getline(in, l);) {
            std::vector<std::string> cells;
            std::stringstream ss(l);
            for (std::string cell; std::getline(ss, cell, '\t');) cells.push_back(cell);
            rows.push_back(cells);
        }
        return rows;
    };

    SUBCASE("mean and standard error over seeds") {
        const std::vector<RunRecord> runs{record("A", 0, {0.1, 0.2}), record("A", 1, {0.3, 0.4}),
                                          record("A", 2, {0.5, 0.9})};
        const auto dir = scratch("compare");
        compare_runs(runs, dir);
        const auto rows = read_rows(dir / "summary.tsv");
        REQUIRE(rows.size() == 5);  // header, three seeds, mean
        CHECK(rows[4][1] == "mean");
        CHECK(rows[4][3] == "2");
        // heldout_accuracy is the third metric: columns 4 + 2 * 2 and its stderr.
        CHECK(rows[0][8] == "heldout_accuracy");
        const double mean = (0.2 + 0.4 + 0.9) / 3.0;
        const double sd = std::sqrt(((0.2 - mean) * (0.2 - mean) + (0.4 - mean) * (0.4 - mean) +
                                     (0.9 - mean) * (0.9 - mean)) / 2.0);
        CHECK(std::stod(rows[4][8]) == doctest::Approx(mean).epsilon(1e-9));
        CHECK(std::stod(rows[4][9]) == doctest::Approx(sd / std::sqrt(3.0)).epsilon(1e-9));
    }
    SUBCASE("a run compared with itself has zero spread") {
        const std::vector<RunRecord> runs{record("B", 0, {0.25, 0.5}), record("B", 0, {0.25, 0.5})};
        const auto dir = scratch("self");
        compare_runs(runs, dir);
        const auto rows = read_rows(dir / "summary.tsv");
        CHECK(std::stod(rows.back()[9]) == 0.0);
    }
    SUBCASE("mismatched step grids use the intersection") {
        const std::vector<RunRecord> runs{record("C", 0, {0.1, 0.2, 0.3}), record("D", 0, {0.4, 0.5})};
        const auto dir = scratch("grid");
        compare_runs(runs, dir);
        const auto rows = read_rows(dir / "curves.tsv");
        CHECK(rows.size() == 1 + 2 * 2 * 2);  // 2 labels x 2 steps x (run + mean)
        CHECK(read_rows(dir / "summary.tsv")[1][3] == "2");
    }
}
