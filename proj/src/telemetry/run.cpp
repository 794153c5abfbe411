// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "cepo/telemetry/telemetry.hpp"

namespace cepo::telemetry {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

policy::SamplingOptions eval_sampling(const trainers::TrainerConfig& t) {
    policy::SamplingOptions s;
    s.temperature = t.temperature;
    s.max_new = t.max_new;
    return s;
}

} // namespace

Datasets load_datasets(const TaskConfig& task) {
    Datasets d;
    if (!task.data_dir.empty()) {
        const fs::path dir(task.data_dir);
        d.train = synthmath::read_dataset(dir / "train.tsv", task.modulus);
        d.heldout = synthmath::read_dataset(dir / "heldout.tsv", task.modulus);
        read_vocab_file(dir / "vocab.tsv");
        return d;
    }
    d.train = synthmath::generate_dataset({task.train_size, task.k_ops, task.modulus, task.seed});
    d.heldout = synthmath::generate_dataset(
        {task.heldout_size, task.k_ops, task.modulus, task.seed + synthmath::kHeldOutSeedOffset});
    return d;
}

void write_datasets(const fs::path& dir, const Datasets& data) {
    fs::create_directories(dir);
    synthmath::write_dataset(dir / "train.tsv", data.train);
    synthmath::write_dataset(dir / "heldout.tsv", data.heldout);
    write_vocab_file(dir / "vocab.tsv");
}

InitialPolicy initial_policy(const RunConfig& c, const Datasets& data) {
    InitialPolicy out;
    if (!c.run.init_checkpoint.empty()) {
        out.params = policy::PolicyParams::load(c.run.init_checkpoint);
        const auto& a = out.params.config();
        const auto& b = c.policy;
        if (a.vocab_size != b.vocab_size || a.max_seq_len != b.max_seq_len || a.max_ref_len != b.max_ref_len ||
            a.n_layers != b.n_layers || a.n_heads != b.n_heads || a.d_model != b.d_model || a.d_ff != b.d_ff) {
            throw std::invalid_argument("init_checkpoint " + c.run.init_checkpoint +
                                        " does not match the configured policy shape");
        }
        return out;
    }
    out.params = policy::PolicyParams::init(c.policy, derive_seed(c.trainer.seed, {0x1417}));
    if (c.warm_start.steps > 0) {
        out.report = trainers::warm_start(out.params, data.train, data.heldout, c.warm_start,
                                          eval_sampling(c.trainer));
    }
    return out;
}

ordered_json to_json(const trainers::WarmStartReport& r) {
    ordered_json j;
    j["steps_run"] = r.steps_run;
    j["format_validity"] = r.format_validity;
    j["heldout_accuracy"] = r.heldout_accuracy;
    j["reached_target"] = r.reached_target;
    j["losses"] = r.losses;
    return j;
}

ordered_json to_json(const rollout::EvalResult& r, std::size_t step) {
    ordered_json j;
    j["step"] = step;
    j["accuracy"] = r.accuracy;
    j["standard_error"] = r.standard_error;
    j["format_validity"] = r.format_validity;
    j["samples"] = r.samples;
    return j;
}

rollout::EvalResult evaluate_heldout(const policy::PolicyParams& params, const RunConfig& c,
                                     std::span<const synthmath::Problem> heldout, std::size_t step) {
    (void)step;  // one stream for every step: successive evaluations share their noise
    const auto probe = heldout.first(std::min(c.run.eval_problems, heldout.size()));
    return rollout::evaluate(params, probe, c.run.eval_samples, derive_seed(c.trainer.seed, {0xE7A5}),
                             eval_sampling(c.trainer));
}

RunResult run_experiment(const RunConfig& c) {
    c.validate();
    RunResult result;
    result.dir = c.run.output_dir;
    const fs::path ckpt_dir = result.dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    for (const char* stale : {"metrics.jsonl", "eval.jsonl", "warm_start.json"}) fs::remove(result.dir / stale);
    write_text(result.dir / "config.json", to_json(c).dump(2) + "\n");

    const auto data = load_datasets(c.task);
    auto init = initial_policy(c, data);
    if (init.report) write_text(result.dir / "warm_start.json", to_json(*init.report).dump() + "\n");
    init.params.save(ckpt_dir / "warm_start.ckpt");

    result.final_state = trainers::StepState::init(c.trainer, std::move(init.params));
    auto& state = result.final_state;
    if (c.trainer.total_steps == 0) return result;

    MetricsWriter metrics(result.dir / "metrics.jsonl");
    MetricsWriter evals(result.dir / "eval.jsonl");
    auto record_eval = [&](std::size_t step) {
        const auto r = evaluate_heldout(state.params, c, data.heldout, step);
        evals.write(to_json(r, step));
        result.evals.emplace_back(step, r);
        return r;
    };
    record_eval(0);

    const auto sampling = trainers::group_sampling(c.trainer);
    for (std::size_t s = 0; s < c.trainer.total_steps; ++s) {
        const auto batch = trainers::select_batch(data.train, c.trainer.batch_prompts, c.trainer.seed, s);
        const auto groups = rollout::sample_groups(state.params, batch, sampling, c.trainer.seed, s);
        trainers::StepMetrics m;
        try {
            m = trainers::train_step(state, groups, c.trainer);
        } catch (const trainers::NonFiniteLoss& e) {
            const fs::path dump = result.dir / "failure";
            fs::create_directories(dump);
            state.save(dump / "state");
            write_text(dump / "rollouts.jsonl", e.diagnostic);
            write_text(dump / "error.txt", std::string(e.what()) + "\n");
            std::cerr << "error: " << e.what() << "; state dumped to " << dump.string() << "\n";
            throw;
        }
        if (m.step % c.run.eval_every == 0) m.heldout_accuracy = record_eval(m.step).accuracy;
        metrics.write(to_json(m));
        result.metrics.push_back(m);
        if (m.step % c.run.checkpoint_every == 0 || m.step == c.trainer.total_steps) {
            state.save(ckpt_dir / ("step_" + std::to_string(m.step)));
        }
    }
    return result;
}

} // namespace cepo::telemetry
