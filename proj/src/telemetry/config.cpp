// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cepo/telemetry/telemetry.hpp"

namespace cepo::telemetry {

using nlohmann::json;
using nlohmann::ordered_json;
using trainers::Method;

namespace {

const char* lr_schedule_name(trainers::LrSchedule s) {
    return s == trainers::LrSchedule::Cosine ? "cosine" : "constant";
}

trainers::LrSchedule parse_lr_schedule(const std::string& s) {
    if (s == "cosine") return trainers::LrSchedule::Cosine;
    if (s == "constant") return trainers::LrSchedule::Constant;
    throw std::invalid_argument("unknown lr_schedule '" + s + "' (cosine, constant)");
}

const char* lambda_kind_name(credit::LambdaSchedule::Kind k) {
    return k == credit::LambdaSchedule::Kind::LinearDecay ? "linear_decay" : "constant";
}

credit::LambdaSchedule::Kind parse_lambda_kind(const std::string& s) {
    if (s == "linear_decay") return credit::LambdaSchedule::Kind::LinearDecay;
    if (s == "constant") return credit::LambdaSchedule::Kind::Constant;
    throw std::invalid_argument("unknown lambda_schedule.kind '" + s + "' (linear_decay, constant)");
}

/// Overlays `patch` on `base`; every key in the patch must already exist.
void strict_merge(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw std::invalid_argument("config: unknown key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            strict_merge(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

template <class T>
T get(const json& j, const char* section, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + section + "." + key + ": " + e.what());
    }
}

ordered_json trainer_json(const trainers::TrainerConfig& t) {
    ordered_json j;
    j["method"] = trainers::method_name(t.method);
    j["learning_rate"] = t.learning_rate;
    j["ppo_clip_low"] = t.ppo_clip_low;
    j["ppo_clip_high"] = t.ppo_clip_high;
    j["epochs_per_batch"] = t.epochs_per_batch;
    j["lambda_schedule"] = {{"lambda0", t.lambda_schedule.lambda0},
                            {"t_warm", t.lambda_schedule.t_warm},
                            {"kind", lambda_kind_name(t.lambda_schedule.kind)}};
    j["eps_w"] = t.eps_w;
    j["ema_decay"] = t.ema_decay;
    j["teacher_source"] = {{"mode", trainers::teacher_mode_name(t.teacher_source.mode)},
                           {"sync_interval", t.teacher_source.sync_interval}};
    j["batch_prompts"] = t.batch_prompts;
    j["group_size"] = t.group_size;
    j["total_steps"] = t.total_steps;
    j["seed"] = t.seed;
    j["lr_schedule"] = lr_schedule_name(t.lr_schedule);
    j["lr_warmup_steps"] = t.lr_warmup_steps;
    j["weight_decay"] = t.weight_decay;
    j["adam_beta1"] = t.adam_beta1;
    j["adam_beta2"] = t.adam_beta2;
    j["adam_eps"] = t.adam_eps;
    j["epsilon_sigma"] = t.epsilon_sigma;
    j["temperature"] = t.temperature;
    j["max_new"] = t.max_new;
    j["feedback"] = rollout::feedback_name(t.feedback);
    return j;
}

/// Flattens nested objects into "a.b" keys.
void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object()) flatten(it.value(), key, out);
        else out.emplace_back(key, it.value());
    }
}

} // namespace

RunConfig default_run_config(Method method) {
    RunConfig c;
    c.trainer = trainers::TrainerConfig::defaults_for(method);
    return c;
}

void set_seed(RunConfig& c, std::uint64_t seed) {
    c.trainer.seed = seed;
    c.warm_start.seed = seed;
}

void RunConfig::validate() const {
    policy.validate();
    trainer.validate(policy);
    if (task.train_size < trainer.batch_prompts) {
        throw std::invalid_argument("config: task.train_size must be >= trainer.batch_prompts");
    }
    if (task.heldout_size < 1) throw std::invalid_argument("config: task.heldout_size must be >= 1");
    if (run.eval_every < 1) throw std::invalid_argument("config: run.eval_every must be >= 1");
    if (run.eval_problems < 1 || run.eval_samples < 1) {
        throw std::invalid_argument("config: run.eval_problems and run.eval_samples must be >= 1");
    }
    if (run.checkpoint_every < 1) throw std::invalid_argument("config: run.checkpoint_every must be >= 1");
    if (!(warm_start.hint_fraction >= 0.0 && warm_start.hint_fraction <= 1.0)) {
        throw std::invalid_argument("config: warm_start.hint_fraction must lie in [0, 1]");
    }
}

std::string RunConfig::label() const {
    if (!run.name.empty()) return run.name;
    std::vector<std::pair<std::string, json>> mine, base;
    flatten(json(trainer_json(trainer)), "", mine);
    flatten(json(trainer_json(trainers::TrainerConfig::defaults_for(trainer.method))), "", base);
    std::string out = trainers::method_name(trainer.method);
    for (std::size_t i = 0; i < mine.size(); ++i) {
        const auto& key = mine[i].first;
        if (key == "seed" || key == "total_steps") continue;
        if (mine[i].second != base[i].second) out += " " + key + "=" + mine[i].second.dump();
    }
    return out;
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["run"] = {{"name", c.run.name},
                {"output_dir", c.run.output_dir},
                {"eval_every", c.run.eval_every},
                {"eval_problems", c.run.eval_problems},
                {"eval_samples", c.run.eval_samples},
                {"checkpoint_every", c.run.checkpoint_every},
                {"init_checkpoint", c.run.init_checkpoint}};
    j["policy"] = {{"vocab_size", c.policy.vocab_size}, {"max_seq_len", c.policy.max_seq_len},
                   {"max_ref_len", c.policy.max_ref_len}, {"n_layers", c.policy.n_layers},
                   {"n_heads", c.policy.n_heads},       {"d_model", c.policy.d_model},
                   {"d_ff", c.policy.d_ff}};
    j["task"] = {{"train_size", c.task.train_size}, {"heldout_size", c.task.heldout_size},
                 {"k_ops", c.task.k_ops},           {"modulus", c.task.modulus},
                 {"seed", c.task.seed},             {"data_dir", c.task.data_dir}};
    j["warm_start"] = {{"steps", c.warm_start.steps},
                       {"min_steps", c.warm_start.min_steps},
                       {"batch_size", c.warm_start.batch_size},
                       {"learning_rate", c.warm_start.learning_rate},
                       {"hint_fraction", c.warm_start.hint_fraction},
                       {"check_every", c.warm_start.check_every},
                       {"eval_problems", c.warm_start.eval_problems},
                       {"target_validity", c.warm_start.target_validity},
                       {"seed", c.warm_start.seed}};
    j["trainer"] = trainer_json(c.trainer);
    return j;
}

RunConfig run_config_from_json(const json& patch) {
    if (!patch.is_object()) throw std::invalid_argument("config: top level must be an object");
    Method method = Method::CEPO;
    if (patch.contains("trainer") && patch["trainer"].is_object() && patch["trainer"].contains("method")) {
        method = trainers::parse_method(get<std::string>(patch["trainer"], "trainer", "method"));
    }
    json j = to_json(default_run_config(method));
    strict_merge(j, patch, "");

    RunConfig c;
    const auto& r = j["run"];
    c.run.name = get<std::string>(r, "run", "name");
    c.run.output_dir = get<std::string>(r, "run", "output_dir");
    c.run.eval_every = get<std::size_t>(r, "run", "eval_every");
    c.run.eval_problems = get<std::size_t>(r, "run", "eval_problems");
    c.run.eval_samples = get<std::size_t>(r, "run", "eval_samples");
    c.run.checkpoint_every = get<std::size_t>(r, "run", "checkpoint_every");
    c.run.init_checkpoint = get<std::string>(r, "run", "init_checkpoint");

    const auto& p = j["policy"];
    c.policy.vocab_size = get<std::size_t>(p, "policy", "vocab_size");
    c.policy.max_seq_len = get<std::size_t>(p, "policy", "max_seq_len");
    c.policy.max_ref_len = get<std::size_t>(p, "policy", "max_ref_len");
    c.policy.n_layers = get<std::size_t>(p, "policy", "n_layers");
    c.policy.n_heads = get<std::size_t>(p, "policy", "n_heads");
    c.policy.d_model = get<std::size_t>(p, "policy", "d_model");
    c.policy.d_ff = get<std::size_t>(p, "policy", "d_ff");

    const auto& t = j["task"];
    c.task.train_size = get<std::size_t>(t, "task", "train_size");
    c.task.heldout_size = get<std::size_t>(t, "task", "heldout_size");
    c.task.k_ops = get<int>(t, "task", "k_ops");
    c.task.modulus = get<int>(t, "task", "modulus");
    c.task.seed = get<std::uint64_t>(t, "task", "seed");
    c.task.data_dir = get<std::string>(t, "task", "data_dir");

    const auto& w = j["warm_start"];
    c.warm_start.steps = get<std::size_t>(w, "warm_start", "steps");
    c.warm_start.min_steps = get<std::size_t>(w, "warm_start", "min_steps");
    c.warm_start.batch_size = get<std::size_t>(w, "warm_start", "batch_size");
    c.warm_start.learning_rate = get<double>(w, "warm_start", "learning_rate");
    c.warm_start.hint_fraction = get<double>(w, "warm_start", "hint_fraction");
    c.warm_start.check_every = get<std::size_t>(w, "warm_start", "check_every");
    c.warm_start.eval_problems = get<std::size_t>(w, "warm_start", "eval_problems");
    c.warm_start.target_validity = get<double>(w, "warm_start", "target_validity");
    c.warm_start.seed = get<std::uint64_t>(w, "warm_start", "seed");

    const auto& tr = j["trainer"];
    auto& k = c.trainer;
    k.method = method;
    k.learning_rate = get<double>(tr, "trainer", "learning_rate");
    k.ppo_clip_low = get<double>(tr, "trainer", "ppo_clip_low");
    k.ppo_clip_high = get<double>(tr, "trainer", "ppo_clip_high");
    k.epochs_per_batch = get<std::size_t>(tr, "trainer", "epochs_per_batch");
    const auto& ls = tr["lambda_schedule"];
    k.lambda_schedule.lambda0 = get<double>(ls, "trainer.lambda_schedule", "lambda0");
    k.lambda_schedule.t_warm = get<std::size_t>(ls, "trainer.lambda_schedule", "t_warm");
    k.lambda_schedule.kind = parse_lambda_kind(get<std::string>(ls, "trainer.lambda_schedule", "kind"));
    k.eps_w = get<double>(tr, "trainer", "eps_w");
    k.ema_decay = get<double>(tr, "trainer", "ema_decay");
    const auto& ts = tr["teacher_source"];
    k.teacher_source.mode = trainers::parse_teacher_mode(get<std::string>(ts, "trainer.teacher_source", "mode"));
    k.teacher_source.sync_interval = get<std::size_t>(ts, "trainer.teacher_source", "sync_interval");
    k.batch_prompts = get<std::size_t>(tr, "trainer", "batch_prompts");
    k.group_size = get<std::size_t>(tr, "trainer", "group_size");
    k.total_steps = get<std::size_t>(tr, "trainer", "total_steps");
    k.seed = get<std::uint64_t>(tr, "trainer", "seed");
    k.lr_schedule = parse_lr_schedule(get<std::string>(tr, "trainer", "lr_schedule"));
    k.lr_warmup_steps = get<std::size_t>(tr, "trainer", "lr_warmup_steps");
    k.weight_decay = get<double>(tr, "trainer", "weight_decay");
    k.adam_beta1 = get<double>(tr, "trainer", "adam_beta1");
    k.adam_beta2 = get<double>(tr, "trainer", "adam_beta2");
    k.adam_eps = get<double>(tr, "trainer", "adam_eps");
    k.epsilon_sigma = get<double>(tr, "trainer", "epsilon_sigma");
    k.temperature = get<double>(tr, "trainer", "temperature");
    k.max_new = get<std::size_t>(tr, "trainer", "max_new");
    k.feedback = rollout::parse_feedback(get<std::string>(tr, "trainer", "feedback"));

    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

json apply_overrides(json j, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw std::invalid_argument("override '" + o + "' is not of the form section.field=value");
        }
        const std::string path = o.substr(0, eq);
        const std::string text = o.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded()) value = text;
        json* node = &j;
        std::stringstream ss(path);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            if (!node->is_object()) *node = json::object();
            node = &(*node)[parts[i]];
        }
        if (!node->is_object()) *node = json::object();
        (*node)[parts.back()] = std::move(value);
    }
    return j;
}

} // namespace cepo::telemetry
