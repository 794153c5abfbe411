// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cepo/trainers/trainers.hpp"

namespace cepo::trainers {

using ad::Tape;
using ad::Tensor;
using policy::PolicyParams;

namespace {

struct TeacherPass {
    const PolicyParams* params;
    bool on_tape;
    const GradientOptions* options;
};

/// Teacher log-prob rows for `prompt` ⊕ H ⊕ `reference` ⊕ | scoring `y`.
Tensor teacher_rows(Tape& tape, const TeacherPass& pass, std::span<const TokenId> prompt,
                    std::span<const TokenId> reference, std::span<const TokenId> y) {
    const auto tp = policy::build_teacher_prompt(pass.params->config(), prompt, reference);
    if (pass.on_tape) return policy::forward_logprobs(tape, *pass.params, tp, y);
    Tape inference(Tape::Mode::Inference);
    auto rows = policy::forward_logprobs(inference, *pass.params, tp, y);
    if (pass.options->teacher_rows_hook) pass.options->teacher_rows_hook(rows.mutable_values(), rows.cols(), y);
    return rows;
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void tally(CreditCounts& c, std::span<const credit::TokenCredit> credits) {
    for (const auto& k : credits) {
        ++c.tokens;
        if (k.delta >= kZeroDeltaBand) ++c.positive;
        else if (k.delta <= -kZeroDeltaBand) ++c.negative;
        if (k.clipped) ++c.clipped;
    }
}

std::string group_dump(std::size_t step, const rollout::RolloutGroup& g) {
    std::ostringstream os;
    rollout::append_rollout_dump(os, step, g);
    return os.str();
}

} // namespace

BatchGradient compute_batch_gradient(PolicyParams& actor, const TeacherParams& teachers,
                                     std::span<const rollout::RolloutGroup> groups, const TrainerConfig& config,
                                     double lambda, const GradientOptions& options) {
    if (options.teacher_on_tape && options.teacher_rows_hook) {
        throw std::invalid_argument("compute_batch_gradient: teacher_rows_hook needs inference teacher passes");
    }
    const Method method = config.method;
    const bool surrogate = uses_surrogate(method);
    if (uses_teacher(method) && (teachers.positive == nullptr || teachers.negative == nullptr)) {
        throw std::invalid_argument(std::string("compute_batch_gradient: ") + method_name(method) +
                                    " needs teacher parameters");
    }
    actor.set_requires_grad(true);
    actor.zero_grad();

    BatchGradient out;
    out.credits.resize(groups.size());
    for (const auto& g : groups) {
        if (g.degenerate()) ++out.degenerate_groups;
        if (!surrogate || !g.degenerate()) out.trajectories_used += g.size();
    }
    const double inv_n = out.trajectories_used ? 1.0 / static_cast<double>(out.trajectories_used) : 0.0;
    const TeacherPass positive{teachers.positive, options.teacher_on_tape, &options};
    const TeacherPass negative{teachers.negative, options.teacher_on_tape, &options};

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& group = groups[gi];
        if (surrogate && group.degenerate()) continue;
        const auto& x = group.problem.prompt;
        std::vector<double> rewards;
        for (const auto& t : group.trajectories) rewards.push_back(static_cast<double>(t.reward));
        const auto adv = credit::grpo_advantage(rewards, config.epsilon_sigma);
        if (surrogate) out.credits[gi].resize(group.size());

        for (std::size_t ti = 0; ti < group.size(); ++ti) {
            const auto& traj = group.trajectories[ti];
            const auto& y = traj.tokens;
            if (traj.old_logprobs.size() != y.size()) {
                throw std::invalid_argument("compute_batch_gradient: trajectory without old log-probs");
            }
            const std::size_t T = y.size();
            Tape tape;
            auto student_rows = policy::forward_logprobs(tape, actor, x, y);
            Tensor loss;
            if (surrogate) {
                const double A = adv.advantages[ti];
                auto& credits = out.credits[gi][ti];
                Tensor a_hat;
                if (method == Method::GRPO) {
                    credits.assign(T, credit::grpo_credit(A));
                    a_hat = Tensor::from({T}, std::vector<double>(T, A));
                } else {
                    auto pos = policy::select_tokens(tape, teacher_rows(tape, positive, x, group.r_plus, y), y);
                    Tensor ref;
                    if (method == Method::CEPO && group.r_minus && !options.force_negative_student) {
                        ref = policy::select_tokens(tape, teacher_rows(tape, negative, x, *group.r_minus, y), y);
                    } else {
                        ref = Tensor::from({T}, traj.old_logprobs);
                    }
                    const auto cm = method == Method::CEPO ? credit::Method::CEPO : credit::Method::RLSD;
                    credits = credit::trajectory_credits(cm, A, values_of(pos), values_of(ref), lambda, config.eps_w);
                    if (options.teacher_on_tape) {
                        // Same arithmetic as modulated_advantage, built from tape ops.
                        auto delta = ad::clamp(tape, ad::sub(tape, pos, ref), -credit::kDeltaClamp, credit::kDeltaClamp);
                        auto d = ad::stop_gradient(tape, delta);
                        const double s = A < 0.0 ? -1.0 : 1.0;
                        auto w = ad::clamp(tape, ad::exp(tape, ad::scale(tape, d, s)), 1.0 - config.eps_w,
                                           1.0 + config.eps_w);
                        a_hat = ad::scale(tape, ad::add_scalar(tape, ad::scale(tape, w, lambda), 1.0 - lambda), A);
                    } else {
                        std::vector<double> a(T);
                        for (std::size_t t = 0; t < T; ++t) a[t] = credits[t].modulated_advantage;
                        a_hat = Tensor::from({T}, std::move(a));
                    }
                }
                if (options.advantage_override) {
                    const auto& o = options.advantage_override->at(gi).at(ti);
                    if (o.size() != T) throw std::invalid_argument("compute_batch_gradient: override size mismatch");
                    a_hat = Tensor::from({T}, o);
                }
                tally(out.counts, credits);
                auto lp = policy::select_tokens(tape, student_rows, y);
                auto obj = ppo_trajectory_objective(tape, lp, traj.old_logprobs, a_hat, config.ppo_clip_low,
                                                    config.ppo_clip_high);
                loss = ad::scale(tape, obj, -inv_n);
            } else {
                auto pos_rows = teacher_rows(tape, positive, x, group.r_plus, y);
                Tensor l;
                if (method == Method::OPSD) {
                    l = opsd_loss(tape, pos_rows, student_rows);
                } else if (method == Method::SDPO) {
                    l = sdpo_loss(tape, pos_rows, student_rows);
                } else if (group.r_minus) {
                    l = contrastive_kl_loss(tape, pos_rows, teacher_rows(tape, negative, x, *group.r_minus, y),
                                            student_rows);
                } else {
                    // P_T- = P_S: the negative term is zero with zero gradient.
                    l = opsd_loss(tape, pos_rows, student_rows);
                }
                loss = ad::scale(tape, l, inv_n);
            }
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw NonFiniteLoss(std::string(method_name(method)) + ": non-finite loss on problem " +
                                        std::to_string(group.problem.id) + ", trajectory " + std::to_string(ti),
                                    group_dump(0, group));
            }
            out.loss += value;
            tape.backward(loss);
        }
    }

    for (const auto& p : actor.tensors()) {
        if (p.has_grad()) out.grads.emplace_back(p.grad().begin(), p.grad().end());
        else out.grads.emplace_back(p.numel(), 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------

StepState StepState::init(const TrainerConfig& config, PolicyParams initial) {
    StepState s;
    s.params = std::move(initial);
    if (config.method == Method::SDPO) s.ema = s.params.clone();
    switch (config.teacher_source.mode) {
    case policy::TeacherMode::Actor: s.teacher = policy::TeacherSource::actor(); break;
    case policy::TeacherMode::FrozenReference: s.teacher = policy::TeacherSource::frozen(s.params); break;
    case policy::TeacherMode::PeriodicSync:
        s.teacher = policy::TeacherSource::periodic(s.params, config.teacher_source.sync_interval);
        break;
    }
    return s;
}

void StepState::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    params.save(dir / "params.ckpt");
    ad::TensorList opt;
    opt.push_back({"meta", Tensor::from({4}, {static_cast<double>(step), static_cast<double>(moments.t),
                                              static_cast<double>(teacher.mode()),
                                              static_cast<double>(teacher.sync_interval())})});
    for (std::size_t i = 0; i < moments.m.size(); ++i) {
        opt.push_back({"m/" + std::to_string(i), Tensor::from({moments.m[i].size()}, moments.m[i])});
        opt.push_back({"v/" + std::to_string(i), Tensor::from({moments.v[i].size()}, moments.v[i])});
    }
    ad::save_checkpoint(dir / "optimizer.ckpt", opt);
    std::filesystem::remove(dir / "ema.ckpt");
    std::filesystem::remove(dir / "teacher.ckpt");
    if (ema) ema->save(dir / "ema.ckpt");
    if (teacher.snapshot()) teacher.snapshot()->save(dir / "teacher.ckpt");
}

StepState StepState::load(const std::filesystem::path& dir) {
    StepState s;
    s.params = PolicyParams::load(dir / "params.ckpt");
    const auto opt = ad::load_checkpoint(dir / "optimizer.ckpt");
    const auto meta = ad::find_tensor(opt, "meta").values();
    if (meta.size() != 4) throw std::runtime_error("optimizer.ckpt: malformed meta entry");
    s.step = static_cast<std::size_t>(meta[0]);
    s.moments.t = static_cast<std::uint64_t>(meta[1]);
    const auto mode = static_cast<policy::TeacherMode>(static_cast<int>(meta[2]));
    const auto interval = static_cast<std::size_t>(meta[3]);
    for (std::size_t i = 0;; ++i) {
        const auto name = std::to_string(i);
        auto it = std::find_if(opt.begin(), opt.end(), [&](const auto& e) { return e.name == "m/" + name; });
        if (it == opt.end()) break;
        const auto m = it->tensor.values();
        const auto v = ad::find_tensor(opt, "v/" + name).values();
        s.moments.m.emplace_back(m.begin(), m.end());
        s.moments.v.emplace_back(v.begin(), v.end());
    }
    if (std::filesystem::exists(dir / "ema.ckpt")) s.ema = PolicyParams::load(dir / "ema.ckpt");
    switch (mode) {
    case policy::TeacherMode::Actor: s.teacher = policy::TeacherSource::actor(); break;
    case policy::TeacherMode::FrozenReference:
        s.teacher = policy::TeacherSource::frozen(PolicyParams::load(dir / "teacher.ckpt"));
        break;
    case policy::TeacherMode::PeriodicSync:
        s.teacher = policy::TeacherSource::periodic(PolicyParams::load(dir / "teacher.ckpt"), interval);
        break;
    default: throw std::runtime_error("optimizer.ckpt: unknown teacher mode");
    }
    return s;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::vector<double>>> advantages_of(const BatchGradient& g) {
    std::vector<std::vector<std::vector<double>>> out(g.credits.size());
    for (std::size_t gi = 0; gi < g.credits.size(); ++gi) {
        for (const auto& traj : g.credits[gi]) {
            auto& a = out[gi].emplace_back();
            for (const auto& c : traj) a.push_back(c.modulated_advantage);
        }
    }
    return out;
}

} // namespace

StepMetrics train_step(StepState& state, std::span<const rollout::RolloutGroup> groups, const TrainerConfig& config) {
    if (groups.empty()) throw std::invalid_argument("train_step: empty batch");
    const bool evidence = config.method == Method::RLSD || config.method == Method::CEPO;
    const double lambda = evidence ? credit::lambda_at(config.lambda_schedule, state.step) : 0.0;
    const PolicyParams& teacher = state.teacher.resolve(state.params);
    TeacherParams tp{&teacher, &teacher};
    if (config.method == Method::SDPO) {
        if (!state.ema) throw std::logic_error("train_step: SDPO state without EMA parameters");
        tp.positive = &*state.ema;
    }
    AdamConfig adam{learning_rate_at(config, state.step), config.adam_beta1, config.adam_beta2, config.adam_eps,
                    config.weight_decay};

    BatchGradient first;
    try {
        first = compute_batch_gradient(state.params, tp, groups, config, lambda);
    } catch (NonFiniteLoss& e) {
        e.diagnostic = "step " + std::to_string(state.step + 1) + "\n" + e.diagnostic;
        throw;
    }
    // Nothing to learn from a batch of degenerate groups; leave θ and the
    // moments alone rather than coast on momentum.
    if (first.trajectories_used > 0) {
        auto tensors = state.params.tensors();
        optimizer_update(tensors, state.moments, adam);
        if (config.epochs_per_batch > 1) {
            const auto frozen = advantages_of(first);
            GradientOptions opts;
            if (uses_surrogate(config.method)) opts.advantage_override = &frozen;
            for (std::size_t e = 1; e < config.epochs_per_batch; ++e) {
                compute_batch_gradient(state.params, tp, groups, config, lambda, opts);
                optimizer_update(tensors, state.moments, adam);
            }
        }
    }

    ++state.step;
    state.teacher.after_step(state.step, state.params);
    if (state.ema) {
        const double b = config.ema_decay;
        auto e = state.ema->tensors();
        auto p = state.params.tensors();
        for (std::size_t i = 0; i < e.size(); ++i) {
            auto ev = e[i].mutable_values();
            auto pv = p[i].values();
            for (std::size_t j = 0; j < ev.size(); ++j) ev[j] = b * ev[j] + (1.0 - b) * pv[j];
        }
    }

    StepMetrics m;
    m.step = state.step;
    std::size_t trajectories = 0, correct = 0, solved = 0;
    for (const auto& g : groups) {
        bool any = false;
        for (const auto& t : g.trajectories) {
            ++trajectories;
            correct += static_cast<std::size_t>(t.reward);
            any |= t.reward == 1;
        }
        solved += any ? 1 : 0;
    }
    m.mean_reward = static_cast<double>(correct) / static_cast<double>(trajectories);
    m.train_accuracy = static_cast<double>(solved) / static_cast<double>(groups.size());
    const auto& c = first.counts;
    if (c.tokens > 0) {
        const double n = static_cast<double>(c.tokens);
        m.pos_delta_fraction = static_cast<double>(c.positive) / n;
        m.neg_delta_fraction = static_cast<double>(c.negative) / n;
        m.clip_rate = static_cast<double>(c.clipped) / n;
    }
    m.lambda = lambda;
    m.degenerate_group_fraction = static_cast<double>(first.degenerate_groups) / static_cast<double>(groups.size());
    m.loss = first.loss;
    return m;
}

std::vector<synthmath::Problem> select_batch(std::span<const synthmath::Problem> train, std::size_t batch_prompts,
                                             std::uint64_t seed, std::size_t step) {
    if (batch_prompts == 0 || batch_prompts > train.size()) {
        throw std::invalid_argument("select_batch: need 1 <= batch_prompts <= " + std::to_string(train.size()));
    }
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RngStream rng(derive_seed(seed, {0xBA7C, step}));
    for (std::size_t i = 0; i < batch_prompts; ++i) {
        std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(idx.size() - i))]);
    }
    std::vector<synthmath::Problem> out;
    out.reserve(batch_prompts);
    for (std::size_t i = 0; i < batch_prompts; ++i) out.push_back(train[idx[i]]);
    return out;
}

rollout::GroupSampling group_sampling(const TrainerConfig& config) {
    rollout::GroupSampling g;
    g.group_size = config.group_size;
    g.sampling.temperature = config.temperature;
    g.sampling.max_new = config.max_new;
    g.feedback = config.feedback;
    return g;
}

} // namespace cepo::trainers
