// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <string>

#include "cepo/trainers/trainers.hpp"

namespace cepo::trainers {

using ad::Tape;
using ad::Tensor;

const char* method_name(Method m) noexcept {
    switch (m) {
    case Method::GRPO: return "GRPO";
    case Method::RLSD: return "RLSD";
    case Method::CEPO: return "CEPO";
    case Method::OPSD: return "OPSD";
    case Method::SDPO: return "SDPO";
    case Method::ContrastiveKL: return "ContrastiveKL";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::GRPO, Method::RLSD, Method::CEPO, Method::OPSD, Method::SDPO, Method::ContrastiveKL}) {
        if (name == method_name(m)) return m;
    }
    throw std::invalid_argument("unknown method '" + std::string(name) +
                                "' (expected GRPO, RLSD, CEPO, OPSD, SDPO or ContrastiveKL)");
}

bool uses_surrogate(Method m) noexcept { return m == Method::GRPO || m == Method::RLSD || m == Method::CEPO; }
bool uses_teacher(Method m) noexcept { return m != Method::GRPO; }

const char* teacher_mode_name(policy::TeacherMode m) noexcept {
    switch (m) {
    case policy::TeacherMode::Actor: return "actor";
    case policy::TeacherMode::FrozenReference: return "frozen";
    case policy::TeacherMode::PeriodicSync: return "periodic";
    }
    return "?";
}

policy::TeacherMode parse_teacher_mode(std::string_view name) {
    if (name == "actor") return policy::TeacherMode::Actor;
    if (name == "frozen") return policy::TeacherMode::FrozenReference;
    if (name == "periodic") return policy::TeacherMode::PeriodicSync;
    throw std::invalid_argument("unknown teacher source mode '" + std::string(name) +
                                "' (expected actor, frozen or periodic)");
}

TrainerConfig TrainerConfig::defaults_for(Method m) {
    TrainerConfig c;
    c.method = m;
    c.learning_rate = m == Method::CEPO ? 1e-3 : 2e-4;
    if (m == Method::RLSD) {
        c.teacher_source.mode = policy::TeacherMode::PeriodicSync;
        c.teacher_source.sync_interval = 50;
    }
    return c;
}

void TrainerConfig::validate(const policy::PolicyConfig& policy) const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("trainer config: " + what); };
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
    if (!(ppo_clip_low > 0.0 && ppo_clip_low < 1.0)) fail("ppo_clip_low must lie in (0, 1)");
    if (!(ppo_clip_high > 0.0 && ppo_clip_high < 1.0)) fail("ppo_clip_high must lie in (0, 1)");
    if (epochs_per_batch < 1) fail("epochs_per_batch must be >= 1");
    if (!(lambda_schedule.lambda0 >= 0.0 && lambda_schedule.lambda0 <= 1.0)) fail("lambda0 must lie in [0, 1]");
    if (!(eps_w > 0.0 && eps_w < 1.0)) fail("eps_w must lie in (0, 1)");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) fail("ema_decay must lie in [0, 1]");
    if (teacher_source.mode == policy::TeacherMode::PeriodicSync && teacher_source.sync_interval < 1) {
        fail("teacher_source.sync_interval must be >= 1");
    }
    if (batch_prompts < 1) fail("batch_prompts must be >= 1");
    if (group_size < 2) fail("group_size must be >= 2");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        fail("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    if (!(epsilon_sigma >= 0.0)) fail("epsilon_sigma must be >= 0");
    if (!(temperature > 0.0)) fail("temperature must be > 0");
    if (max_new < 1) fail("max_new must be >= 1");
    // Whole-response feedback puts a rollout inside the reference block.
    if (max_new + 2 > policy.max_ref_len) {
        fail("max_new + 2 must fit the " + std::to_string(policy.max_ref_len) + " reference slots");
    }
}

double learning_rate_at(const TrainerConfig& config, std::size_t step) {
    if (config.lr_schedule == LrSchedule::Constant) return config.learning_rate;
    const double s = static_cast<double>(step);
    const double warm = static_cast<double>(config.lr_warmup_steps);
    if (step < config.lr_warmup_steps) return config.learning_rate * (s + 1.0) / warm;
    const double span = static_cast<double>(config.total_steps) - warm;
    if (span <= 0.0) return config.learning_rate;
    const double progress = std::min(1.0, (s - warm) / span);
    return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------

void optimizer_update(std::span<Tensor> params, AdamState& state, const AdamConfig& config) {
    for (const auto& p : params) {
        for (double g : p.grad()) {
            if (!std::isfinite(g)) throw std::domain_error("optimizer_update: non-finite gradient");
        }
    }
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].numel(), 0.0);
            state.v[i].assign(params[i].numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("optimizer_update: moment count mismatch");
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    const double decay = 1.0 - config.learning_rate * config.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].mutable_values();
        auto g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != theta.size()) throw std::invalid_argument("optimizer_update: moment shape mismatch");
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            theta[j] = theta[j] * decay - config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

// ---------------------------------------------------------------------------

Tensor ppo_trajectory_objective(Tape& tape, const Tensor& new_logprobs, std::span<const double> old_logprobs,
                                const Tensor& advantages, double clip_low, double clip_high) {
    const std::size_t T = new_logprobs.numel();
    if (T == 0) throw std::invalid_argument("ppo objective: empty trajectory");
    if (old_logprobs.size() != T) {
        throw std::invalid_argument("ppo objective: " + std::to_string(old_logprobs.size()) + " old log-probs for " +
                                    std::to_string(T) + " tokens");
    }
    if (advantages.numel() != T) throw std::invalid_argument("ppo objective: advantage count mismatch");
    if (advantages.requires_grad()) throw std::invalid_argument("ppo objective: advantages must be constants");
    auto old = Tensor::from(new_logprobs.shape(), std::vector<double>(old_logprobs.begin(), old_logprobs.end()));
    auto ratio = ad::exp(tape, ad::sub(tape, new_logprobs, old));
    auto unclipped = ad::mul(tape, ratio, advantages);
    auto clipped = ad::mul(tape, ad::clamp(tape, ratio, 1.0 - clip_low, 1.0 + clip_high), advantages);
    return ad::scale(tape, ad::sum(tape, ad::minimum(tape, unclipped, clipped)), 1.0 / static_cast<double>(T));
}

Tensor ppo_surrogate_loss(Tape& tape, const policy::PolicyParams& params, std::span<const CreditedTrajectory> batch,
                          double clip_low, double clip_high) {
    if (batch.empty()) throw std::invalid_argument("ppo_surrogate_loss: empty batch");
    Tensor total;
    for (const auto& c : batch) {
        if (c.trajectory == nullptr) throw std::invalid_argument("ppo_surrogate_loss: missing trajectory");
        const auto& y = c.trajectory->tokens;
        if (c.trajectory->old_logprobs.size() != y.size()) {
            throw std::invalid_argument("ppo_surrogate_loss: trajectory without old log-probs");
        }
        if (c.advantages.size() != y.size()) throw std::invalid_argument("ppo_surrogate_loss: advantage count mismatch");
        auto rows = policy::forward_logprobs(tape, params, c.prompt, y);
        auto lp = policy::select_tokens(tape, rows, y);
        auto adv = Tensor::from({y.size()}, c.advantages);
        auto obj = ppo_trajectory_objective(tape, lp, c.trajectory->old_logprobs, adv, clip_low, clip_high);
        total = total.defined() ? ad::add(tape, total, obj) : obj;
    }
    return ad::scale(tape, total, -1.0 / static_cast<double>(batch.size()));
}

namespace {

void require_rows(const char* op, const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || a.shape() != b.shape() || a.rows() == 0) {
        throw ad::ShapeError(std::string(op) + ": expected matching non-empty [T, V] rows, got " +
                             ad::shape_str(a.shape()) + " and " + ad::shape_str(b.shape()));
    }
}

/// Σ P_T (log P_T - log P_S) over all entries, teacher detached.
Tensor kl_sum(Tape& tape, const Tensor& teacher_rows, const Tensor& student_rows) {
    auto lt = ad::stop_gradient(tape, teacher_rows);
    auto pt = ad::exp(tape, lt);
    return ad::sum(tape, ad::mul(tape, pt, ad::sub(tape, lt, student_rows)));
}

} // namespace

Tensor opsd_loss(Tape& tape, const Tensor& teacher_rows, const Tensor& student_rows) {
    require_rows("opsd_loss", teacher_rows, student_rows);
    return ad::scale(tape, kl_sum(tape, teacher_rows, student_rows), 1.0 / static_cast<double>(student_rows.rows()));
}

Tensor sdpo_loss(Tape& tape, const Tensor& teacher_rows, const Tensor& student_rows) {
    require_rows("sdpo_loss", teacher_rows, student_rows);
    // JS = ½ Σ p_T log(2 p_T / (p_T + p_S)) + ½ Σ p_S log(2 p_S / (p_T + p_S)),
    // with log(2 p / (p + q)) = ln 2 - softplus(log q - log p).
    const double ln2 = std::numbers::ln2;
    auto lt = ad::stop_gradient(tape, teacher_rows);
    auto pt = ad::exp(tape, lt);
    auto ps = ad::exp(tape, student_rows);
    auto teacher_term =
        ad::mul(tape, pt, ad::add_scalar(tape, ad::scale(tape, ad::softplus(tape, ad::sub(tape, student_rows, lt)), -1.0), ln2));
    auto student_term =
        ad::mul(tape, ps, ad::add_scalar(tape, ad::scale(tape, ad::softplus(tape, ad::sub(tape, lt, student_rows)), -1.0), ln2));
    return ad::scale(tape, ad::sum(tape, ad::add(tape, teacher_term, student_term)),
                     0.5 / static_cast<double>(student_rows.rows()));
}

Tensor contrastive_kl_loss(Tape& tape, const Tensor& positive_rows, const Tensor& negative_rows,
                           const Tensor& student_rows) {
    require_rows("contrastive_kl_loss", positive_rows, student_rows);
    require_rows("contrastive_kl_loss", negative_rows, student_rows);
    auto diff = ad::sub(tape, kl_sum(tape, positive_rows, student_rows), kl_sum(tape, negative_rows, student_rows));
    return ad::scale(tape, diff, 1.0 / static_cast<double>(student_rows.rows()));
}

} // namespace cepo::trainers
