// SPDX-License-Identifier: Apache-2.0
//
// Training objectives and the optimization loop.
//
// GRPO, RLSD and CEPO share the PPO-clipped surrogate and differ only in the
// per-token advantage. OPSD, SDPO and ContrastiveKL match full teacher
// distributions instead; they are here as leakage controls.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cepo/autodiff/ops.hpp"
#include "cepo/credit/credit.hpp"
#include "cepo/policy/policy.hpp"
#include "cepo/rollout/rollout.hpp"

namespace cepo::trainers {

enum class Method { GRPO, RLSD, CEPO, OPSD, SDPO, ContrastiveKL };

const char* method_name(Method m) noexcept;
/// Accepts the names method_name produces. Throws std::invalid_argument otherwise.
Method parse_method(std::string_view name);
/// GRPO, RLSD and CEPO train through the clipped surrogate.
bool uses_surrogate(Method m) noexcept;
bool uses_teacher(Method m) noexcept;

enum class LrSchedule { Constant, Cosine };

struct TeacherSourceConfig {
    policy::TeacherMode mode = policy::TeacherMode::Actor;
    std::size_t sync_interval = 1;  ///< PeriodicSync only
};

const char* teacher_mode_name(policy::TeacherMode m) noexcept;
policy::TeacherMode parse_teacher_mode(std::string_view name);

struct TrainerConfig {
    Method method = Method::CEPO;
    double learning_rate = 1e-3;
    double ppo_clip_low = 0.20;
    double ppo_clip_high = 0.28;
    std::size_t epochs_per_batch = 1;
    credit::LambdaSchedule lambda_schedule;
    double eps_w = 0.5;
    double ema_decay = 0.999;
    TeacherSourceConfig teacher_source;
    std::size_t batch_prompts = 32;
    std::size_t group_size = 8;
    std::size_t total_steps = 50;
    std::uint64_t seed = 0;

    // Optimizer and sampling details.
    LrSchedule lr_schedule = LrSchedule::Cosine;
    std::size_t lr_warmup_steps = 5;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double epsilon_sigma = 0.0;
    double temperature = 1.0;
    std::size_t max_new = 28;
    rollout::FeedbackSource feedback = rollout::FeedbackSource::GtPeerAnswer;

    /// Per-method defaults: learning rate 2e-4 (1e-3 for CEPO), RLSD's
    /// teacher synced every 50 steps, everything else as declared above.
    static TrainerConfig defaults_for(Method m);
    /// Throws std::invalid_argument naming the offending field.
    void validate(const policy::PolicyConfig& policy) const;
};

/// Learning rate for the optimizer step that follows `step` completed steps.
double learning_rate_at(const TrainerConfig& config, std::size_t step);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t t = 0;
};

/// Decoupled weight decay with bias-corrected moments:
///   θ ← θ (1 - lr wd) - lr m̂ / (√v̂ + eps)
/// A parameter without a gradient buffer counts as zero gradient. Throws
/// std::domain_error on a non-finite gradient (nothing is modified then).
void optimizer_update(std::span<ad::Tensor> params, AdamState& state, const AdamConfig& config);

// ---------------------------------------------------------------------------
// Losses. Every function returns a scalar on `tape`.

/// One trajectory's clipped objective (1/|y|) Σ_t min(ρ_t Â_t, clip(ρ_t) Â_t)
/// with ρ_t = exp(new - old). `advantages` must not require grad.
ad::Tensor ppo_trajectory_objective(ad::Tape& tape, const ad::Tensor& new_logprobs,
                                    std::span<const double> old_logprobs, const ad::Tensor& advantages,
                                    double clip_low, double clip_high);

struct CreditedTrajectory {
    Tokens prompt;
    const rollout::Trajectory* trajectory = nullptr;
    std::vector<double> advantages;  ///< Â_t per token
};

/// −mean over trajectories of ppo_trajectory_objective, with new log-probs
/// from `params`. Throws std::invalid_argument when old log-probs or
/// advantages are missing or mis-sized.
ad::Tensor ppo_surrogate_loss(ad::Tape& tape, const policy::PolicyParams& params,
                              std::span<const CreditedTrajectory> batch, double clip_low, double clip_high);

/// Mean over rows of KL(P_T ‖ P_S). Both inputs are [T, V] log-prob rows; the
/// teacher rows pass through stop_gradient.
ad::Tensor opsd_loss(ad::Tape& tape, const ad::Tensor& teacher_rows, const ad::Tensor& student_rows);
/// Mean over rows of the Jensen-Shannon divergence, teacher under stop_gradient.
ad::Tensor sdpo_loss(ad::Tape& tape, const ad::Tensor& teacher_rows, const ad::Tensor& student_rows);
/// Mean over rows of KL(P_T+ ‖ P_S) − KL(P_T- ‖ P_S), both teachers under stop_gradient.
ad::Tensor contrastive_kl_loss(ad::Tape& tape, const ad::Tensor& positive_rows, const ad::Tensor& negative_rows,
                               const ad::Tensor& student_rows);

// ---------------------------------------------------------------------------
// Batch gradients

struct CreditCounts {
    std::size_t tokens = 0;
    std::size_t positive = 0;  ///< Δ ≥ 1e-6
    std::size_t negative = 0;  ///< Δ ≤ -1e-6
    std::size_t clipped = 0;
};

inline constexpr double kZeroDeltaBand = 1e-6;

struct GradientOptions {
    /// Record teacher passes on the student's tape and derive Â from them
    /// with tape ops behind a stop_gradient, instead of from plain numbers.
    bool teacher_on_tape = false;
    /// CEPO: score P_T- with the student log-probs for every token.
    bool force_negative_student = false;
    /// Replace the computed Â with these values, indexed [group][trajectory][token].
    const std::vector<std::vector<std::vector<double>>>* advantage_override = nullptr;
    /// Applied to every teacher log-prob row block ([T, V] values) before it
    /// is used, together with the scored continuation. Not combinable with
    /// teacher_on_tape.
    std::function<void(std::span<double> rows, std::size_t vocab, std::span<const TokenId> continuation)>
        teacher_rows_hook;
};

/// Parameters each teacher context is scored with.
struct TeacherParams {
    const policy::PolicyParams* positive = nullptr;
    const policy::PolicyParams* negative = nullptr;
};

struct BatchGradient {
    double loss = 0.0;
    /// [group][trajectory][token]; empty groups for skipped (degenerate) ones
    /// and for the distribution-matching methods.
    std::vector<std::vector<std::vector<credit::TokenCredit>>> credits;
    std::vector<std::vector<double>> grads;  ///< one buffer per actor tensor
    CreditCounts counts;
    std::size_t trajectories_used = 0;
    std::size_t degenerate_groups = 0;
};

/// Zeroes the actor's gradients, accumulates the batch gradient of the
/// method's loss into them and returns a copy. Degenerate groups are skipped
/// by the surrogate methods; the distribution-matching methods train on every
/// trajectory. CEPO falls back to P_T- = P_S when a group has no r⁻.
BatchGradient compute_batch_gradient(policy::PolicyParams& actor, const TeacherParams& teachers,
                                     std::span<const rollout::RolloutGroup> groups, const TrainerConfig& config,
                                     double lambda, const GradientOptions& options = {});

// ---------------------------------------------------------------------------
// Run state

struct StepState {
    std::size_t step = 0;  ///< completed optimizer steps
    policy::PolicyParams params;
    AdamState moments;
    std::optional<policy::PolicyParams> ema;  ///< SDPO teacher
    policy::TeacherSource teacher;

    /// Fresh state: EMA equal to the actor for SDPO, teacher snapshot per the
    /// configured source.
    static StepState init(const TrainerConfig& config, policy::PolicyParams initial);

    /// Writes params.ckpt, optimizer.ckpt and, when present, ema.ckpt and
    /// teacher.ckpt into `dir`. Every random stream derives from (seed, step),
    /// so nothing else is needed to resume bit-identically.
    void save(const std::filesystem::path& dir) const;
    static StepState load(const std::filesystem::path& dir);
};

struct StepMetrics {
    std::size_t step = 0;
    double mean_reward = 0.0;
    double train_accuracy = 0.0;  ///< fraction of prompts with at least one accepted rollout
    std::optional<double> heldout_accuracy;
    double pos_delta_fraction = 0.0;
    double neg_delta_fraction = 0.0;
    double clip_rate = 0.0;
    double lambda = 0.0;
    double degenerate_group_fraction = 0.0;
    double loss = 0.0;
};

/// Raised when the loss turns non-finite. `diagnostic` holds a rollout dump
/// of the offending group.
class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(const std::string& what, std::string diagnostic)
        : std::runtime_error(what), diagnostic(std::move(diagnostic)) {}
    std::string diagnostic;
};

/// One optimizer update on groups sampled from state.params (or more when
/// epochs_per_batch > 1, reusing the first epoch's Â). Advances state.step,
/// then refreshes the teacher snapshot and the EMA.
StepMetrics train_step(StepState& state, std::span<const rollout::RolloutGroup> groups,
                       const TrainerConfig& config);

/// Problems for step `step` (0-based): batch_prompts distinct indices drawn
/// from a stream derived from (seed, step).
std::vector<synthmath::Problem> select_batch(std::span<const synthmath::Problem> train, std::size_t batch_prompts,
                                             std::uint64_t seed, std::size_t step);

/// Rollout options implied by the trainer config.
rollout::GroupSampling group_sampling(const TrainerConfig& config);

// ---------------------------------------------------------------------------
// Supervised warm start

struct WarmStartConfig {
    std::size_t steps = 500;          ///< upper bound on optimizer steps
    std::size_t min_steps = 500;      ///< keep training at least this long
    std::size_t batch_size = 32;
    double learning_rate = 3e-3;
    double hint_fraction = 0.5;       ///< share of sequences shown with the answer hint
    std::size_t check_every = 25;
    std::size_t eval_problems = 200;
    double target_validity = 0.9;
    std::uint64_t seed = 0;
};

struct WarmStartReport {
    std::vector<double> losses;
    std::size_t steps_run = 0;
    double format_validity = 0.0;
    double heldout_accuracy = 0.0;
    bool reached_target = false;
};

/// One supervised sequence: predict `target` after `prompt`.
struct SupervisedExample {
    Tokens prompt;
    Tokens target;
};

/// Worked-solution targets; with `hint`, the prompt carries the ground
/// truth as a teacher-style reference block.
SupervisedExample supervised_example(const policy::PolicyConfig& config, const synthmath::Problem& p, bool hint);

/// Mean over examples of the mean next-token NLL; one AdamW step. Returns the
/// loss before the update.
double supervised_step(policy::PolicyParams& params, AdamState& adam, std::span<const SupervisedExample> batch,
                       const AdamConfig& config);

/// Trains until held-out format validity reaches the target (checked every
/// check_every steps, after min_steps) or the step budget runs out. Zero
/// steps leaves the parameters untouched.
WarmStartReport warm_start(policy::PolicyParams& params, std::span<const synthmath::Problem> train,
                           std::span<const synthmath::Problem> heldout, const WarmStartConfig& config,
                           const policy::SamplingOptions& sampling);

} // namespace cepo::trainers
