// SPDX-License-Identifier: Apache-2.0
//
// Advantage and token-weight arithmetic.
//
//   GRPO   A = (R - mu) / (sigma + eps_sigma), the same for every token
//   RLSD   delta = log P_T+(y_t) - log P_S(y_t)
//   CEPO   delta = log P_T+(y_t) - log P_T-(y_t)
//   both   w = exp(sign(A) * delta), clipped to [1 - eps_w, 1 + eps_w]
//          A_hat = A * ((1 - lambda) + lambda * w_clip)
//
// Every delta is a plain number: teacher log-probs enter the update only as
// values, never as something to differentiate through.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cepo/common/rng.hpp"

namespace cepo::credit {

enum class Method { GRPO, RLSD, CEPO };

const char* method_name(Method m) noexcept;

struct TokenCredit {
    double delta = 0.0;
    double weight = 1.0;  ///< w_t after clipping
    bool clipped = false;
    double modulated_advantage = 0.0;
    Method method = Method::GRPO;
};

struct GroupAdvantage {
    std::vector<double> advantages;
    double mu = 0.0;
    double sigma = 0.0;
    bool degenerate = false;
};

/// Population standard deviation. A group with sigma = 0 gets all-zero
/// advantages and the degenerate flag. Throws std::invalid_argument when
/// fewer than 2 rewards or epsilon_sigma < 0.
GroupAdvantage grpo_advantage(std::span<const double> rewards, double epsilon_sigma = 0.0);

inline constexpr double kDeltaClamp = 50.0;

/// log P_T+ - log P_T-, clamped to [-50, 50].
double contrastive_delta(double logp_pos, double logp_neg) noexcept;
/// log P_T+ - log P_S, clamped to [-50, 50].
double rlsd_delta(double logp_pos, double logp_student) noexcept;

/// Throws std::invalid_argument when eps_w is outside (0, 1) or lambda outside [0, 1].
TokenCredit modulated_advantage(double A, double delta, double lambda, double eps_w, Method method = Method::CEPO);

/// GRPO token credit: unit weight, A_hat = A.
TokenCredit grpo_credit(double A) noexcept;

struct LambdaSchedule {
    enum class Kind { LinearDecay, Constant };
    double lambda0 = 0.5;
    std::size_t t_warm = 25;
    Kind kind = Kind::LinearDecay;
};

/// lambda0 * max(0, 1 - step / t_warm) for LinearDecay (t_warm = 0 decays
/// immediately), lambda0 for Constant.
double lambda_at(const LambdaSchedule& schedule, std::size_t step);

enum class Sharpness { CepoSharper, Equal, RlsdLarger };

const char* sharpness_name(Sharpness s) noexcept;

/// Compares the CEPO and RLSD weights of one token without evaluating them.
/// For sign_A = +1 CEPO is sharper iff logp_neg < logp_student; for -1 iff
/// logp_neg > logp_student; equal iff the two are equal.
Sharpness sharpness_compare(double logp_pos, double logp_neg, double logp_student, int sign_A);

/// Per-token credits for one trajectory. `logp_ref` is log P_T- for CEPO and
/// log P_S for RLSD; both spans are ignored by GRPO.
std::vector<TokenCredit> trajectory_credits(Method method, double A, std::span<const double> logp_pos,
                                            std::span<const double> logp_ref, double lambda, double eps_w);

// ---------------------------------------------------------------------------
// Explicit joint model: a reference set with priors and full conditional
// tables P(y_t | x, r, y_<t) over a tiny vocabulary, so posteriors over
// references can be enumerated exactly.

class ExplicitJointModel {
public:
    /// Random model with strictly positive tables. Requires vocab >= 2,
    /// max_len >= 1 and n_refs >= 2.
    static ExplicitJointModel random(std::size_t vocab, std::size_t max_len, std::size_t n_refs, RngStream& rng);
    /// Explicit tables: per reference, one row of `vocab` probabilities for
    /// every prefix shorter than max_len, ordered by length then base-vocab
    /// code. Rows and priors must be positive and normalized within 1e-12.
    static ExplicitJointModel from_tables(std::size_t vocab, std::size_t max_len, std::vector<double> priors,
                                          std::vector<std::vector<double>> tables);

    std::size_t vocab() const noexcept { return vocab_; }
    std::size_t max_len() const noexcept { return max_len_; }
    std::size_t references() const noexcept { return priors_.size(); }
    std::span<const double> priors() const noexcept { return priors_; }

    /// P(· | x, r, prefix), prefix shorter than max_len.
    std::span<const double> conditional(std::size_t r, std::span<const int> prefix) const;
    /// log P(r | x, prefix) by exact Bayes.
    std::vector<double> log_posterior(std::span<const int> prefix) const;
    /// Σ_r P(r | x, prefix) P(· | x, r, prefix).
    std::vector<double> student_marginal(std::span<const int> prefix) const;

private:
    std::size_t row_index(std::span<const int> prefix) const;

    std::size_t vocab_ = 0;
    std::size_t max_len_ = 0;
    std::vector<double> priors_;
    std::vector<std::vector<double>> tables_;  ///< per reference, rows of `vocab_`
};

/// [log P(r+|y<=t) - log P(r+|y<t)] - [log P(r-|y<=t) - log P(r-|y<t)].
/// Throws std::domain_error when a posterior is zero.
double differential_belief_update(const ExplicitJointModel& model, std::span<const int> y, std::size_t t,
                                  std::size_t r_pos, std::size_t r_neg);

} // namespace cepo::credit
