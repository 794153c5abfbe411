// SPDX-License-Identifier: Apache-2.0
#include "cepo/credit/credit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cepo::credit {

const char* method_name(Method m) noexcept {
    switch (m) {
    case Method::GRPO: return "GRPO";
    case Method::RLSD: return "RLSD";
    case Method::CEPO: return "CEPO";
    }
    return "?";
}

GroupAdvantage grpo_advantage(std::span<const double> rewards, double epsilon_sigma) {
    if (rewards.size() < 2) throw std::invalid_argument("grpo_advantage: need at least 2 rewards");
    if (!(epsilon_sigma >= 0.0)) throw std::invalid_argument("grpo_advantage: epsilon_sigma must be >= 0");
    GroupAdvantage g;
    const double n = static_cast<double>(rewards.size());
    for (double r : rewards) g.mu += r;
    g.mu /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - g.mu) * (r - g.mu);
    g.sigma = std::sqrt(var / n);
    g.advantages.assign(rewards.size(), 0.0);
    if (g.sigma == 0.0) {
        g.degenerate = true;
        return g;
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) g.advantages[i] = (rewards[i] - g.mu) / (g.sigma + epsilon_sigma);
    return g;
}

double contrastive_delta(double logp_pos, double logp_neg) noexcept {
    return std::clamp(logp_pos - logp_neg, -kDeltaClamp, kDeltaClamp);
}

double rlsd_delta(double logp_pos, double logp_student) noexcept {
    return contrastive_delta(logp_pos, logp_student);
}

TokenCredit modulated_advantage(double A, double delta, double lambda, double eps_w, Method method) {
    if (!(eps_w > 0.0 && eps_w < 1.0)) {
        throw std::invalid_argument("modulated_advantage: eps_w must lie in (0, 1), got " + std::to_string(eps_w));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("modulated_advantage: lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
    TokenCredit c;
    c.method = method;
    c.delta = delta;
    const double s = A < 0.0 ? -1.0 : 1.0;
    const double w = std::exp(s * delta);
    const double lo = 1.0 - eps_w, hi = 1.0 + eps_w;
    c.clipped = w < lo || w > hi;
    c.weight = std::clamp(w, lo, hi);
    c.modulated_advantage = A * ((1.0 - lambda) + lambda * c.weight);
    return c;
}

TokenCredit grpo_credit(double A) noexcept {
    TokenCredit c;
    c.method = Method::GRPO;
    c.modulated_advantage = A;
    return c;
}

double lambda_at(const LambdaSchedule& schedule, std::size_t step) {
    if (schedule.kind == LambdaSchedule::Kind::Constant) return schedule.lambda0;
    if (step >= schedule.t_warm) return 0.0;
    return schedule.lambda0 * (1.0 - static_cast<double>(step) / static_cast<double>(schedule.t_warm));
}

const char* sharpness_name(Sharpness s) noexcept {
    switch (s) {
    case Sharpness::CepoSharper: return "CEPO-sharper";
    case Sharpness::Equal: return "equal";
    case Sharpness::RlsdLarger: return "RLSD-larger";
    }
    return "?";
}

Sharpness sharpness_compare(double /*logp_pos*/, double logp_neg, double logp_student, int sign_A) {
    if (sign_A != 1 && sign_A != -1) throw std::invalid_argument("sharpness_compare: sign_A must be +1 or -1");
    if (logp_neg == logp_student) return Sharpness::Equal;
    const bool sharper = sign_A > 0 ? logp_neg < logp_student : logp_neg > logp_student;
    return sharper ? Sharpness::CepoSharper : Sharpness::RlsdLarger;
}

std::vector<TokenCredit> trajectory_credits(Method method, double A, std::span<const double> logp_pos,
                                            std::span<const double> logp_ref, double lambda, double eps_w) {
    std::vector<TokenCredit> out;
    if (method == Method::GRPO) {
        out.assign(std::max(logp_pos.size(), logp_ref.size()), grpo_credit(A));
        return out;
    }
    if (logp_pos.size() != logp_ref.size()) throw std::invalid_argument("trajectory_credits: length mismatch");
    out.reserve(logp_pos.size());
    for (std::size_t t = 0; t < logp_pos.size(); ++t) {
        const double d = method == Method::CEPO ? contrastive_delta(logp_pos[t], logp_ref[t])
                                                : rlsd_delta(logp_pos[t], logp_ref[t]);
        out.push_back(modulated_advantage(A, d, lambda, eps_w, method));
    }
    return out;
}

// ---------------------------------------------------------------------------

ExplicitJointModel ExplicitJointModel::random(std::size_t vocab, std::size_t max_len, std::size_t n_refs,
                                              RngStream& rng) {
    if (vocab < 2 || max_len < 1 || n_refs < 2) {
        throw std::invalid_argument("ExplicitJointModel: need vocab >= 2, max_len >= 1, n_refs >= 2");
    }
    ExplicitJointModel m;
    m.vocab_ = vocab;
    m.max_len_ = max_len;
    std::size_t rows = 0, level = 1;
    for (std::size_t t = 0; t < max_len; ++t) {
        rows += level;
        level *= vocab;
    }
    auto positive_simplex = [&](std::vector<double>& v) {
        double s = 0.0;
        for (double& x : v) {
            x = 0.05 + rng.uniform();
            s += x;
        }
        for (double& x : v) x /= s;
    };
    m.priors_.resize(n_refs);
    positive_simplex(m.priors_);
    m.tables_.assign(n_refs, std::vector<double>(rows * vocab));
    std::vector<double> row(vocab);
    for (auto& table : m.tables_) {
        for (std::size_t r = 0; r < rows; ++r) {
            positive_simplex(row);
            std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>(r * vocab));
        }
    }
    return m;
}

ExplicitJointModel ExplicitJointModel::from_tables(std::size_t vocab, std::size_t max_len, std::vector<double> priors,
                                                   std::vector<std::vector<double>> tables) {
    if (vocab < 2 || max_len < 1 || priors.size() < 2 || tables.size() != priors.size()) {
        throw std::invalid_argument("ExplicitJointModel: need vocab >= 2, max_len >= 1, one table per prior");
    }
    std::size_t rows = 0, level = 1;
    for (std::size_t t = 0; t < max_len; ++t) {
        rows += level;
        level *= vocab;
    }
    auto check_simplex = [](std::span<const double> v) {
        double s = 0.0;
        for (double x : v) {
            if (!(x > 0.0)) throw std::invalid_argument("ExplicitJointModel: probabilities must be positive");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("ExplicitJointModel: row does not normalize");
    };
    check_simplex(priors);
    for (const auto& t : tables) {
        if (t.size() != rows * vocab) throw std::invalid_argument("ExplicitJointModel: table size mismatch");
        for (std::size_t r = 0; r < rows; ++r) check_simplex(std::span<const double>(t).subspan(r * vocab, vocab));
    }
    ExplicitJointModel m;
    m.vocab_ = vocab;
    m.max_len_ = max_len;
    m.priors_ = std::move(priors);
    m.tables_ = std::move(tables);
    return m;
}

std::size_t ExplicitJointModel::row_index(std::span<const int> prefix) const {
    if (prefix.size() >= max_len_) throw std::out_of_range("ExplicitJointModel: prefix too long");
    std::size_t offset = 0, level = 1;
    for (std::size_t t = 0; t < prefix.size(); ++t) {
        offset += level;
        level *= vocab_;
    }
    std::size_t code = 0;
    for (int y : prefix) {
        if (y < 0 || static_cast<std::size_t>(y) >= vocab_) throw std::out_of_range("ExplicitJointModel: token");
        code = code * vocab_ + static_cast<std::size_t>(y);
    }
    return offset + code;
}

std::span<const double> ExplicitJointModel::conditional(std::size_t r, std::span<const int> prefix) const {
    return std::span<const double>(tables_.at(r)).subspan(row_index(prefix) * vocab_, vocab_);
}

std::vector<double> ExplicitJointModel::log_posterior(std::span<const int> prefix) const {
    const std::size_t R = priors_.size();
    std::vector<double> joint(R);
    for (std::size_t r = 0; r < R; ++r) {
        double lj = std::log(priors_[r]);
        for (std::size_t s = 0; s < prefix.size(); ++s) {
            lj += std::log(conditional(r, prefix.first(s))[static_cast<std::size_t>(prefix[s])]);
        }
        joint[r] = lj;
    }
    const double mx = *std::max_element(joint.begin(), joint.end());
    double z = 0.0;
    for (double v : joint) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (double& v : joint) v -= lz;
    return joint;
}

std::vector<double> ExplicitJointModel::student_marginal(std::span<const int> prefix) const {
    const auto lp = log_posterior(prefix);
    std::vector<double> out(vocab_, 0.0);
    for (std::size_t r = 0; r < priors_.size(); ++r) {
        const double w = std::exp(lp[r]);
        auto row = conditional(r, prefix);
        for (std::size_t v = 0; v < vocab_; ++v) out[v] += w * row[v];
    }
    return out;
}

double differential_belief_update(const ExplicitJointModel& model, std::span<const int> y, std::size_t t,
                                  std::size_t r_pos, std::size_t r_neg) {
    if (t >= y.size() || t >= model.max_len()) throw std::out_of_range("differential_belief_update: t");
    if (r_pos >= model.references() || r_neg >= model.references()) {
        throw std::out_of_range("differential_belief_update: reference index");
    }
    const auto before = model.log_posterior(y.first(t));
    const auto after = model.log_posterior(y.first(t + 1));
    for (double v : {before[r_pos], before[r_neg], after[r_pos], after[r_neg]}) {
        if (!std::isfinite(v)) throw std::domain_error("differential_belief_update: zero posterior");
    }
    return (after[r_pos] - before[r_pos]) - (after[r_neg] - before[r_neg]);
}

} // namespace cepo::credit
