// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "cepo/autodiff/kernels.hpp"
#include "cepo/policy/policy.hpp"

namespace cepo::policy {

namespace kn = ad::kernels;

IncrementalDecoder::IncrementalDecoder(const PolicyParams& params) : params_(&params) {
    const auto& c = params.config();
    const std::size_t cap = c.max_seq_len + c.max_ref_len;
    qkv_.assign(c.n_layers, std::vector<double>(cap * 3 * c.d_model));
    x_.resize(c.d_model);
    h_.resize(c.d_model);
    attn_.resize(c.d_model);
    proj_.resize(c.d_model);
    ff_.resize(c.d_ff);
    logits_.resize(c.vocab_size);
    logprobs_.resize(c.vocab_size);
    probs_.resize(cap);
}

void IncrementalDecoder::push(TokenId token, std::int32_t position, std::size_t blocked_begin,
                              std::size_t blocked_end) {
    const auto& P = *params_;
    const auto& c = P.config();
    const std::size_t d = c.d_model, w = 3 * d, hd = d / c.n_heads;
    if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
        throw std::invalid_argument("IncrementalDecoder: token id " + std::to_string(token) + " outside vocabulary");
    }
    if (position < 0 || static_cast<std::size_t>(position) >= c.max_seq_len + c.max_ref_len) {
        throw std::invalid_argument("IncrementalDecoder: position out of range");
    }
    if (length_ >= c.max_seq_len + c.max_ref_len) throw std::length_error("IncrementalDecoder: cache full");
    if (blocked_end <= blocked_begin) blocked_begin = blocked_end = 0;

    const double* te = P.token_embedding.values().data() + static_cast<std::size_t>(token) * d;
    const double* pe = P.position_embedding.values().data() + static_cast<std::size_t>(position) * d;
    for (std::size_t j = 0; j < d; ++j) x_[j] = te[j] + pe[j];

    const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const auto& L = P.layers[l];
        kn::layer_norm_row(x_, L.ln1_gain.values(), L.ln1_bias.values(), h_, {}, nullptr);
        double* row = qkv_[l].data() + length_ * w;
        std::span<double> qkv_row(row, w);
        kn::matvec_row(h_, L.w_qkv.values(), w, qkv_row);
        kn::add_row(qkv_row, L.b_qkv.values());
        const double* base = qkv_[l].data();
        for (std::size_t h = 0; h < c.n_heads; ++h) {
            kn::attend_row(row + h * hd, base + d + h * hd, base + 2 * d + h * hd, w, hd, length_ + 1, blocked_begin,
                           blocked_end, sc, probs_.data(), attn_.data() + h * hd);
        }
        kn::matvec_row(attn_, L.w_out.values(), d, proj_);
        kn::add_row(proj_, L.b_out.values());
        for (std::size_t j = 0; j < d; ++j) x_[j] = x_[j] + proj_[j];
        kn::layer_norm_row(x_, L.ln2_gain.values(), L.ln2_bias.values(), h_, {}, nullptr);
        kn::matvec_row(h_, L.w_ff1.values(), c.d_ff, ff_);
        kn::add_row(ff_, L.b_ff1.values());
        for (double& v : ff_) v = kn::gelu(v);
        kn::matvec_row(ff_, L.w_ff2.values(), d, proj_);
        kn::add_row(proj_, L.b_ff2.values());
        for (std::size_t j = 0; j < d; ++j) x_[j] = x_[j] + proj_[j];
    }
    kn::layer_norm_row(x_, P.final_gain.values(), P.final_bias.values(), h_, {}, nullptr);
    kn::matvec_row(h_, P.head_w.values(), c.vocab_size, logits_);
    kn::add_row(logits_, P.head_b.values());
    kn::log_softmax_row(logits_, logprobs_);
    ++length_;
}

RolloutDraft sample_rollout(const PolicyParams& params, std::span<const TokenId> prompt,
                            const SamplingOptions& options, RngStream& rng) {
    if (!options.greedy && !(options.temperature > 0.0)) {
        throw std::invalid_argument("sample_rollout: temperature must be > 0 (use greedy mode for the limit)");
    }
    const auto& c = params.config();
    const SequenceLayout L = layout_sequence(c, prompt, {});
    const std::size_t x_len = L.has_block() ? L.tokens.size() - (L.block_end - L.block_begin) : L.tokens.size();
    if (x_len + options.max_new > c.max_seq_len) {
        throw std::length_error("sample_rollout: prompt plus max_new exceeds max_seq_len");
    }
    IncrementalDecoder dec(params);
    for (std::size_t i = 0; i < L.tokens.size(); ++i) dec.push(L.tokens[i], L.positions[i]);

    RolloutDraft out;
    std::vector<double> weights(c.vocab_size);
    for (std::size_t t = 0; t < options.max_new; ++t) {
        auto lp = dec.last_logprobs();
        std::size_t pick = 0;
        if (options.greedy) {
            for (std::size_t v = 1; v < lp.size(); ++v) {
                if (lp[v] > lp[pick]) pick = v;
            }
        } else if (options.temperature == 1.0) {
            for (std::size_t v = 0; v < lp.size(); ++v) weights[v] = std::exp(lp[v]);
            pick = rng.categorical(weights);
        } else {
            for (std::size_t v = 0; v < lp.size(); ++v) weights[v] = lp[v] / options.temperature;
            kn::log_softmax_row(weights, weights);
            for (double& v : weights) v = std::exp(v);
            pick = rng.categorical(weights);
        }
        const auto token = static_cast<TokenId>(pick);
        out.tokens.push_back(token);
        out.logprobs.push_back(lp[pick]);
        if (token == tok::kEnd) return out;
        if (t + 1 < options.max_new) dec.push(token, static_cast<std::int32_t>(x_len + t));
    }
    out.truncated = true;
    return out;
}

} // namespace cepo::policy
