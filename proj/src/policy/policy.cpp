// SPDX-License-Identifier: Apache-2.0
#include "cepo/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cepo::policy {

using ad::Tape;
using ad::Tensor;

void PolicyConfig::validate() const {
    if (vocab_size == 0 || max_seq_len == 0 || max_ref_len == 0 || n_layers == 0 || n_heads == 0 ||
        d_model == 0 || d_ff == 0) {
        throw std::invalid_argument("PolicyConfig: all sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("PolicyConfig: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
}

namespace {

Tensor normal_tensor(ad::Shape shape, double stddev, RngStream& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& v : t.mutable_values()) v = stddev * rng.normal();
    return t;
}

Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0, true); }
Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }

constexpr const char* kConfigName = "config";

} // namespace

PolicyParams PolicyParams::init(const PolicyConfig& config, std::uint64_t seed) {
    config.validate();
    RngStream rng(derive_seed(seed, {0x1A17}));
    const std::size_t d = config.d_model, f = config.d_ff, v = config.vocab_size;
    const double std0 = 0.02;
    const double std_out = std0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
    PolicyParams p;
    p.config_ = config;
    p.token_embedding = normal_tensor({v, d}, std0, rng);
    p.position_embedding = normal_tensor({config.max_seq_len + config.max_ref_len, d}, std0, rng);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerParams L;
        L.ln1_gain = ones(d);
        L.ln1_bias = zeros(d);
        L.w_qkv = normal_tensor({d, 3 * d}, std0, rng);
        L.b_qkv = zeros(3 * d);
        L.w_out = normal_tensor({d, d}, std_out, rng);
        L.b_out = zeros(d);
        L.ln2_gain = ones(d);
        L.ln2_bias = zeros(d);
        L.w_ff1 = normal_tensor({d, f}, std0, rng);
        L.b_ff1 = zeros(f);
        L.w_ff2 = normal_tensor({f, d}, std_out, rng);
        L.b_ff2 = zeros(d);
        p.layers.push_back(std::move(L));
    }
    p.final_gain = ones(d);
    p.final_bias = zeros(d);
    p.head_w = normal_tensor({d, v}, std0, rng);
    p.head_b = zeros(v);
    return p;
}

ad::TensorList PolicyParams::named() const {
    ad::TensorList out{{"token_embedding", token_embedding}, {"position_embedding", position_embedding}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        out.push_back({pre + "ln1_gain", L.ln1_gain});
        out.push_back({pre + "ln1_bias", L.ln1_bias});
        out.push_back({pre + "w_qkv", L.w_qkv});
        out.push_back({pre + "b_qkv", L.b_qkv});
        out.push_back({pre + "w_out", L.w_out});
        out.push_back({pre + "b_out", L.b_out});
        out.push_back({pre + "ln2_gain", L.ln2_gain});
        out.push_back({pre + "ln2_bias", L.ln2_bias});
        out.push_back({pre + "w_ff1", L.w_ff1});
        out.push_back({pre + "b_ff1", L.b_ff1});
        out.push_back({pre + "w_ff2", L.w_ff2});
        out.push_back({pre + "b_ff2", L.b_ff2});
    }
    out.push_back({"final_gain", final_gain});
    out.push_back({"final_bias", final_bias});
    out.push_back({"head_w", head_w});
    out.push_back({"head_b", head_b});
    return out;
}

std::vector<Tensor> PolicyParams::tensors() const {
    std::vector<Tensor> out;
    for (auto& nt : named()) out.push_back(nt.tensor);
    return out;
}

std::size_t PolicyParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.numel();
    return n;
}

PolicyParams PolicyParams::clone() const {
    PolicyParams p = *this;
    p.token_embedding = token_embedding.clone();
    p.position_embedding = position_embedding.clone();
    for (auto& L : p.layers) {
        for (Tensor* t : {&L.ln1_gain, &L.ln1_bias, &L.w_qkv, &L.b_qkv, &L.w_out, &L.b_out, &L.ln2_gain,
                          &L.ln2_bias, &L.w_ff1, &L.b_ff1, &L.w_ff2, &L.b_ff2}) {
            *t = t->clone();
        }
    }
    p.final_gain = final_gain.clone();
    p.final_bias = final_bias.clone();
    p.head_w = head_w.clone();
    p.head_b = head_b.clone();
    return p;
}

void PolicyParams::set_requires_grad(bool on) {
    for (auto t : tensors()) t.set_requires_grad(on);
}

void PolicyParams::zero_grad() {
    for (auto t : tensors()) t.clear_grad();
}

void PolicyParams::assign(const PolicyParams& other) {
    auto dst = tensors();
    auto src = other.tensors();
    if (dst.size() != src.size()) throw std::invalid_argument("PolicyParams::assign: layer count differs");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].shape() != src[i].shape()) throw ad::ShapeError("PolicyParams::assign: shape mismatch");
        std::copy(src[i].values().begin(), src[i].values().end(), dst[i].mutable_values().begin());
    }
}

void PolicyParams::save(const std::filesystem::path& path) const {
    auto list = named();
    const auto& c = config_;
    list.insert(list.begin(),
                {kConfigName, Tensor::from({7}, {double(c.vocab_size), double(c.max_seq_len), double(c.max_ref_len),
                                                 double(c.n_layers), double(c.n_heads), double(c.d_model),
                                                 double(c.d_ff)})});
    ad::save_checkpoint(path, list);
}

PolicyParams PolicyParams::load(const std::filesystem::path& path) {
    const auto list = ad::load_checkpoint(path);
    const auto& cfg = ad::find_tensor(list, kConfigName);
    if (cfg.numel() != 7) throw std::runtime_error(path.string() + ": malformed policy config entry");
    PolicyConfig c;
    auto cv = cfg.values();
    c.vocab_size = static_cast<std::size_t>(cv[0]);
    c.max_seq_len = static_cast<std::size_t>(cv[1]);
    c.max_ref_len = static_cast<std::size_t>(cv[2]);
    c.n_layers = static_cast<std::size_t>(cv[3]);
    c.n_heads = static_cast<std::size_t>(cv[4]);
    c.d_model = static_cast<std::size_t>(cv[5]);
    c.d_ff = static_cast<std::size_t>(cv[6]);
    PolicyParams p = init(c, 0);
    for (auto& nt : p.named()) {
        const Tensor& src = ad::find_tensor(list, nt.name);
        if (src.shape() != nt.tensor.shape()) {
            throw std::runtime_error(path.string() + ": tensor " + nt.name + " has shape " +
                                     ad::shape_str(src.shape()) + ", expected " + ad::shape_str(nt.tensor.shape()));
        }
        Tensor dst = nt.tensor;
        std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
    }
    return p;
}

bool params_equal(const PolicyParams& a, const PolicyParams& b) {
    auto ta = a.tensors();
    auto tb = b.tensors();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i].shape() != tb[i].shape()) return false;
        if (!std::equal(ta[i].values().begin(), ta[i].values().end(), tb[i].values().begin())) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

Tokens build_teacher_prompt(const PolicyConfig& config, std::span<const TokenId> x,
                            std::span<const TokenId> reference) {
    if (reference.empty()) throw std::invalid_argument("build_teacher_prompt: empty reference");
    if (reference.size() + 2 > config.max_ref_len) {
        throw std::length_error("build_teacher_prompt: reference of " + std::to_string(reference.size()) +
                                " tokens exceeds the " + std::to_string(config.max_ref_len) + "-slot block");
    }
    if (x.size() > config.max_seq_len) throw std::length_error("build_teacher_prompt: prompt exceeds max_seq_len");
    Tokens out(x.begin(), x.end());
    out.push_back(tok::kHint);
    out.insert(out.end(), reference.begin(), reference.end());
    out.push_back(tok::kSep);
    return out;
}

std::optional<TeacherPromptParts> strip_teacher_prompt(std::span<const TokenId> prompt) {
    auto h = std::find(prompt.begin(), prompt.end(), tok::kHint);
    if (h == prompt.end()) return std::nullopt;
    const auto hi = static_cast<std::size_t>(h - prompt.begin());
    if (hi == 0 || prompt.size() < hi + 3 || prompt.back() != tok::kSep) {
        throw std::invalid_argument("malformed teacher prompt: " + render(prompt));
    }
    TeacherPromptParts parts;
    parts.student_prompt.assign(prompt.begin(), h);
    parts.reference.assign(h + 1, prompt.end() - 1);
    return parts;
}

SequenceLayout layout_sequence(const PolicyConfig& config, std::span<const TokenId> prompt,
                               std::span<const TokenId> continuation) {
    auto check_ids = [&](std::span<const TokenId> s) {
        for (TokenId t : s) {
            if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size) {
                throw std::invalid_argument("token id " + std::to_string(t) + " outside vocabulary of " +
                                            std::to_string(config.vocab_size));
            }
        }
    };
    check_ids(prompt);
    check_ids(continuation);
    if (prompt.empty()) throw std::invalid_argument("layout_sequence: empty prompt");

    SequenceLayout L;
    L.continuation_length = continuation.size();
    const auto parts = strip_teacher_prompt(prompt);
    const std::size_t x_len = parts ? parts->student_prompt.size() : prompt.size();
    if (x_len + continuation.size() > config.max_seq_len) {
        throw std::length_error("sequence of " + std::to_string(x_len + continuation.size()) +
                                " main tokens exceeds max_seq_len " + std::to_string(config.max_seq_len));
    }
    const std::size_t fed = continuation.empty() ? 0 : continuation.size() - 1;
    L.tokens.reserve(prompt.size() + fed);
    L.positions.reserve(prompt.size() + fed);
    if (!parts) {
        for (std::size_t i = 0; i < prompt.size(); ++i) {
            L.tokens.push_back(prompt[i]);
            L.positions.push_back(static_cast<std::int32_t>(i));
        }
    } else {
        const std::size_t block_len = prompt.size() - x_len;
        if (block_len > config.max_ref_len) {
            throw std::length_error("reference block of " + std::to_string(block_len) + " tokens exceeds " +
                                    std::to_string(config.max_ref_len) + " slots");
        }
        for (std::size_t i = 0; i + 1 < x_len; ++i) {
            L.tokens.push_back(prompt[i]);
            L.positions.push_back(static_cast<std::int32_t>(i));
        }
        L.block_begin = L.tokens.size();
        for (std::size_t j = 0; j < block_len; ++j) {
            L.tokens.push_back(prompt[x_len + j]);
            L.positions.push_back(static_cast<std::int32_t>(config.max_seq_len + j));
        }
        L.block_end = L.tokens.size();
        L.tokens.push_back(prompt[x_len - 1]);
        L.positions.push_back(static_cast<std::int32_t>(x_len - 1));
    }
    L.first_prediction_row = L.tokens.size() - 1;
    for (std::size_t t = 0; t < fed; ++t) {
        L.tokens.push_back(continuation[t]);
        L.positions.push_back(static_cast<std::int32_t>(x_len + t));
    }
    return L;
}

Tensor forward_logprobs(Tape& tape, const PolicyParams& params, std::span<const TokenId> prompt,
                        std::span<const TokenId> continuation, const ForwardOptions& options) {
    if (continuation.empty()) throw std::invalid_argument("forward_logprobs: empty continuation");
    const auto& cfg = params.config();
    const SequenceLayout L = layout_sequence(cfg, prompt, continuation);
    const ad::AttentionMask mask = options.ablate_reference && L.has_block() ? L.ablation_mask() : ad::AttentionMask{};

    Tensor x = ad::add(tape, ad::embedding(tape, params.token_embedding, L.tokens),
                       ad::embedding(tape, params.position_embedding, L.positions));
    for (const auto& layer : params.layers) {
        Tensor h = ad::layer_norm(tape, x, layer.ln1_gain, layer.ln1_bias);
        Tensor qkv = ad::add_bias(tape, ad::matmul(tape, h, layer.w_qkv), layer.b_qkv);
        Tensor a = ad::causal_attention(tape, qkv, cfg.n_heads, mask);
        x = ad::add(tape, x, ad::add_bias(tape, ad::matmul(tape, a, layer.w_out), layer.b_out));
        Tensor h2 = ad::layer_norm(tape, x, layer.ln2_gain, layer.ln2_bias);
        Tensor f = ad::gelu(tape, ad::add_bias(tape, ad::matmul(tape, h2, layer.w_ff1), layer.b_ff1));
        x = ad::add(tape, x, ad::add_bias(tape, ad::matmul(tape, f, layer.w_ff2), layer.b_ff2));
    }
    Tensor rows = ad::slice_rows(tape, x, L.first_prediction_row, L.first_prediction_row + continuation.size());
    Tensor hf = ad::layer_norm(tape, rows, params.final_gain, params.final_bias);
    Tensor logits = ad::add_bias(tape, ad::matmul(tape, hf, params.head_w), params.head_b);
    return ad::log_softmax(tape, logits);
}

Tensor select_tokens(Tape& tape, const Tensor& logprob_rows, std::span<const TokenId> continuation) {
    std::vector<std::size_t> idx(continuation.begin(), continuation.end());
    return ad::gather(tape, logprob_rows, idx);
}

// ---------------------------------------------------------------------------

TeacherSource TeacherSource::actor() { return {}; }

TeacherSource TeacherSource::frozen(const PolicyParams& snapshot) {
    TeacherSource s;
    s.mode_ = TeacherMode::FrozenReference;
    s.snapshot_ = snapshot.clone();
    s.snapshot_->set_requires_grad(false);
    return s;
}

TeacherSource TeacherSource::periodic(const PolicyParams& snapshot, std::size_t sync_interval) {
    if (sync_interval == 0) throw std::invalid_argument("TeacherSource: sync_interval must be >= 1");
    TeacherSource s = frozen(snapshot);
    s.mode_ = TeacherMode::PeriodicSync;
    s.sync_interval_ = sync_interval;
    return s;
}

const PolicyParams& TeacherSource::resolve(const PolicyParams& actor) const {
    return snapshot_ ? *snapshot_ : actor;
}

void TeacherSource::after_step(std::size_t step, const PolicyParams& actor) {
    if (mode_ == TeacherMode::PeriodicSync && step % sync_interval_ == 0) snapshot_->assign(actor);
}

void TeacherSource::restore_snapshot(const PolicyParams& snapshot) {
    if (!snapshot_) throw std::logic_error("TeacherSource: actor mode holds no snapshot");
    snapshot_->assign(snapshot);
}

std::vector<double> logprobs(const ConditioningContext& ctx, std::span<const TokenId> continuation,
                             const TeacherSource& source, const PolicyParams& actor) {
    const PolicyParams& params = ctx.kind == ContextKind::Student ? actor : source.resolve(actor);
    Tokens full = ctx.prefix_tokens;
    full.insert(full.end(), continuation.begin(), continuation.end());
    Tape tape(Tape::Mode::Inference);
    Tensor lp = select_tokens(tape, forward_logprobs(tape, params, ctx.prompt_tokens, full), full);
    auto v = lp.values();
    return {v.begin() + static_cast<std::ptrdiff_t>(ctx.prefix_tokens.size()), v.end()};
}

} // namespace cepo::policy
