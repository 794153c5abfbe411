// SPDX-License-Identifier: Apache-2.0
#include "cepo/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "cepo/autodiff/kernels.hpp"

namespace cepo::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    throw ShapeError(std::string(op) + ": " + detail);
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void require_matrix(const char* op, const Tensor& x) {
    if (x.dim() != 2) shape_fail(op, "expected a matrix, got " + shape_str(x.shape()));
}

Tensor make_output(Tape& tape, Shape shape, bool track) {
    return Tensor::zeros(std::move(shape), track && tape.recording());
}

/// Adds g into t's gradient if t takes part in differentiation.
void push_grad(Tensor t, std::span<const double> g) {
    if (t.requires_grad()) t.accumulate_grad(g);
}

template <class Fwd, class Dx>
Tensor unary(Tape& tape, OpKind kind, const Tensor& x, Fwd fwd, Dx dfdx) {
    const bool track = tape.wants({&x});
    Tensor out = make_output(tape, x.shape(), track);
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
    if (track) {
        tape.record(kind, {x}, out, [dfdx](const Tape::Node& n) {
            Tensor in = n.inputs[0];
            if (!in.requires_grad()) return;
            auto g = n.output.grad();
            auto xv = in.values();
            auto ov = n.output.values();
            auto dst = in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * dfdx(xv[i], ov[i]);
        });
    }
    return out;
}

} // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        shape_fail("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const bool track = tape.wants({&a, &b});
    Tensor out = make_output(tape, {n, m}, track);
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.mutable_values();
    kernels::matmul_rows(av.data(), bv.data(), n, k, m, ov.data());
    if (track) {
        tape.record(OpKind::MatMul, {a, b}, out, [n, k, m](const Tape::Node& node) {
            Tensor a = node.inputs[0];
            Tensor b = node.inputs[1];
            const double* __restrict g = node.output.grad().data();
            if (a.requires_grad()) {
                double* __restrict da = a.ensure_grad().data();
                const double* __restrict bv = b.values().data();
                // Row-times-transpose in axpy form; each entry still sums over j in order.
                std::vector<double> bt(m * k), s(k);
                for (std::size_t kk = 0; kk < k; ++kk) {
                    for (std::size_t j = 0; j < m; ++j) bt[j * k + kk] = bv[kk * m + j];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double* grow = g + i * m;
                    std::fill(s.begin(), s.end(), 0.0);
                    for (std::size_t j = 0; j < m; ++j) {
                        const double gj = grow[j];
                        const double* __restrict btrow = bt.data() + j * k;
                        for (std::size_t kk = 0; kk < k; ++kk) s[kk] += gj * btrow[kk];
                    }
                    for (std::size_t kk = 0; kk < k; ++kk) da[i * k + kk] += s[kk];
                }
            }
            if (b.requires_grad()) {
                double* __restrict db = b.ensure_grad().data();
                const double* __restrict av = a.values().data();
                for (std::size_t kk = 0; kk < k; ++kk) {
                    double* __restrict dbrow = db + kk * m;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double aik = av[i * k + kk];
                        const double* __restrict grow = g + i * m;
                        for (std::size_t j = 0; j < m; ++j) dbrow[j] += aik * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same("add", a, b);
    const bool track = tape.wants({&a, &b});
    Tensor out = make_output(tape, a.shape(), track);
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (track) {
        tape.record(OpKind::Add, {a, b}, out, [](const Tape::Node& n) {
            push_grad(n.inputs[0], n.output.grad());
            push_grad(n.inputs[1], n.output.grad());
        });
    }
    return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
    require_matrix("add_bias", x);
    if (bias.numel() != x.cols() || bias.dim() != 1) {
        shape_fail("add_bias", "bias " + shape_str(bias.shape()) + " does not match rows of " + shape_str(x.shape()));
    }
    const std::size_t n = x.rows(), d = x.cols();
    const bool track = tape.wants({&x, &bias});
    Tensor out = make_output(tape, x.shape(), track);
    auto ov = out.mutable_values();
    std::copy(x.values().begin(), x.values().end(), ov.begin());
    for (std::size_t i = 0; i < n; ++i) kernels::add_row(ov.subspan(i * d, d), bias.values());
    if (track) {
        tape.record(OpKind::AddBias, {x, bias}, out, [n, d](const Tape::Node& node) {
            auto g = node.output.grad();
            push_grad(node.inputs[0], g);
            Tensor b = node.inputs[1];
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
            }
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same("sub", a, b);
    const bool track = tape.wants({&a, &b});
    Tensor out = make_output(tape, a.shape(), track);
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    if (track) {
        tape.record(OpKind::Sub, {a, b}, out, [](const Tape::Node& n) {
            push_grad(n.inputs[0], n.output.grad());
            Tensor b = n.inputs[1];
            if (b.requires_grad()) {
                auto g = n.output.grad();
                auto db = b.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same("mul", a, b);
    const bool track = tape.wants({&a, &b});
    Tensor out = make_output(tape, a.shape(), track);
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (track) {
        tape.record(OpKind::Mul, {a, b}, out, [](const Tape::Node& n) {
            auto g = n.output.grad();
            Tensor a = n.inputs[0];
            Tensor b = n.inputs[1];
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                auto bv = b.values();
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                auto av = a.values();
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
    return unary(tape, OpKind::Scale, x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double c) {
    return unary(tape, OpKind::AddScalar, x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor exp(Tape& tape, const Tensor& x) {
    return unary(tape, OpKind::Exp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& x) {
    return unary(tape, OpKind::Log, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tanh(Tape& tape, const Tensor& x) {
    return unary(tape, OpKind::Tanh, x, [](double v) { return std::tanh(v); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(Tape& tape, const Tensor& x) {
    return unary(tape, OpKind::Softplus, x,
                 [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
                 [](double v, double) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

Tensor relu(Tape& tape, const Tensor& x) {
    return unary(tape, OpKind::Relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(Tape& tape, const Tensor& x) {
    return unary(tape, OpKind::Gelu, x, [](double v) { return kernels::gelu(v); },
                 [](double v, double) { return kernels::gelu_grad(v); });
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
    if (!(lo <= hi)) shape_fail("clamp", "empty band [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return unary(tape, OpKind::Clamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
                 [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor minimum(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same("minimum", a, b);
    const bool track = tape.wants({&a, &b});
    Tensor out = make_output(tape, a.shape(), track);
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] <= bv[i] ? av[i] : bv[i];
    if (track) {
        tape.record(OpKind::Minimum, {a, b}, out, [](const Tape::Node& n) {
            auto g = n.output.grad();
            Tensor a = n.inputs[0];
            Tensor b = n.inputs[1];
            auto av = a.values();
            auto bv = b.values();
            if (a.requires_grad()) {
                auto da = a.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (av[i] <= bv[i]) da[i] += g[i];
            }
            if (b.requires_grad()) {
                auto db = b.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (!(av[i] <= bv[i])) db[i] += g[i];
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require_matrix("layer_norm", x);
    const std::size_t n = x.rows(), d = x.cols();
    if (gain.numel() != d || bias.numel() != d) {
        shape_fail("layer_norm", "gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                                     " do not match " + shape_str(x.shape()));
    }
    const bool track = tape.wants({&x, &gain, &bias});
    Tensor out = make_output(tape, x.shape(), track);
    auto xhat = std::make_shared<std::vector<double>>(track ? n * d : 0);
    auto inv_std = std::make_shared<std::vector<double>>(n);
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        kernels::layer_norm_row(xv.subspan(i * d, d), gain.values(), bias.values(), ov.subspan(i * d, d),
                                track ? std::span<double>(xhat->data() + i * d, d) : std::span<double>(),
                                &(*inv_std)[i]);
    }
    if (track) {
        tape.record(OpKind::LayerNorm, {x, gain, bias}, out, [n, d, xhat, inv_std](const Tape::Node& node) {
            auto g = node.output.grad();
            Tensor x = node.inputs[0];
            Tensor gain = node.inputs[1];
            Tensor bias = node.inputs[2];
            const auto& h = *xhat;
            if (gain.requires_grad()) {
                auto dg = gain.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) dg[j] += g[i * d + j] * h[i * d + j];
            }
            if (bias.requires_grad()) {
                auto db = bias.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
            }
            if (x.requires_grad()) {
                auto dx = x.ensure_grad();
                auto gv = gain.values();
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t i = 0; i < n; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = g[i * d + j] * gv[j];
                        s1 += dh;
                        s2 += dh * h[i * d + j];
                    }
                    const double is = (*inv_std)[i];
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = g[i * d + j] * gv[j];
                        dx[i * d + j] += is * (dh - inv_d * s1 - h[i * d + j] * inv_d * s2);
                    }
                }
            }
        });
    }
    return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids) {
    require_matrix("embedding", table);
    const std::size_t vocab = table.rows(), d = table.cols();
    for (std::int32_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            shape_fail("embedding", "index " + std::to_string(id) + " outside table " + shape_str(table.shape()));
        }
    }
    const bool track = tape.wants({&table});
    Tensor out = make_output(tape, {ids.size(), d}, track);
    auto tv = table.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto src = tv.subspan(static_cast<std::size_t>(ids[i]) * d, d);
        std::copy(src.begin(), src.end(), ov.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    if (track) {
        std::vector<std::int32_t> idv(ids.begin(), ids.end());
        tape.record(OpKind::Embedding, {table}, out, [idv = std::move(idv), d](const Tape::Node& node) {
            auto g = node.output.grad();
            Tensor t = node.inputs[0];
            auto dt = t.ensure_grad();
            for (std::size_t i = 0; i < idv.size(); ++i) {
                const std::size_t r = static_cast<std::size_t>(idv[i]) * d;
                for (std::size_t j = 0; j < d; ++j) dt[r + j] += g[i * d + j];
            }
        });
    }
    return out;
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
    if (x.dim() != 1 && x.dim() != 2) shape_fail("log_softmax", "expected vector or matrix, got " + shape_str(x.shape()));
    const std::size_t n = x.dim() == 2 ? x.rows() : 1;
    const std::size_t v = x.dim() == 2 ? x.cols() : x.numel();
    if (v == 0) shape_fail("log_softmax", "empty last axis in " + shape_str(x.shape()));
    const bool track = tape.wants({&x});
    Tensor out = make_output(tape, x.shape(), track);
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) kernels::log_softmax_row(xv.subspan(i * v, v), ov.subspan(i * v, v));
    if (track) {
        tape.record(OpKind::LogSoftmax, {x}, out, [n, v](const Tape::Node& node) {
            Tensor in = node.inputs[0];
            if (!in.requires_grad()) return;
            auto g = node.output.grad();
            auto y = node.output.values();
            auto dx = in.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < v; ++j) s += g[i * v + j];
                for (std::size_t j = 0; j < v; ++j) dx[i * v + j] += g[i * v + j] - std::exp(y[i * v + j]) * s;
            }
        });
    }
    return out;
}

Tensor gather(Tape& tape, const Tensor& x, std::span<const std::size_t> index) {
    require_matrix("gather", x);
    const std::size_t n = x.rows(), v = x.cols();
    if (index.size() != n) {
        shape_fail("gather", std::to_string(index.size()) + " indices for " + shape_str(x.shape()));
    }
    for (std::size_t idx : index) {
        if (idx >= v) shape_fail("gather", "index " + std::to_string(idx) + " outside " + shape_str(x.shape()));
    }
    const bool track = tape.wants({&x});
    Tensor out = make_output(tape, {n}, track);
    auto xv = x.values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i * v + index[i]];
    if (track) {
        std::vector<std::size_t> idx(index.begin(), index.end());
        tape.record(OpKind::Gather, {x}, out, [idx = std::move(idx), v](const Tape::Node& node) {
            auto g = node.output.grad();
            Tensor in = node.inputs[0];
            auto dx = in.ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) dx[i * v + idx[i]] += g[i];
        });
    }
    return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
    require_matrix("slice_rows", x);
    if (begin > end || end > x.rows()) {
        shape_fail("slice_rows", "rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                                     shape_str(x.shape()));
    }
    const std::size_t d = x.cols();
    const bool track = tape.wants({&x});
    Tensor out = make_output(tape, {end - begin, d}, track);
    auto src = x.values().subspan(begin * d, (end - begin) * d);
    std::copy(src.begin(), src.end(), out.mutable_values().begin());
    if (track) {
        tape.record(OpKind::SliceRows, {x}, out, [begin, d](const Tape::Node& node) {
            auto g = node.output.grad();
            Tensor in = node.inputs[0];
            auto dx = in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) dx[begin * d + i] += g[i];
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        shape_fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    const bool track = tape.wants({&x});
    Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()),
                              track);
    if (track) {
        tape.record(OpKind::Reshape, {x}, out, [](const Tape::Node& node) { push_grad(node.inputs[0], node.output.grad()); });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    const bool track = tape.wants({&x});
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor out = Tensor::scalar(s, track);
    if (track) {
        tape.record(OpKind::Sum, {x}, out, [](const Tape::Node& node) {
            const double g = node.output.grad()[0];
            Tensor in = node.inputs[0];
            for (double& d : in.ensure_grad()) d += g;
        });
    }
    return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
    if (x.numel() == 0) shape_fail("mean", "empty tensor");
    const bool track = tape.wants({&x});
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(s * inv, track);
    if (track) {
        tape.record(OpKind::Mean, {x}, out, [inv](const Tape::Node& node) {
            const double g = node.output.grad()[0] * inv;
            Tensor in = node.inputs[0];
            for (double& d : in.ensure_grad()) d += g;
        });
    }
    return out;
}

Tensor causal_attention(Tape& tape, const Tensor& qkv, std::size_t n_heads, const AttentionMask& mask) {
    require_matrix("causal_attention", qkv);
    const std::size_t n = qkv.rows(), w = qkv.cols();
    if (n_heads == 0 || w % (3 * n_heads) != 0) {
        shape_fail("causal_attention", "packed width of " + shape_str(qkv.shape()) + " not divisible into 3 x " +
                                           std::to_string(n_heads) + " heads");
    }
    const std::size_t d = w / 3, hd = d / n_heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
    const bool track = tape.wants({&qkv});
    Tensor out = make_output(tape, {n, d}, track);
    // probs[h][i][j], j <= i
    auto probs = std::make_shared<std::vector<double>>(n_heads * n * n, 0.0);
    const double* base = qkv.values().data();
    double* ov = out.mutable_values().data();
    for (std::size_t h = 0; h < n_heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool masked = mask.key_end > mask.key_begin && i >= mask.query_from;
            kernels::attend_row(base + i * w + h * hd, base + d + h * hd, base + 2 * d + h * hd, w, hd, i + 1,
                                masked ? mask.key_begin : 0, masked ? mask.key_end : 0, sc,
                                probs->data() + (h * n + i) * n, ov + i * d + h * hd);
        }
    }
    if (track) {
        tape.record(OpKind::CausalAttention, {qkv}, out, [n, w, d, hd, n_heads, sc, probs](const Tape::Node& node) {
            Tensor in = node.inputs[0];
            if (!in.requires_grad()) return;
            const double* g = node.output.grad().data();
            const double* x = in.values().data();
            double* dx = in.ensure_grad().data();
            std::vector<double> dp(n);
            for (std::size_t h = 0; h < n_heads; ++h) {
                const std::size_t qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
                for (std::size_t i = 0; i < n; ++i) {
                    const double* p = probs->data() + (h * n + i) * n;
                    const double* gi = g + i * d + h * hd;
                    double dot = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        if (p[j] == 0.0) {
                            dp[j] = 0.0;
                            continue;
                        }
                        const double* vj = x + j * w + vo;
                        double* dvj = dx + j * w + vo;
                        double s = 0.0;
                        for (std::size_t c = 0; c < hd; ++c) {
                            s += gi[c] * vj[c];
                            dvj[c] += p[j] * gi[c];
                        }
                        dp[j] = s;
                        dot += p[j] * s;
                    }
                    const double* qi = x + i * w + qo;
                    double* dqi = dx + i * w + qo;
                    for (std::size_t j = 0; j <= i; ++j) {
                        if (p[j] == 0.0) continue;
                        const double ds = p[j] * (dp[j] - dot) * sc;
                        const double* kj = x + j * w + ko;
                        double* dkj = dx + j * w + ko;
                        for (std::size_t c = 0; c < hd; ++c) {
                            dqi[c] += ds * kj[c];
                            dkj[c] += ds * qi[c];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor stop_gradient(Tape& tape, const Tensor& x) {
    std::vector<double> v;
    if (tape.replaying_stop_gradients()) {
        const auto* frozen = tape.next_frozen_stop_gradient();
        if (frozen->size() != x.numel()) {
            shape_fail("stop_gradient", "replayed value has " + std::to_string(frozen->size()) +
                                            " elements, input " + shape_str(x.shape()));
        }
        v = *frozen;
    } else {
        v.assign(x.values().begin(), x.values().end());
        if (tape.logging_stop_gradients()) tape.log_stop_gradient(v);
    }
    Tensor out = Tensor::from(x.shape(), std::move(v), false);
    if (tape.wants({&x})) {
        tape.record(OpKind::StopGradient, {x}, out, [](const Tape::Node&) {});
    }
    return out;
}

Tensor detach(const Tensor& x) {
    return Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), false);
}

} // namespace cepo::ad
