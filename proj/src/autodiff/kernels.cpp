// SPDX-License-Identifier: Apache-2.0
#include "cepo/autodiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cepo::ad::kernels {

void matvec_row(std::span<const double> a, std::span<const double> b, std::size_t m, std::span<double> out) noexcept {
    std::fill(out.begin(), out.end(), 0.0);
    double* __restrict o = out.data();
    const double* __restrict bp = b.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double ak = a[k];
        const double* __restrict brow = bp + k * m;
        for (std::size_t j = 0; j < m; ++j) {
            o[j] += ak * brow[j];
        }
    }
}

void matmul_rows(const double* a, const double* b, std::size_t n, std::size_t k, std::size_t m, double* out) noexcept {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        double* __restrict o0 = out + i * m;
        double* __restrict o1 = o0 + m;
        double* __restrict o2 = o1 + m;
        double* __restrict o3 = o2 + m;
        std::fill(o0, o0 + 4 * m, 0.0);
        const double* a0 = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double x0 = a0[kk], x1 = a0[k + kk], x2 = a0[2 * k + kk], x3 = a0[3 * k + kk];
            const double* __restrict brow = b + kk * m;
            for (std::size_t j = 0; j < m; ++j) {
                const double bj = brow[j];
                o0[j] += x0 * bj;
                o1[j] += x1 * bj;
                o2[j] += x2 * bj;
                o3[j] += x3 * bj;
            }
        }
    }
    for (; i < n; ++i) matvec_row({a + i * k, k}, {b, k * m}, m, {out + i * m, m});
}

void add_row(std::span<double> out, std::span<const double> bias) noexcept {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += bias[j];
}

void layer_norm_row(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                    std::span<double> out, std::span<double> xhat, double* inv_std) noexcept {
    const std::size_t d = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
        const double h = (x[j] - mean) * is;
        if (!xhat.empty()) xhat[j] = h;
        out[j] = gain[j] * h + bias[j];
    }
    if (inv_std) *inv_std = is;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

double gelu(double x) noexcept {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) noexcept {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void log_softmax_row(std::span<const double> x, std::span<double> out) noexcept {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - lse;
}

void attend_row(const double* q, const double* k_base, const double* v_base, std::size_t stride,
                std::size_t head_dim, std::size_t key_count, std::size_t blocked_begin,
                std::size_t blocked_end, double scale, double* probs, double* out) noexcept {
    auto visible = [&](std::size_t j) { return j < blocked_begin || j >= blocked_end; };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < key_count; ++j) {
        if (!visible(j)) {
            probs[j] = 0.0;
            continue;
        }
        const double* k = k_base + j * stride;
        double s = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) s += q[c] * k[c];
        s *= scale;
        probs[j] = s;
        mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < key_count; ++j) {
        if (!visible(j)) continue;
        probs[j] = std::exp(probs[j] - mx);
        z += probs[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t c = 0; c < head_dim; ++c) out[c] = 0.0;
    for (std::size_t j = 0; j < key_count; ++j) {
        if (!visible(j)) continue;
        probs[j] *= inv;
        const double p = probs[j];
        const double* v = v_base + j * stride;
        for (std::size_t c = 0; c < head_dim; ++c) out[c] += p * v[c];
    }
}

} // namespace cepo::ad::kernels
