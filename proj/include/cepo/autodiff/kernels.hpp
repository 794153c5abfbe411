// SPDX-License-Identifier: Apache-2.0
//
// Row kernels shared by the taped operations and the incremental decoder.
// Every kernel computes one output row from its inputs with a fixed
// summation order, so the value of a row never depends on how many other rows
// are processed alongside it. That makes a cached single-token decode produce
// bit-identical numbers to a full-sequence forward pass.
#pragma once

#include <cstddef>
#include <span>

namespace cepo::ad::kernels {

/// out[j] = sum_k a[k] * b[k, j]   (b is row-major k x m)
void matvec_row(std::span<const double> a, std::span<const double> b, std::size_t m, std::span<double> out) noexcept;

/// Row-blocked [n, k] x [k, m]. Every entry is summed over k in the same order
/// as matvec_row, so results match it bit for bit.
void matmul_rows(const double* a, const double* b, std::size_t n, std::size_t k, std::size_t m, double* out) noexcept;

/// out[j] += bias[j]
void add_row(std::span<double> out, std::span<const double> bias) noexcept;

constexpr double kLayerNormEps = 1e-5;

/// Layer normalization of one row. `xhat` and `inv_std` receive the cached
/// intermediates needed by the backward pass (either may be empty).
void layer_norm_row(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                    std::span<double> out, std::span<double> xhat, double* inv_std) noexcept;

double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;

/// Log-softmax of one row with max subtraction.
void log_softmax_row(std::span<const double> x, std::span<double> out) noexcept;

/// One attention query row for one head.
///
/// Keys/values for position j start at k_base + j*stride and v_base + j*stride.
/// Keys [0, key_count) are visible except those in [blocked_begin, blocked_end).
/// `probs` (size >= key_count) receives the attention weights (0 for masked
/// keys); `out` (size head_dim) receives the weighted value sum.
void attend_row(const double* q, const double* k_base, const double* v_base, std::size_t stride,
                std::size_t head_dim, std::size_t key_count, std::size_t blocked_begin,
                std::size_t blocked_end, double scale, double* probs, double* out) noexcept;

} // namespace cepo::ad::kernels
