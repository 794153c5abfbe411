// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Each function computes its output eagerly and, when
// the tape is recording and some input requires grad, appends a node to the
// tape. Shape mismatches throw ShapeError naming the operation and shapes.
//
// Broadcasting is limited to add_bias (a row vector added to every row of a
// matrix); everything else needs exactly matching shapes or an explicit reshape.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cepo/autodiff/tensor.hpp"

namespace cepo::ad {

/// [n, k] x [k, m] -> [n, m]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// [n, d] + [d] -> [n, d]
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);
Tensor add_scalar(Tape& tape, const Tensor& x, double c);

Tensor exp(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor gelu(Tape& tape, const Tensor& x);
/// Elementwise clip to [lo, hi]; gradient passes only strictly inside the band.
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);
/// Elementwise minimum; ties send the gradient to `a`.
Tensor minimum(Tape& tape, const Tensor& a, const Tensor& b);

/// Layer normalization over the last axis of [n, d] with gain/bias [d].
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Row gather from a [V, d] table -> [ids.size(), d].
Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids);

/// Log-softmax over the last axis of a [n, V] matrix (or a [V] vector).
Tensor log_softmax(Tape& tape, const Tensor& x);

/// out[i] = x[i, index[i]] for a [n, V] matrix -> [n].
Tensor gather(Tape& tape, const Tensor& x, std::span<const std::size_t> index);

/// Rows [begin, end) of a [n, d] matrix.
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

/// Keys hidden from a range of queries. Queries with index >= query_from do not
/// see keys in [key_begin, key_end). The default hides nothing.
struct AttentionMask {
    std::size_t key_begin = 0;
    std::size_t key_end = 0;
    std::size_t query_from = 0;
};

/// Multi-head causal self-attention over a packed [n, 3*d] projection laid out
/// as [q | k | v], each d = n_heads * head_dim wide. Returns [n, d].
Tensor causal_attention(Tape& tape, const Tensor& qkv, std::size_t n_heads, const AttentionMask& mask = {});

/// Same values as `x`, but no gradient flows back through the result.
Tensor stop_gradient(Tape& tape, const Tensor& x);

/// Stop-gradient outside of any tape (for values computed without one).
Tensor detach(const Tensor& x);

} // namespace cepo::ad
