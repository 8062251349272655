#pragma once

#include <cstdint>
#include <vector>

#include "iclab/tape.hpp"

// Forward ops with reverse-mode gradients. Shape contracts are checked and
// violations throw ConfigError; non-finite outputs throw NumericError with
// the op name.
namespace iclab::ops {

// (m,k) @ (k,n) -> (m,n)
Var matmul(Var a, Var b);
// Batched: (N,m,k) @ (N,k,n) -> (N,m,n)
Var bmm(Var a, Var b);
// Batched with transposed rhs: (N,m,d) @ (N,n,d)^T -> (N,m,n)
Var bmm_nt(Var a, Var b);

// Same shape, or b is a rank-1 bias broadcast over the last axis of a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Elementwise product, same shape.
Var mul(Var a, Var b);
Var scale(Var a, double s);

Var relu(Var x);
Var gelu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);

// Softmax over the last axis. `mask` may be empty (no masking), match x's
// shape, or match x's trailing two axes (broadcast over leading axes). Mask
// values must be exactly 0 or 1; masked entries get output 0 and receive no
// gradient. A fully-masked row is a configuration error.
Var softmax(Var x, const Tensor& mask = Tensor());

// Layer normalization over the last axis: gain/bias are rank-1 of that size.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Row gather: table (R, D), ids in [0, R) -> (n, D). Scatter-add on backward.
Var gather_rows(Var table, const std::vector<int64_t>& ids);
inline Var embedding_lookup(Var table, const std::vector<int64_t>& ids) {
    return gather_rows(table, ids);
}

Var concat(const std::vector<Var>& xs, int axis);
// Contiguous range [start, stop) along `axis`.
Var slice(Var x, int axis, int64_t start, int64_t stop);

// 2-D transpose.
Var transpose(Var x);
// General axis permutation, rank <= 4.
Var permute(Var x, const std::vector<int>& axes);
Var reshape(Var x, std::vector<int64_t> new_shape);

// x (N,Cin,H,W), w (Cout,Cin,kh,kw), optional bias (Cout). Zero padding.
Var conv2d(Var x, Var w, Var bias, int stride, int pad);
// Global average over H and W: (N,C,H,W) -> (N,C).
Var mean_pool_hw(Var x);

// Mean over rows of -log softmax(logits)[target]: logits (N,L), N targets.
Var cross_entropy_with_logits(Var logits, const std::vector<int64_t>& targets);

Var sum_all(Var x);
Var mean_all(Var x);

// Tensor-level helpers shared with eval paths (no tape involved).
void softmax_rows_inplace(Tensor& t);

}  // namespace iclab::ops
