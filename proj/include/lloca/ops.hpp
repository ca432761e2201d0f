#pragma once

#include <memory>
#include <vector>

#include "lloca/autodiff.hpp"
#include "lloca/tensor_rep.hpp"

// Differentiable primitives. Binary elementwise ops broadcast (r,c) against
// (r,c), (r,1), (1,c) or (1,1). Shape mismatches throw ShapeError.
namespace lloca::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var neg(Var x);
Var sqrt(Var x);
Var exp(Var x);
Var log(Var x);
Var abs(Var x);
Var relu(Var x);
Var gelu(Var x); // exact Gaussian-CDF form

Var sum(Var x);      // -> (1,1)
Var mean(Var x);     // -> (1,1)
Var sum_cols(Var x); // -> (r,1)
Var sum_rows(Var x); // -> (1,c)

/// Sums consecutive blocks of `group` rows: (r,c) -> (r/group, c).
Var group_sum(Var x, int group);
/// Repeats every row `times` times: (r,c) -> (r*times, c). Adjoint of group_sum.
Var repeat_rows(Var x, int times);
Var gather_rows(Var x, std::shared_ptr<const std::vector<int>> index);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, int start, int count);

Var matmul(Var a, Var b);
/// x W + b with b of shape (1, out).
Var linear(Var x, Var w, Var b);

/// Softmax along each row.
Var softmax(Var x);
/// Softmax over each block of `group` consecutive rows, independently per column.
Var group_softmax(Var x, int group);

/// Per-row normalisation over the channel axis, then gamma * xhat + beta.
Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);

// ---- Minkowski geometry on batched rows ------------------------------------

/// (r,4) x (r,4) -> (r,1), signature (+,-,-,-).
Var mink_product(Var x, Var y);
/// (r,3) x (r,3) -> (r,3)
Var cross_product(Var a, Var b);
/// (r,4) -> (r,16): rest-frame boost B(v) for every row, row-major 4x4.
Var boost_assembly(Var v);
/// Row-wise 4x4 products: (r,16) x (r,16) -> (r,16).
Var bmm4(Var a, Var b);
/// Row-wise 4x4 times four-vector: (r,16) x (r,4) -> (r,4).
Var bmv4(Var a, Var x);
Var transpose4(Var a);
/// g A^T g per row.
Var lorentz_inverse4(Var a);
/// Completes an orthonormal triple (r,4)^3 -> (r,4) via eps_{0123} = +1.
Var levi_civita(Var u0, Var u1, Var u2);

/// rho(M_r) applied to every row of x, whose columns hold consecutive copies
/// of `spec`: (r,16) x (r, k*dim) -> (r, k*dim).
Var apply_rep_rows(Var m, Var x, const RepSpec& spec);

/// Fused multi-head attention inside groups of `group` consecutive rows.
/// logits_ij = sum_c q_ic s_c k_jc / sqrt(d) with per-channel signs `signs` (size d).
Var group_attention(Var q, Var k, Var v, int group, int heads, std::shared_ptr<const std::vector<double>> signs);

/// Attention weights of group_attention for inspection: (groups*heads*group, group).
Tensor group_attention_weights(const Tensor& q, const Tensor& k, int group, int heads, const std::vector<double>& signs);

/// w (r*group, kk), p (r*group, 4) -> (r, 4*kk); out[i, 4a+mu] = sum_j w[(i,j),a] p[(i,j),mu].
Var group_weighted_vectors(Var w, Var p, int group);

/// mean((pred - target)^2)
Var mse(Var pred, Var target);

} // namespace lloca::ad
